//! Pure stage functions. Each takes in-memory inputs and returns its
//! product; file handling lives in the parent module.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DownsampleConfig, DownsamplePolicy, ExtractorConfig, PipelineConfig, SeedMode, TestsConfig};
use crate::calibration::{fit_variance_curve, variance, CalibrationFit, CalibrationPoint, EntropyBudget, VACUUM_VARIANCE};
use crate::dsp::{apply_filter, autocorrelation, envelope_zero_lag, filter_decimate, first_zero_lag, AcfProfile, FilterKernel};
use crate::error::{Error, Result};
use crate::extractor::toeplitz::{deterministic_seed, load_seed, os_seed};
use crate::extractor::{check_dimensions, choose_dimensions, samples_to_bits, BitBuf, Dimensions, ToeplitzHasher, ToeplitzSpec};
use crate::source_sim::{simulate_trace, sweep_seed, AdcSpec, PerQuadrature, RawTrace};
use crate::stattests::{compare_acf, run_battery_with, AcfComparison, TestReport};
use crate::trace_file::{ingest_auto, ingest_trace};

/// Simulates or ingests the raw trace.
pub fn acquire(cfg: &PipelineConfig) -> Result<RawTrace> {
    match &cfg.source.input {
        Some(path) => ingest_trace(path, &cfg.trace_format()?),
        None => simulate_trace(&cfg.source_params()?, &cfg.adc()?, cfg.source.samples, cfg.source.seed),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownsampleDecision {
    pub policy: DownsamplePolicy,
    pub factor: usize,
    pub phase: usize,
    /// First lag with `r <= 0`.
    pub first_zero_lag: Option<usize>,
    /// First null of the autocorrelation envelope.
    pub envelope_zero_lag: Option<usize>,
    /// Autocorrelation of the filtered full-rate signal, averaged over p and q.
    pub acf: AcfProfile,
}

/// Measures the filtered autocorrelation and picks the decimation factor.
pub fn analyse_downsampling(trace: &RawTrace, kernel: &FilterKernel, cfg: &DownsampleConfig) -> Result<DownsampleDecision> {
    let take = (cfg.analysis_samples + kernel.len() - 1).min(trace.len());
    let profiles = [&trace.p_codes, &trace.q_codes]
        .par_iter()
        .map(|ch| autocorrelation(&apply_filter(&ch[..take], kernel)?, cfg.max_lag))
        .collect::<Result<Vec<_>>>()?;
    let acf = AcfProfile {
        values: profiles[0].values.iter().zip(&profiles[1].values).map(|(a, b)| 0.5 * (a + b)).collect(),
        ..profiles[0].clone()
    };
    let first = first_zero_lag(&acf).ok();
    let envelope = envelope_zero_lag(&acf);
    let factor = match cfg.policy {
        DownsamplePolicy::AutoFirstZero => envelope.as_ref().map_err(|_| Error::NoZeroCrossing { max_lag: cfg.max_lag }).copied()?,
        DownsamplePolicy::Fixed => cfg.factor.ok_or_else(|| Error::Config("downsample.factor is required".into()))?,
    };
    if cfg.phase >= factor {
        return Err(Error::InvalidParameter(format!("phase {} must be below factor {factor}", cfg.phase)));
    }
    Ok(DownsampleDecision {
        policy: cfg.policy,
        factor,
        phase: cfg.phase,
        first_zero_lag: first,
        envelope_zero_lag: envelope.ok(),
        acf,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub points: Vec<CalibrationPoint>,
    pub fit: CalibrationFit,
    pub operating_photocurrent: f64,
    /// Filtered variance per point is measured on this many samples.
    pub samples_per_point: usize,
}

impl CalibrationResult {
    /// Entropy budget for decimated output at `pair_rate`.
    pub fn budget(&self, adc: &AdcSpec, pair_rate: f64) -> Result<EntropyBudget> {
        EntropyBudget::from_fit(&self.fit, self.operating_photocurrent, adc, pair_rate)
    }

    /// Fitted variance at the operating point in vacuum units.
    pub fn vacuum_variance(&self) -> PerQuadrature<f64> {
        let i = self.operating_photocurrent;
        PerQuadrature::new(
            VACUUM_VARIANCE * (self.fit.slope_p * i + self.fit.intercept_p) / (self.fit.slope_p * i),
            VACUUM_VARIANCE * (self.fit.slope_q * i + self.fit.intercept_q) / (self.fit.slope_q * i),
        )
    }
}

/// Filtered variance of each quadrature.
pub fn calibration_point(trace: &RawTrace, kernel: &FilterKernel) -> Result<CalibrationPoint> {
    let var = |ch: &[i16]| apply_filter(ch, kernel).map(|f| variance(&f));
    Ok(CalibrationPoint {
        photocurrent: trace.photocurrent,
        var_p: var(&trace.p_codes)?,
        var_q: var(&trace.q_codes)?,
    })
}

/// Sweep currents: explicit, or evenly spaced up to the operating current.
pub fn sweep_currents(cfg: &PipelineConfig, operating: f64) -> Vec<f64> {
    match &cfg.calibration.currents_a {
        Some(c) => c.clone(),
        None => {
            let n = cfg.calibration.points;
            let lo = cfg.calibration.min_fraction * operating;
            (0..n).map(|i| lo + (operating - lo) * i as f64 / (n - 1) as f64).collect()
        }
    }
}

/// Runs (or reads) the calibration sweep and fits variance against current.
pub fn calibrate(cfg: &PipelineConfig, source_photocurrent: f64, kernel: &FilterKernel) -> Result<CalibrationResult> {
    let operating = cfg.calibration.operating_photocurrent_a.unwrap_or(source_photocurrent);
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(operating > 0.0) {
        return Err(Error::NoCertifiableRandomness(format!(
            "operating photocurrent is {operating} A: with the laser off the output carries no quantum entropy"
        )));
    }
    let points = match &cfg.calibration.trace_files {
        Some(files) => files
            .par_iter()
            .map(|f| calibration_point(&ingest_auto(f)?, kernel))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let params = cfg.source_params()?;
            let adc = cfg.adc()?;
            let n = cfg.calibration.samples_per_point;
            sweep_currents(cfg, operating)
                .par_iter()
                .enumerate()
                .map(|(i, &current)| {
                    let trace = simulate_trace(&params.with_photocurrent(current), &adc, n, sweep_seed(cfg.calibration.seed, i))?;
                    calibration_point(&trace, kernel)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let fit = fit_variance_curve(&points)?;
    Ok(CalibrationResult {
        points,
        fit,
        operating_photocurrent: operating,
        samples_per_point: cfg.calibration.samples_per_point,
    })
}

/// Filters, decimates and re-quantizes to the ADC code range.
pub fn condition(trace: &RawTrace, kernel: &FilterKernel, factor: usize, phase: usize) -> Result<RawTrace> {
    let adc = trace.adc;
    let channels = [&trace.p_codes, &trace.q_codes]
        .par_iter()
        .map(|ch| {
            let f = filter_decimate(ch, kernel, factor, phase)?;
            Ok(f.iter().map(|v| adc.clamp_code(v.round() as i64)).collect::<Vec<i16>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let [p_codes, q_codes]: [Vec<i16>; 2] = channels.try_into().expect("two channels");
    Ok(RawTrace {
        p_codes,
        q_codes,
        adc: AdcSpec {
            sample_rate: adc.sample_rate / factor as f64,
            ..adc
        },
        photocurrent: trace.photocurrent,
        seed: trace.seed,
    })
}

pub fn pack(conditioned: &RawTrace) -> Result<BitBuf> {
    samples_to_bits(&conditioned.p_codes, &conditioned.q_codes, conditioned.adc.bits)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub dimensions: Dimensions,
    pub target_eps_exp: f64,
    pub seed_mode: SeedMode,
    pub insecure_allow: bool,
    pub input_bits: usize,
    pub blocks: usize,
    pub output_bits: usize,
    pub formula: String,
}

pub struct Extraction {
    pub summary: ExtractionSummary,
    pub spec: ToeplitzSpec,
    pub output: BitBuf,
}

pub const EPS_FORMULA: &str = "eps_exp = (n * h_min / raw_bits - m) / 2";

/// Hash dimensions for the budget: explicit `m` or the largest admissible.
pub fn extraction_dimensions(cfg: &ExtractorConfig, h_min: f64, raw_bits: u32) -> Result<Dimensions> {
    let dims = match cfg.m {
        Some(m) => check_dimensions(h_min, raw_bits, cfg.n, m)?,
        None => choose_dimensions(h_min, raw_bits, cfg.n, cfg.target_eps_exp)?,
    };
    if !dims.ratio_ok && !cfg.insecure_allow {
        return Err(Error::InvalidParameter(format!(
            "ratio condition fails: m/n = {:.6} is not below h_min/raw_bits = {:.6} (set insecure_allow to run anyway)",
            dims.compression(),
            h_min / raw_bits as f64
        )));
    }
    Ok(dims)
}

pub fn extraction_seed(cfg: &ExtractorConfig, len: usize) -> Result<BitBuf> {
    match cfg.seed_mode {
        SeedMode::Deterministic => Ok(deterministic_seed(len, cfg.seed)),
        SeedMode::File => {
            let path = cfg.seed_file.as_ref().ok_or_else(|| Error::Config("extractor.seed_file is required".into()))?;
            load_seed(path, len)
        }
        SeedMode::Os => os_seed(len),
    }
}

pub fn extract(cfg: &ExtractorConfig, h_min: f64, raw_bits: u32, bits: &BitBuf) -> Result<Extraction> {
    let dims = extraction_dimensions(cfg, h_min, raw_bits)?;
    let seed = extraction_seed(cfg, dims.n + dims.m - 1)?;
    let spec = ToeplitzSpec::from_dimensions(&dims, seed)?;
    let output = ToeplitzHasher::new(&spec).extract(bits)?;
    Ok(Extraction {
        summary: ExtractionSummary {
            dimensions: dims,
            target_eps_exp: cfg.target_eps_exp,
            seed_mode: cfg.seed_mode,
            insecure_allow: cfg.insecure_allow,
            input_bits: bits.len(),
            blocks: bits.len() / dims.n,
            output_bits: output.len(),
            formula: EPS_FORMULA.into(),
        },
        spec,
        output,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub battery: Option<TestReport>,
    pub acf: AcfComparison,
}

/// Battery on the extracted bits plus the before/after autocorrelation.
pub fn validate_output(cfg: &TestsConfig, conditioned: &RawTrace, extracted: &BitBuf) -> Result<Validation> {
    let before_len = cfg.acf_samples.min(conditioned.len());
    let after = extracted.slice(0, cfg.acf_samples.min(extracted.len()));
    let acf = compare_acf(&conditioned.p_codes[..before_len], &after, cfg.acf_max_lag)?;
    let battery = if cfg.enabled {
        let available = extracted.len() / cfg.stream_bits;
        let streams = if available >= cfg.n_streams {
            cfg.n_streams
        } else if cfg.allow_fewer_streams && available >= 1 {
            available
        } else {
            return Err(Error::InsufficientData {
                needed: cfg.stream_bits * cfg.n_streams,
                got: extracted.len(),
            });
        };
        Some(run_battery_with(extracted, cfg.stream_bits, streams, cfg.alpha)?)
    } else {
        None
    };
    Ok(Validation { battery, acf })
}
