//! Synthetic heterodyne entropy source.
//!
//! Each quadrature is the sum of three independent Gaussian processes:
//!
//! * LO-dependent noise (quantum shot noise plus classical excess noise),
//!   white with variance `quantum_slope * photocurrent + classical_noise_var`
//!   and shaped by a single-pole low-pass at the TIA bandwidth;
//! * a white electronic noise floor that is present with the laser off;
//! * low-frequency technical noise, only present with the laser on, made by
//!   pushing white noise through two cascaded poles at its cutoff.
//!
//! The shaping filters are normalised to unit power gain, so the configured
//! variances are the per-sample variances of the analog signal. The analog
//! sum is then quantized by a mid-tread ADC model.
//!
//! White noise is drawn from ChaCha12 in fixed-size chunks. Every chunk has
//! its own stream id derived from (quadrature, component, chunk index), so the
//! output does not depend on how many worker threads fill the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::seeds;

/// Samples per independently seeded RNG chunk.
pub const CHUNK: usize = 1 << 16;
const BATCH_CHUNKS: usize = 16;
const MAX_BURN_IN: usize = 1 << 22;

/// ADC model: resolution, full-scale span and sampling rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcSpec {
    /// Resolution in bits (N).
    pub bits: u32,
    /// Full-scale voltage span R_adc in volts.
    pub full_scale: f64,
    /// Samples per second.
    pub sample_rate: f64,
}

impl AdcSpec {
    pub fn new(bits: u32, full_scale: f64, sample_rate: f64) -> Result<Self> {
        let adc = Self {
            bits,
            full_scale,
            sample_rate,
        };
        adc.validate()?;
        Ok(adc)
    }

    /// Codes are stored as `i16`, so at most 16 bits are supported.
    pub fn validate(&self) -> Result<()> {
        ensure((2..=16).contains(&self.bits), || {
            format!("ADC bits must be in 2..=16, got {}", self.bits)
        })?;
        ensure(self.full_scale.is_finite() && self.full_scale > 0.0, || {
            format!("full scale must be positive, got {}", self.full_scale)
        })?;
        ensure(self.sample_rate.is_finite() && self.sample_rate > 0.0, || {
            format!("sample rate must be positive, got {}", self.sample_rate)
        })
    }

    /// One least-significant bit in volts.
    pub fn lsb(&self) -> f64 {
        self.full_scale / (1u64 << self.bits) as f64
    }

    pub fn max_code(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }

    pub fn min_code(&self) -> i32 {
        -(1i32 << (self.bits - 1))
    }

    pub fn clamp_code(&self, code: i64) -> i16 {
        code.clamp(self.min_code() as i64, self.max_code() as i64) as i16
    }
}

/// Mid-tread uniform quantizer with step `R_adc / 2^N`, saturating at the
/// code range of the ADC.
pub fn quantize(v: f64, adc: &AdcSpec) -> i32 {
    let code = (v / adc.lsb()).round();
    if code.is_nan() {
        return 0;
    }
    code.clamp(adc.min_code() as f64, adc.max_code() as f64) as i32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    P,
    Q,
}

impl Quadrature {
    pub const BOTH: [Quadrature; 2] = [Quadrature::P, Quadrature::Q];

    fn index(self) -> u64 {
        match self {
            Quadrature::P => 0,
            Quadrature::Q => 1,
        }
    }
}

/// A value per quadrature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerQuadrature<T> {
    pub p: T,
    pub q: T,
}

impl<T> PerQuadrature<T> {
    pub fn new(p: T, q: T) -> Self {
        Self { p, q }
    }

    pub fn get(&self, quadrature: Quadrature) -> &T {
        match quadrature {
            Quadrature::P => &self.p,
            Quadrature::Q => &self.q,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> PerQuadrature<U> {
        PerQuadrature {
            p: f(self.p),
            q: f(self.q),
        }
    }
}

impl<T: Copy> PerQuadrature<T> {
    pub fn splat(v: T) -> Self {
        Self { p: v, q: v }
    }
}

/// Low-frequency technical noise that appears with the laser switched on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowFreqNoise {
    /// RMS amplitude in volts.
    pub amplitude: f64,
    /// Corner frequency in Hz.
    pub cutoff: f64,
}

impl LowFreqNoise {
    pub const NONE: LowFreqNoise = LowFreqNoise {
        amplitude: 0.0,
        cutoff: 1.0e6,
    };
}

/// Physical parameters of the simulated black box at one operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// DC photocurrent at the reference photodiode, amperes.
    pub photocurrent: f64,
    /// Shot-noise variance per unit photocurrent, V^2/A.
    pub quantum_slope: PerQuadrature<f64>,
    /// Classical excess noise shaped by the TIA, V^2.
    pub classical_noise_var: PerQuadrature<f64>,
    /// White electronic floor, V^2.
    pub electronic_noise_var: PerQuadrature<f64>,
    pub lowfreq_noise: LowFreqNoise,
    /// 3 dB point of the single-pole TIA response, Hz.
    pub tia_bandwidth: f64,
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            ensure(v.is_finite() && v >= 0.0, || {
                format!("{name} must be finite and non-negative, got {v}")
            })
        };
        finite_nonneg("photocurrent", self.photocurrent)?;
        for q in Quadrature::BOTH {
            finite_nonneg("quantum_slope", *self.quantum_slope.get(q))?;
            finite_nonneg("classical_noise_var", *self.classical_noise_var.get(q))?;
            finite_nonneg("electronic_noise_var", *self.electronic_noise_var.get(q))?;
        }
        finite_nonneg("lowfreq amplitude", self.lowfreq_noise.amplitude)?;
        ensure(
            self.lowfreq_noise.cutoff.is_finite() && self.lowfreq_noise.cutoff > 0.0,
            || format!("lowfreq cutoff must be positive, got {}", self.lowfreq_noise.cutoff),
        )?;
        ensure(self.tia_bandwidth.is_finite() && self.tia_bandwidth > 0.0, || {
            format!("tia_bandwidth must be positive, got {}", self.tia_bandwidth)
        })
    }

    pub fn with_photocurrent(&self, photocurrent: f64) -> Self {
        Self {
            photocurrent,
            ..self.clone()
        }
    }

    /// Variance of the TIA-shaped LO-dependent component, V^2.
    pub fn shaped_variance(&self, q: Quadrature) -> f64 {
        self.quantum_slope.get(q) * self.photocurrent + self.classical_noise_var.get(q)
    }

    pub fn lowfreq_active(&self) -> bool {
        self.photocurrent > 0.0 && self.lowfreq_noise.amplitude > 0.0
    }

    /// Total per-sample analog variance of one quadrature, V^2.
    pub fn analog_variance(&self, q: Quadrature) -> f64 {
        let lf = if self.lowfreq_active() {
            self.lowfreq_noise.amplitude.powi(2)
        } else {
            0.0
        };
        self.shaped_variance(q) + self.electronic_noise_var.get(q) + lf
    }
}

/// Quantized two-quadrature sample stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrace {
    pub p_codes: Vec<i16>,
    pub q_codes: Vec<i16>,
    pub adc: AdcSpec,
    pub photocurrent: f64,
    pub seed: u64,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.p_codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_codes.is_empty()
    }

    pub fn channel(&self, q: Quadrature) -> &[i16] {
        match q {
            Quadrature::P => &self.p_codes,
            Quadrature::Q => &self.q_codes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adc.validate()?;
        if self.p_codes.len() != self.q_codes.len() {
            return Err(Error::Format(format!(
                "p and q lengths differ: {} vs {}",
                self.p_codes.len(),
                self.q_codes.len()
            )));
        }
        let (lo, hi) = (self.adc.min_code(), self.adc.max_code());
        for &c in self.p_codes.iter().chain(&self.q_codes) {
            let c = c as i32;
            if c < lo || c > hi {
                return Err(Error::CodeOutOfRange {
                    code: c as i64,
                    bits: self.adc.bits,
                });
            }
        }
        Ok(())
    }
}

/// Pole of `y[t] = a*y[t-1] + (1-a)*x[t]` for a corner frequency `fc`.
pub fn pole_coefficient(fc: f64, sample_rate: f64) -> f64 {
    (-2.0 * std::f64::consts::PI * fc / sample_rate).exp()
}

/// Unit-power-gain impulse response of the TIA shaping filter, truncated
/// once the tail falls below `1e-12` of the first tap.
pub fn tia_impulse_response(tia_bandwidth: f64, sample_rate: f64) -> Vec<f64> {
    let a = pole_coefficient(tia_bandwidth, sample_rate);
    let gain = ((1.0 + a) / (1.0 - a)).sqrt();
    let mut h = Vec::new();
    let mut v = gain * (1.0 - a);
    let first = v;
    while v > first * 1e-12 && h.len() < MAX_BURN_IN {
        h.push(v);
        v *= a;
    }
    h
}

/// Unit-power-gain impulse response of the two-pole low-frequency noise
/// shaping, truncated once past the peak and below `1e-12` of it.
pub fn lowfreq_impulse_response(cutoff: f64, sample_rate: f64) -> Vec<f64> {
    let a = pole_coefficient(cutoff, sample_rate);
    let energy = (1.0 - a).powi(4) * (1.0 + a * a) / (1.0 - a * a).powi(3);
    let scale = (1.0 - a).powi(2) / energy.sqrt();
    let mut h = Vec::new();
    let mut peak = 0.0f64;
    let mut pow = 1.0;
    for n in 0..MAX_BURN_IN {
        let v = scale * (n + 1) as f64 * pow;
        peak = peak.max(v);
        if v < peak * 1e-12 {
            break;
        }
        h.push(v);
        pow *= a;
    }
    h
}

struct NoiseModel {
    shaped_sigma: f64,
    shaped_a: f64,
    shaped_gain: f64,
    electronic_sigma: f64,
    lf_sigma: f64,
    lf_a: f64,
    lf_gain: f64,
    burn_in: usize,
}

impl NoiseModel {
    fn new(params: &SourceParams, q: Quadrature, sample_rate: f64) -> Self {
        let shaped_a = pole_coefficient(params.tia_bandwidth, sample_rate);
        let shaped_gain = ((1.0 + shaped_a) / (1.0 - shaped_a)).sqrt();
        let lf_a = pole_coefficient(params.lowfreq_noise.cutoff, sample_rate);
        // Energy of ((1-a)/(1-a z^-1))^2 is (1-a)^4 (1+a^2) / (1-a^2)^3.
        let lf_energy =
            (1.0 - lf_a).powi(4) * (1.0 + lf_a * lf_a) / (1.0 - lf_a * lf_a).powi(3);
        let lf_sigma = if params.lowfreq_active() {
            params.lowfreq_noise.amplitude
        } else {
            0.0
        };
        let shaped_sigma = params.shaped_variance(q).sqrt();

        let mut burn_in = 0usize;
        if shaped_sigma > 0.0 {
            burn_in = burn_in.max((20.0 / (1.0 - shaped_a)).ceil() as usize);
        }
        if lf_sigma > 0.0 {
            burn_in = burn_in.max((40.0 / (1.0 - lf_a)).ceil() as usize);
        }
        Self {
            shaped_sigma,
            shaped_a,
            shaped_gain,
            electronic_sigma: params.electronic_noise_var.get(q).sqrt(),
            lf_sigma,
            lf_a,
            lf_gain: 1.0 / lf_energy.sqrt(),
            burn_in: burn_in.min(MAX_BURN_IN),
        }
    }
}

fn stream_id(q: Quadrature, component: u64, chunk: usize) -> u64 {
    (q.index() << 60) | (component << 56) | chunk as u64
}

fn fill_white(seed: u64, q: Quadrature, component: u64, first_chunk: usize, out: &mut [f64]) {
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(i, chunk)| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(q, component, first_chunk + i));
            for v in chunk.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        });
}

/// Streams the analog voltage of one quadrature to `sink` in batches.
fn synthesize(
    params: &SourceParams,
    q: Quadrature,
    sample_rate: f64,
    n_samples: usize,
    seed: u64,
    mut sink: impl FnMut(&[f64]),
) {
    let model = NoiseModel::new(params, q, sample_rate);
    let total = n_samples + model.burn_in;
    let batch = CHUNK * BATCH_CHUNKS;
    let buf_len = batch.min(total.next_multiple_of(CHUNK));
    let mut shaped = vec![0.0; buf_len];
    let mut electronic = vec![0.0; buf_len];
    let mut lowfreq = vec![0.0; buf_len];
    let mut out = Vec::with_capacity(buf_len);

    let (a, one_minus_a) = (model.shaped_a, 1.0 - model.shaped_a);
    let (al, one_minus_al) = (model.lf_a, 1.0 - model.lf_a);
    let shaped_scale = model.shaped_sigma * model.shaped_gain;
    let lf_scale = model.lf_sigma * model.lf_gain;
    let (mut ys, mut l1, mut l2) = (0.0f64, 0.0f64, 0.0f64);

    let mut t = 0usize;
    while t < total {
        let len = batch.min(total - t);
        let first_chunk = t / CHUNK;
        if model.shaped_sigma > 0.0 {
            fill_white(seed, q, 0, first_chunk, &mut shaped[..len]);
        }
        if model.electronic_sigma > 0.0 {
            fill_white(seed, q, 1, first_chunk, &mut electronic[..len]);
        }
        if model.lf_sigma > 0.0 {
            fill_white(seed, q, 2, first_chunk, &mut lowfreq[..len]);
        }
        out.clear();
        for i in 0..len {
            let mut v = 0.0;
            if model.shaped_sigma > 0.0 {
                ys = a * ys + one_minus_a * shaped[i];
                v += shaped_scale * ys;
            }
            if model.electronic_sigma > 0.0 {
                v += model.electronic_sigma * electronic[i];
            }
            if model.lf_sigma > 0.0 {
                l1 = al * l1 + one_minus_al * lowfreq[i];
                l2 = al * l2 + one_minus_al * l1;
                v += lf_scale * l2;
            }
            if t + i >= model.burn_in {
                out.push(v);
            }
        }
        if !out.is_empty() {
            sink(&out);
        }
        t += len;
    }
}

fn check_request(params: &SourceParams, sample_rate: f64, n_samples: usize) -> Result<()> {
    params.validate()?;
    ensure(sample_rate.is_finite() && sample_rate > 0.0, || {
        format!("sample rate must be positive, got {sample_rate}")
    })?;
    ensure(n_samples > 0, || "n_samples must be positive".into())
}

/// Analog quadrature voltages before quantization.
pub fn simulate_analog(
    params: &SourceParams,
    sample_rate: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PerQuadrature<Vec<f64>>> {
    check_request(params, sample_rate, n_samples)?;
    let run = |q| {
        let mut v = Vec::with_capacity(n_samples);
        synthesize(params, q, sample_rate, n_samples, seed, |b| v.extend_from_slice(b));
        v
    };
    Ok(PerQuadrature::new(run(Quadrature::P), run(Quadrature::Q)))
}

/// Simulates and quantizes `n_samples` pairs. Deterministic in `seed`.
pub fn simulate_trace(
    params: &SourceParams,
    adc: &AdcSpec,
    n_samples: usize,
    seed: u64,
) -> Result<RawTrace> {
    adc.validate()?;
    check_request(params, adc.sample_rate, n_samples)?;
    let run = |q| {
        let mut codes = Vec::with_capacity(n_samples);
        synthesize(params, q, adc.sample_rate, n_samples, seed, |b| {
            codes.extend(b.iter().map(|&v| quantize(v, adc) as i16))
        });
        codes
    };
    Ok(RawTrace {
        p_codes: run(Quadrature::P),
        q_codes: run(Quadrature::Q),
        adc: *adc,
        photocurrent: params.photocurrent,
        seed,
    })
}

/// Seed of the `index`-th trace of a calibration sweep.
pub fn sweep_seed(seed: u64, index: usize) -> u64 {
    seeds::derive(seed, index as u64)
}

/// One trace per photocurrent with every other parameter held fixed.
pub fn sweep_calibration(
    params: &SourceParams,
    currents: &[f64],
    adc: &AdcSpec,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<RawTrace>> {
    ensure(!currents.is_empty(), || "sweep needs at least one current".into())?;
    ensure(currents.iter().all(|c| c.is_finite() && *c >= 0.0), || {
        "sweep currents must be finite and non-negative".into()
    })?;
    currents
        .iter()
        .enumerate()
        .map(|(i, &current)| {
            simulate_trace(
                &params.with_photocurrent(current),
                adc,
                n_samples,
                sweep_seed(seed, i),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adc() -> AdcSpec {
        AdcSpec::new(12, 0.5, 20e9).unwrap()
    }

    fn quiet(electronic: f64) -> SourceParams {
        SourceParams {
            photocurrent: 0.0,
            quantum_slope: PerQuadrature::splat(1.0),
            classical_noise_var: PerQuadrature::splat(0.0),
            electronic_noise_var: PerQuadrature::splat(electronic),
            lowfreq_noise: LowFreqNoise::NONE,
            tia_bandwidth: 2.5e9,
        }
    }

    #[test]
    fn quantizer_examples() {
        let adc = adc();
        assert_eq!(quantize(0.0, &adc), 0);
        assert_eq!(quantize(adc.full_scale, &adc), adc.max_code());
        assert_eq!(quantize(-adc.full_scale, &adc), adc.min_code());
        assert_eq!(quantize(adc.lsb(), &adc), 1);
        assert_eq!(quantize(f64::NAN, &adc), 0);
    }

    #[test]
    fn adc_rejects_bad_specs() {
        assert!(AdcSpec::new(1, 1.0, 1.0).is_err());
        assert!(AdcSpec::new(17, 1.0, 1.0).is_err());
        assert!(AdcSpec::new(12, 0.0, 1.0).is_err());
        assert!(AdcSpec::new(12, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn non_finite_params_rejected() {
        let mut p = quiet(1e-6);
        p.electronic_noise_var.q = f64::INFINITY;
        assert!(simulate_trace(&p, &adc(), 10, 1).is_err());
        let mut p = quiet(1e-6);
        p.tia_bandwidth = 0.0;
        assert!(simulate_trace(&p, &adc(), 10, 1).is_err());
        assert!(simulate_trace(&quiet(1e-6), &adc(), 0, 1).is_err());
    }

    #[test]
    fn laser_off_variance_is_electronic_floor() {
        // v = (40 LSB)^2 so the LSB^2/12 quantization term is 5e-5 relative.
        let adc = adc();
        let v = (40.0 * adc.lsb()).powi(2);
        let n = 1 << 20;
        let trace = simulate_trace(&quiet(v), &adc, n, 11).unwrap();
        for q in Quadrature::BOTH {
            let codes = trace.channel(q);
            let mean = codes.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
            let var_codes = codes
                .iter()
                .map(|&c| (c as f64 - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let var_volts = var_codes * adc.lsb().powi(2);
            let expected = v + adc.lsb().powi(2) / 12.0;
            let three_sigma = 3.0 * expected * (2.0 / n as f64).sqrt();
            assert!(
                (var_volts - expected).abs() < three_sigma,
                "{q:?}: {var_volts} vs {expected}"
            );
        }
    }

    #[test]
    fn same_seed_same_codes() {
        let mut p = quiet(1e-6);
        p.photocurrent = 50e-6;
        p.quantum_slope = PerQuadrature::splat(1e-3);
        p.lowfreq_noise = LowFreqNoise {
            amplitude: 1e-3,
            cutoff: 50e6,
        };
        let a = simulate_trace(&p, &adc(), 100_000, 5).unwrap();
        let b = simulate_trace(&p, &adc(), 100_000, 5).unwrap();
        let c = simulate_trace(&p, &adc(), 100_000, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.p_codes, c.p_codes);
        assert_ne!(a.p_codes, a.q_codes);
    }

    #[test]
    fn prefix_stable_across_lengths() {
        let p = quiet(1e-6);
        let short = simulate_trace(&p, &adc(), 1000, 3).unwrap();
        let long = simulate_trace(&p, &adc(), 3 * CHUNK + 17, 3).unwrap();
        assert_eq!(short.p_codes[..], long.p_codes[..1000]);
    }

    #[test]
    fn sweep_single_laser_off_trace() {
        let traces = sweep_calibration(&quiet(1e-6), &[0.0], &adc(), 1000, 1).unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].photocurrent, 0.0);
        assert!(sweep_calibration(&quiet(1e-6), &[], &adc(), 1000, 1).is_err());
        assert!(sweep_calibration(&quiet(1e-6), &[-1.0], &adc(), 1000, 1).is_err());
    }

    #[test]
    fn tia_response_has_unit_energy() {
        let h = tia_impulse_response(2.5e9, 20e9);
        let e: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-9, "{e}");
    }

    #[test]
    fn lowfreq_response_has_unit_energy() {
        let h = lowfreq_impulse_response(50e6, 20e9);
        let e: f64 = h.iter().map(|v| v * v).sum();
        assert!((e - 1.0).abs() < 1e-9, "{e}");
    }
}
