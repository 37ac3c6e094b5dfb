//! Run configuration. Every physical quantity carries its unit in the key
//! name (`_hz`, `_v`, `_v2`, `_a`, ...).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::DEFAULT_TAPS;
use crate::error::{Error, Result};
use crate::scenario::{self, ScenarioTargets};
use crate::source_sim::{AdcSpec, LowFreqNoise, PerQuadrature, SourceParams};
use crate::trace_file::{RawDescriptor, TraceFormat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Parameters back-solved to the reference operating point.
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Starting point for the simulator parameters; explicit fields below
    /// override it. Without a preset every field must be given.
    pub preset: Option<Preset>,
    /// Read this trace instead of simulating.
    pub input: Option<PathBuf>,
    /// Descriptor for a headerless `input`.
    pub descriptor: Option<PathBuf>,
    pub samples: usize,
    pub seed: u64,
    pub photocurrent_a: Option<f64>,
    pub quantum_slope_v2_per_a: Option<f64>,
    pub classical_noise_v2: Option<f64>,
    pub electronic_noise_v2: Option<f64>,
    pub lowfreq_rms_v: Option<f64>,
    pub lowfreq_cutoff_hz: Option<f64>,
    pub tia_bandwidth_hz: Option<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            preset: Some(Preset::Reference),
            input: None,
            descriptor: None,
            samples: 10_000_000,
            seed: 1,
            photocurrent_a: None,
            quantum_slope_v2_per_a: None,
            classical_noise_v2: None,
            electronic_noise_v2: None,
            lowfreq_rms_v: None,
            lowfreq_cutoff_hz: None,
            tia_bandwidth_hz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcConfig {
    pub bits: u32,
    pub full_scale_v: f64,
    pub sample_rate_hz: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            bits: 12,
            full_scale_v: 0.5,
            sample_rate_hz: 20e9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub taps: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            low_hz: 0.2e9,
            high_hz: 2.2e9,
            taps: DEFAULT_TAPS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DownsamplePolicy {
    /// Decimate at the first null of the filtered autocorrelation.
    AutoFirstZero,
    /// Decimate by `factor`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownsampleConfig {
    pub policy: DownsamplePolicy,
    pub factor: Option<usize>,
    pub phase: usize,
    /// Lags examined when looking for the first zero.
    pub max_lag: usize,
    /// Leading filtered samples used for the autocorrelation.
    pub analysis_samples: usize,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        Self {
            policy: DownsamplePolicy::AutoFirstZero,
            factor: None,
            phase: 0,
            max_lag: 40,
            analysis_samples: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Explicit sweep currents; otherwise `points` evenly spaced currents
    /// from `min_fraction` of the operating current up to it.
    pub currents_a: Option<Vec<f64>>,
    pub points: usize,
    pub min_fraction: f64,
    pub samples_per_point: usize,
    pub seed: u64,
    /// Current at which the entropy is evaluated; defaults to the source's.
    pub operating_photocurrent_a: Option<f64>,
    /// Recorded sweep traces (each header carries its photocurrent), used
    /// instead of simulating the sweep.
    pub trace_files: Option<Vec<PathBuf>>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            currents_a: None,
            points: 31,
            min_fraction: 0.1,
            samples_per_point: 1_000_000,
            seed: 2,
            operating_photocurrent_a: None,
            trace_files: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedMode {
    /// ChaCha20 stream keyed by `seed` (reproducible, for experiments).
    Deterministic,
    /// Bits read from `seed_file`.
    File,
    /// Operating-system entropy; the drawn seed is saved with the output.
    Os,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Input block length in bits.
    pub n: usize,
    /// Output block length; chosen from the entropy budget when absent.
    pub m: Option<usize>,
    pub target_eps_exp: f64,
    pub seed_mode: SeedMode,
    pub seed: u64,
    pub seed_file: Option<PathBuf>,
    /// Run even when the compression ratio condition fails.
    pub insecure_allow: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            n: 15_000,
            m: None,
            target_eps_exp: 63.0,
            seed_mode: SeedMode::Deterministic,
            seed: 3,
            seed_file: None,
            insecure_allow: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestsConfig {
    pub enabled: bool,
    pub stream_bits: usize,
    pub n_streams: usize,
    /// Run on as many whole streams as are available when there are fewer
    /// than `n_streams`.
    pub allow_fewer_streams: bool,
    pub alpha: f64,
    pub acf_max_lag: usize,
    /// Leading samples (before hashing) and bits (after) used for the
    /// autocorrelation comparison.
    pub acf_samples: usize,
}

impl Default for TestsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            stream_bits: 1_000_000,
            n_streams: 100,
            allow_fewer_streams: true,
            alpha: 0.01,
            acf_max_lag: 100,
            acf_samples: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    /// Write the raw trace; large for long runs.
    pub save_raw: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("qrng-out"),
            threads: 0,
            save_raw: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    pub adc: AdcConfig,
    pub filter: FilterConfig,
    pub downsample: DownsampleConfig,
    pub calibration: CalibrationConfig,
    pub extractor: ExtractorConfig,
    pub tests: TestsConfig,
    pub output: OutputConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads `path`; relative paths inside are resolved against the
    /// directory containing it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.source.input.iter_mut().for_each(fix);
        self.source.descriptor.iter_mut().for_each(fix);
        self.extractor.seed_file.iter_mut().for_each(fix);
        self.calibration.trace_files.iter_mut().flatten().for_each(fix);
        fix(&mut self.output.dir);
    }

    pub fn adc(&self) -> Result<AdcSpec> {
        AdcSpec::new(self.adc.bits, self.adc.full_scale_v, self.adc.sample_rate_hz)
    }

    pub fn scenario_targets(&self) -> Result<ScenarioTargets> {
        Ok(ScenarioTargets {
            adc: self.adc()?,
            band_low: self.filter.low_hz,
            band_high: self.filter.high_hz,
            taps: self.filter.taps,
            ..scenario::reference_targets()
        })
    }

    /// Simulator parameters: the preset (if any) with explicit overrides.
    pub fn source_params(&self) -> Result<SourceParams> {
        let s = &self.source;
        let base = match s.preset {
            Some(Preset::Reference) => Some(scenario::back_solve(&self.scenario_targets()?)?.params),
            None => None,
        };
        let pick = |name: &str, explicit: Option<f64>, preset: Option<f64>| {
            explicit
                .or(preset)
                .ok_or_else(|| Error::Config(format!("source.{name} is required without a preset")))
        };
        let b = base.as_ref();
        let params = SourceParams {
            photocurrent: pick("photocurrent_a", s.photocurrent_a, b.map(|p| p.photocurrent))?,
            quantum_slope: PerQuadrature::splat(pick(
                "quantum_slope_v2_per_a",
                s.quantum_slope_v2_per_a,
                b.map(|p| p.quantum_slope.p),
            )?),
            classical_noise_var: PerQuadrature::splat(pick(
                "classical_noise_v2",
                s.classical_noise_v2,
                b.map(|p| p.classical_noise_var.p),
            )?),
            electronic_noise_var: PerQuadrature::splat(pick(
                "electronic_noise_v2",
                s.electronic_noise_v2,
                b.map(|p| p.electronic_noise_var.p),
            )?),
            lowfreq_noise: LowFreqNoise {
                amplitude: pick("lowfreq_rms_v", s.lowfreq_rms_v, b.map(|p| p.lowfreq_noise.amplitude))?,
                cutoff: pick("lowfreq_cutoff_hz", s.lowfreq_cutoff_hz, b.map(|p| p.lowfreq_noise.cutoff))?,
            },
            tia_bandwidth: pick("tia_bandwidth_hz", s.tia_bandwidth_hz, b.map(|p| p.tia_bandwidth))?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn trace_format(&self) -> Result<TraceFormat> {
        Ok(match &self.source.descriptor {
            Some(d) => TraceFormat::Headerless(RawDescriptor::load(d)?),
            None => TraceFormat::Native,
        })
    }

    /// Static checks that do not touch the file system.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.adc()?;
        if self.source.input.is_none() && self.source.samples == 0 {
            return bad("source.samples must be positive".into());
        }
        if self.downsample.policy == DownsamplePolicy::Fixed && self.downsample.factor.is_none() {
            return bad("downsample.factor is required with the fixed policy".into());
        }
        if self.calibration.samples_per_point <= self.filter.taps {
            return bad("calibration.samples_per_point must exceed the filter length".into());
        }
        if self.calibration.currents_a.is_none() && self.calibration.points < 2 {
            return bad("calibration.points must be at least 2".into());
        }
        if !(self.calibration.min_fraction >= 0.0 && self.calibration.min_fraction < 1.0) {
            return bad("calibration.min_fraction must be in [0, 1)".into());
        }
        if self.extractor.seed_mode == SeedMode::File && self.extractor.seed_file.is_none() {
            return bad("extractor.seed_file is required with seed_mode = \"file\"".into());
        }
        if !(self.tests.alpha > 0.0 && self.tests.alpha < 1.0) {
            return bad("tests.alpha must be in (0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        assert!(text.contains("sample_rate_hz"));
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_config_and_unknown_keys() {
        let cfg = PipelineConfig::from_toml("[source]\nsamples = 1000\n[downsample]\npolicy = \"fixed\"\nfactor = 5\n").unwrap();
        assert_eq!(cfg.source.samples, 1000);
        assert_eq!(cfg.downsample.factor, Some(5));
        assert_eq!(cfg.adc.bits, 12);
        assert!(PipelineConfig::from_toml("[adc]\nsample_rate = 1.0\n").is_err());
        let fixed_without_factor = PipelineConfig::from_toml("[downsample]\npolicy = \"fixed\"\n").unwrap();
        assert!(fixed_without_factor.validate().is_err());
    }

    #[test]
    fn preset_with_overrides() {
        let cfg = PipelineConfig::from_toml("[source]\nphotocurrent_a = 0.0\n").unwrap();
        let p = cfg.source_params().unwrap();
        assert_eq!(p.photocurrent, 0.0);
        assert!(p.quantum_slope.p > 0.0);
        let bare = PipelineConfig::from_toml("[source]\npreset = \"reference\"\n").unwrap();
        assert_eq!(bare.source_params().unwrap().photocurrent, 70e-6);
    }

    #[test]
    fn explicit_source_requires_all_fields() {
        let mut cfg = PipelineConfig::default();
        cfg.source.preset = None;
        cfg.source.photocurrent_a = Some(1e-5);
        assert!(matches!(cfg.source_params(), Err(Error::Config(m)) if m.contains("quantum_slope")));
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let mut cfg = PipelineConfig::from_toml("[source]\ninput = \"raw.trace\"\n[output]\ndir = \"out\"\n").unwrap();
        cfg.resolve_paths(Path::new("/data/run1"));
        assert_eq!(cfg.source.input.unwrap(), PathBuf::from("/data/run1/raw.trace"));
        assert_eq!(cfg.output.dir, PathBuf::from("/data/run1/out"));
    }
}
