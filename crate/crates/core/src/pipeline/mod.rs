//! End-to-end batch pipeline:
//! acquire -> filter -> decimate -> calibrate -> condition -> pack ->
//! extract -> test -> report.
//!
//! Every stage writes its product into the output directory, and each
//! `stage_*` function can be rerun from those files alone; [`run_pipeline`]
//! produces exactly the same files in one pass.

pub mod config;
mod report;
pub mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use config::*;
pub use report::*;
pub use stages::*;

use crate::calibration::EntropyBudget;
use crate::dsp::{design_bandpass, FilterKernel};
use crate::error::{Error, Result, StageContext};
use crate::extractor::BitBuf;
use crate::source_sim::RawTrace;
use crate::trace_file::{encode_trace, read_trace};

/// File names inside the output directory.
pub mod artifacts {
    pub const RAW: &str = "raw.trace";
    pub const DOWNSAMPLE: &str = "downsample.json";
    pub const ACF_FILTERED: &str = "acf_filtered.csv";
    pub const CALIBRATION: &str = "calibration.json";
    pub const CONDITIONED: &str = "conditioned.trace";
    pub const BUDGET: &str = "budget.json";
    pub const SEED: &str = "seed.bin";
    pub const EXTRACTED: &str = "extracted.bin";
    pub const EXTRACTION: &str = "extraction.json";
    pub const TESTS: &str = "tests.json";
    pub const ACF_COMPARE: &str = "acf.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TXT: &str = "report.txt";
    pub const MANIFEST: &str = "manifest.json";

    /// Hashed into the manifest, in this order.
    pub const ALL: [&str; 13] = [
        RAW,
        DOWNSAMPLE,
        ACF_FILTERED,
        CALIBRATION,
        CONDITIONED,
        BUDGET,
        SEED,
        EXTRACTED,
        EXTRACTION,
        TESTS,
        ACF_COMPARE,
        REPORT_JSON,
        REPORT_TXT,
    ];
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn output_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs `f` on a pool of `threads` workers (0 = the global pool).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?
        .install(f)
}

pub fn kernel_for(cfg: &PipelineConfig, sample_rate: f64) -> Result<FilterKernel> {
    design_bandpass(cfg.filter.low_hz, cfg.filter.high_hz, sample_rate, cfg.filter.taps)
}

/// Extracted bits as written to disk with their exact length.
pub fn load_extracted(dir: &Path) -> Result<BitBuf> {
    let summary: ExtractionSummary = read_json(dir, artifacts::EXTRACTION)?;
    let bytes = std::fs::read(dir.join(artifacts::EXTRACTED))?;
    BitBuf::from_bytes_le(&bytes, summary.output_bits)
}

fn emit_acquire(dir: &Path, raw: &RawTrace) -> Result<()> {
    write(dir, artifacts::RAW, &encode_trace(raw)?)
}

fn emit_condition(dir: &Path, decision: &DownsampleDecision, conditioned: &RawTrace) -> Result<()> {
    write_json(dir, artifacts::DOWNSAMPLE, decision)?;
    write(dir, artifacts::ACF_FILTERED, decision.acf.to_csv().as_bytes())?;
    write(dir, artifacts::CONDITIONED, &encode_trace(conditioned)?)
}

fn emit_extract(dir: &Path, budget: &EntropyBudget, ex: &Extraction) -> Result<()> {
    write_json(dir, artifacts::BUDGET, budget)?;
    write(dir, artifacts::SEED, &ex.spec.seed.to_bytes_le())?;
    write(dir, artifacts::EXTRACTED, &ex.output.to_bytes_le())?;
    write_json(dir, artifacts::EXTRACTION, &ex.summary)
}

fn emit_test(dir: &Path, v: &Validation) -> Result<()> {
    write_json(dir, artifacts::TESTS, v)?;
    write(dir, artifacts::ACF_COMPARE, v.acf.to_csv().as_bytes())
}

/// Simulates or ingests the raw trace and writes it.
pub fn stage_acquire(cfg: &PipelineConfig) -> Result<RawTrace> {
    let dir = output_dir(cfg)?;
    let raw = acquire(cfg).stage("acquire")?;
    emit_acquire(&dir, &raw).stage("acquire")?;
    Ok(raw)
}

/// Photocurrent of the configured source without generating samples.
fn source_photocurrent(cfg: &PipelineConfig) -> Result<f64> {
    match &cfg.source.input {
        Some(path) => Ok(crate::trace_file::ingest_trace(path, &cfg.trace_format()?)?.photocurrent),
        None => Ok(cfg.source_params()?.photocurrent),
    }
}

/// Runs the calibration sweep and writes the fit.
pub fn stage_calibrate(cfg: &PipelineConfig) -> Result<CalibrationResult> {
    let dir = output_dir(cfg)?;
    let current = source_photocurrent(cfg).stage("calibrate")?;
    let kernel = kernel_for(cfg, cfg.adc.sample_rate_hz).stage("filter")?;
    let cal = calibrate(cfg, current, &kernel).stage("calibrate")?;
    write_json(&dir, artifacts::CALIBRATION, &cal).stage("calibrate")?;
    Ok(cal)
}

/// Filters and decimates a raw trace file.
pub fn stage_condition(cfg: &PipelineConfig, raw_path: &Path) -> Result<RawTrace> {
    let dir = output_dir(cfg)?;
    let raw = read_trace(raw_path).stage("condition")?;
    let kernel = kernel_for(cfg, raw.adc.sample_rate).stage("filter")?;
    let decision = analyse_downsampling(&raw, &kernel, &cfg.downsample).stage("downsample")?;
    let conditioned = condition(&raw, &kernel, decision.factor, decision.phase).stage("condition")?;
    emit_condition(&dir, &decision, &conditioned).stage("condition")?;
    Ok(conditioned)
}

/// Packs and hashes a conditioned trace using a stored calibration.
pub fn stage_extract(cfg: &PipelineConfig, conditioned_path: &Path, calibration_path: &Path) -> Result<Extraction> {
    let dir = output_dir(cfg)?;
    let conditioned = read_trace(conditioned_path).stage("extract")?;
    let text = std::fs::read_to_string(calibration_path).map_err(Error::from).stage("extract")?;
    let cal: CalibrationResult = serde_json::from_str(&text).map_err(Error::from).stage("extract")?;
    let budget = cal.budget(&conditioned.adc, conditioned.adc.sample_rate).stage("calibrate")?;
    let bits = pack(&conditioned).stage("pack")?;
    let ex = extract(&cfg.extractor, budget.h_min, budget.raw_bits, &bits).stage("extract")?;
    emit_extract(&dir, &budget, &ex).stage("extract")?;
    Ok(ex)
}

/// Runs the battery and autocorrelation comparison on stored outputs.
pub fn stage_test(cfg: &PipelineConfig, conditioned_path: &Path, extracted: &BitBuf) -> Result<Validation> {
    let dir = output_dir(cfg)?;
    let conditioned = read_trace(conditioned_path).stage("test")?;
    let v = validate_output(&cfg.tests, &conditioned, extracted).stage("test")?;
    emit_test(&dir, &v).stage("test")?;
    Ok(v)
}

/// Builds the report from the stage files in `dir`.
pub fn stage_report(dir: &Path) -> Result<RunReport> {
    let load = || -> Result<_> {
        let cal: CalibrationResult = read_json(dir, artifacts::CALIBRATION)?;
        let budget: EntropyBudget = read_json(dir, artifacts::BUDGET)?;
        let decision: DownsampleDecision = read_json(dir, artifacts::DOWNSAMPLE)?;
        let summary: ExtractionSummary = read_json(dir, artifacts::EXTRACTION)?;
        let validation: Option<Validation> =
            if dir.join(artifacts::TESTS).exists() { Some(read_json(dir, artifacts::TESTS)?) } else { None };
        Ok((cal, budget, decision, summary, validation))
    };
    let (cal, budget, decision, summary, validation) = load().stage("report")?;
    let report = RunReport::assemble(&cal, &budget, &decision, &summary, validation.as_ref());
    emit_report(dir, &report, validation.as_ref()).stage("report")?;
    Ok(report)
}

fn emit_report(dir: &Path, report: &RunReport, validation: Option<&Validation>) -> Result<()> {
    write_json(dir, artifacts::REPORT_JSON, report)?;
    let battery = validation.and_then(|v| v.battery.as_ref());
    write(dir, artifacts::REPORT_TXT, report.to_text(battery).as_bytes())
}

/// Hashes the artifacts present in the output directory and writes the
/// manifest.
pub fn write_manifest(cfg: &PipelineConfig) -> Result<Manifest> {
    let dir = output_dir(cfg)?;
    let mut files = BTreeMap::new();
    for name in artifacts::ALL {
        let path = dir.join(name);
        if path.exists() {
            files.insert(name.to_string(), sha256_hex(&std::fs::read(&path)?));
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(cfg)?,
        config: cfg.clone(),
        source_params: if cfg.source.input.is_none() { cfg.source_params().ok() } else { None },
        seeds: SeedRecord {
            source: cfg.source.seed,
            calibration: cfg.calibration.seed,
            extractor_mode: format!("{:?}", cfg.extractor.seed_mode).to_lowercase(),
            extractor: cfg.extractor.seed,
            extractor_seed_sha256: files.get(artifacts::SEED).cloned().unwrap_or_default(),
        },
        artifacts: files,
    };
    write_json(&dir, artifacts::MANIFEST, &manifest)?;
    Ok(manifest)
}

/// Result of a full run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub manifest: Manifest,
    pub dir: PathBuf,
}

/// Executes every stage and writes all artifacts, the report and the
/// manifest. Errors carry the name of the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate().stage("config")?;
    with_threads(cfg.output.threads, || run_stages(cfg))
}

fn run_stages(cfg: &PipelineConfig) -> Result<RunOutput> {
    let dir = output_dir(cfg).stage("config")?;
    let raw = acquire(cfg).stage("acquire")?;
    if cfg.output.save_raw {
        emit_acquire(&dir, &raw).stage("acquire")?;
    }
    let kernel = kernel_for(cfg, raw.adc.sample_rate).stage("filter")?;
    let decision = analyse_downsampling(&raw, &kernel, &cfg.downsample).stage("downsample")?;

    let cal_kernel = kernel_for(cfg, cfg.adc.sample_rate_hz).stage("filter")?;
    let cal = calibrate(cfg, raw.photocurrent, &cal_kernel).stage("calibrate")?;
    write_json(&dir, artifacts::CALIBRATION, &cal).stage("calibrate")?;

    let conditioned = condition(&raw, &kernel, decision.factor, decision.phase).stage("condition")?;
    drop(raw);
    emit_condition(&dir, &decision, &conditioned).stage("condition")?;

    let budget = cal.budget(&conditioned.adc, conditioned.adc.sample_rate).stage("calibrate")?;
    let bits = pack(&conditioned).stage("pack")?;
    let ex = extract(&cfg.extractor, budget.h_min, budget.raw_bits, &bits).stage("extract")?;
    drop(bits);
    emit_extract(&dir, &budget, &ex).stage("extract")?;

    let validation = validate_output(&cfg.tests, &conditioned, &ex.output).stage("test")?;
    emit_test(&dir, &validation).stage("test")?;

    let report = RunReport::assemble(&cal, &budget, &decision, &ex.summary, Some(&validation));
    emit_report(&dir, &report, Some(&validation)).stage("report")?;
    let manifest = write_manifest(cfg).stage("report")?;
    Ok(RunOutput { report, manifest, dir })
}
