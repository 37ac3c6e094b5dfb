//! Run summary and reproducibility manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::stages::{CalibrationResult, DownsampleDecision, ExtractionSummary, Validation};
use crate::calibration::{CalibrationFit, EntropyBudget};
use crate::error::Result;
use crate::source_sim::SourceParams;
use crate::stattests::{TestReport, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownsampleSummary {
    pub factor: usize,
    pub phase: usize,
    pub first_zero_lag: Option<usize>,
    pub envelope_zero_lag: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub name: String,
    pub p_value: f64,
    pub proportion: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfSummary {
    pub max_lag: usize,
    pub before_samples: usize,
    pub after_samples: usize,
    pub before_bound99: f64,
    pub after_bound99: f64,
    pub before_lag1: f64,
    pub before_lag2: f64,
    pub before_max_abs: f64,
    pub before_fraction_within: f64,
    pub after_max_abs: f64,
    pub after_fraction_within: f64,
}

impl AcfSummary {
    pub fn from_validation(v: &Validation) -> Self {
        let max_abs = |vals: &[f64]| vals[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let (b, a) = (&v.acf.before, &v.acf.after);
        Self {
            max_lag: b.max_lag(),
            before_samples: b.n_samples,
            after_samples: a.n_samples,
            before_bound99: b.bound99,
            after_bound99: a.bound99,
            before_lag1: b.values.get(1).copied().unwrap_or(f64::NAN),
            before_lag2: b.values.get(2).copied().unwrap_or(f64::NAN),
            before_max_abs: max_abs(&b.values),
            before_fraction_within: b.fraction_within_bound(),
            after_max_abs: max_abs(&a.values),
            after_fraction_within: a.fraction_within_bound(),
        }
    }
}

/// Machine-readable summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub h_min: f64,
    pub h_min_clamped: bool,
    pub delta_p: f64,
    pub delta_q: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub pair_rate_hz: f64,
    pub gen_rate_bps: f64,
    pub operating_photocurrent_a: f64,
    pub vacuum_variance_p: f64,
    pub vacuum_variance_q: f64,
    pub calibration: CalibrationFit,
    pub downsample: DownsampleSummary,
    pub extractor: ExtractionSummary,
    pub eps_exp: f64,
    pub ratio_ok: bool,
    pub test_verdicts: Vec<VerdictLine>,
    pub tests_passed: Option<bool>,
    pub acf: Option<AcfSummary>,
    pub all_passed: bool,
}

impl RunReport {
    pub fn assemble(
        calibration: &CalibrationResult,
        budget: &EntropyBudget,
        downsample: &DownsampleDecision,
        extraction: &ExtractionSummary,
        validation: Option<&Validation>,
    ) -> Self {
        let battery: Option<&TestReport> = validation.and_then(|v| v.battery.as_ref());
        let test_verdicts = battery
            .map(|b| {
                b.tests
                    .iter()
                    .map(|t| VerdictLine {
                        name: t.name.clone(),
                        p_value: t.uniformity_p,
                        proportion: t.proportion_pass,
                        verdict: t.verdict,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let tests_passed = battery.map(TestReport::all_passed);
        let ratio_ok = extraction.dimensions.ratio_ok;
        let vac = calibration.vacuum_variance();
        Self {
            h_min: budget.h_min,
            h_min_clamped: budget.h_min_clamped,
            delta_p: budget.delta_p,
            delta_q: budget.delta_q,
            k_p: budget.k_p,
            k_q: budget.k_q,
            pair_rate_hz: budget.pair_rate,
            gen_rate_bps: budget.gen_rate,
            operating_photocurrent_a: calibration.operating_photocurrent,
            vacuum_variance_p: vac.p,
            vacuum_variance_q: vac.q,
            calibration: calibration.fit,
            downsample: DownsampleSummary {
                factor: downsample.factor,
                phase: downsample.phase,
                first_zero_lag: downsample.first_zero_lag,
                envelope_zero_lag: downsample.envelope_zero_lag,
            },
            extractor: extraction.clone(),
            eps_exp: extraction.dimensions.eps_exp,
            ratio_ok,
            test_verdicts,
            tests_passed,
            acf: validation.map(AcfSummary::from_validation),
            all_passed: ratio_ok && tests_passed.unwrap_or(true),
        }
    }

    pub fn to_text(&self, battery: Option<&TestReport>) -> String {
        let d = &self.extractor.dimensions;
        let mut s = String::new();
        s += "Entropy budget\n";
        s += &format!("  operating photocurrent  {:.3e} A\n", self.operating_photocurrent_a);
        s += &format!("  vacuum variance p, q    {:.4}, {:.4}\n", self.vacuum_variance_p, self.vacuum_variance_q);
        s += &format!("  k_p, k_q                {:.3}, {:.3} codes per vacuum unit\n", self.k_p, self.k_q);
        s += &format!("  delta_p, delta_q        {:.6e}, {:.6e}\n", self.delta_p, self.delta_q);
        s += &format!(
            "  H_min                   {:.4} bits per pair{}\n",
            self.h_min,
            if self.h_min_clamped { " (capped at 2N)" } else { "" }
        );
        s += &format!("  pair rate               {:.4e} pairs/s\n", self.pair_rate_hz);
        s += &format!("  generation rate         {:.4} Gbit/s\n", self.gen_rate_bps / 1e9);
        s += "\nDecimation\n";
        s += &format!("  factor, phase           {}, {}\n", self.downsample.factor, self.downsample.phase);
        s += &format!(
            "  first r <= 0 lag        {}\n  first envelope null     {}\n",
            fmt_opt(self.downsample.first_zero_lag),
            fmt_opt(self.downsample.envelope_zero_lag)
        );
        s += "\nExtraction\n";
        s += &format!("  Toeplitz matrix         {} x {}\n", d.m, d.n);
        s += &format!(
            "  ratio m/n < H_min/2N    {:.6} < {:.6}: {}\n",
            d.compression(),
            d.h_min / d.raw_bits as f64,
            if d.ratio_ok { "holds" } else { "FAILS" }
        );
        s += &format!("  security exponent       {:.3} ({})\n", d.eps_exp, self.extractor.formula);
        s += &format!(
            "  bits in, out            {}, {}\n",
            self.extractor.input_bits, self.extractor.output_bits
        );
        if let Some(a) = &self.acf {
            s += "\nAutocorrelation (lags 1..";
            s += &format!("{})\n", a.max_lag);
            s += &format!(
                "  before hashing          lag1 {:+.4}, lag2 {:+.4}, max |r| {:.4}, bound {:.4}, within {:.1}%\n",
                a.before_lag1,
                a.before_lag2,
                a.before_max_abs,
                a.before_bound99,
                100.0 * a.before_fraction_within
            );
            s += &format!(
                "  after hashing           max |r| {:.4}, bound {:.4}, within {:.1}%\n",
                a.after_max_abs,
                a.after_bound99,
                100.0 * a.after_fraction_within
            );
        }
        if let Some(b) = battery {
            s += "\nStatistical tests\n";
            s += &b.to_table();
        }
        s += &format!("\nOverall: {}\n", if self.all_passed { "PASSED" } else { "FAILED" });
        s
    }
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub source: u64,
    pub calibration: u64,
    pub extractor_mode: String,
    pub extractor: u64,
    /// Digest of the Toeplitz seed actually used.
    pub extractor_seed_sha256: String,
}

/// Everything needed to reproduce a run bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub source_params: Option<SourceParams>,
    pub seeds: SeedRecord,
    /// Artifact file name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

pub fn config_hash(cfg: &PipelineConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}
