//! Statistical validation of extracted bits: a subset of the NIST SP 800-22
//! battery, p-value uniformity and proportion aggregation, and
//! autocorrelation comparison before and after hashing.

pub mod nist;
pub mod special;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{autocorrelation, AcfProfile};
use crate::error::{Error, Result};
use crate::extractor::BitBuf;

/// Significance level of an individual test.
pub const ALPHA: f64 = 0.01;
/// Uniformity P-values below this reject a test.
pub const UNIFORMITY_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Passed,
    Failed,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Passed
        } else {
            Verdict::Failed
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Passed
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Passed => "PASSED",
            Verdict::Failed => "FAILED",
        })
    }
}

/// Per-test parameters derived from the stream length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub block_frequency_m: usize,
    pub serial_m: usize,
    pub apen_m: usize,
}

impl BatteryParams {
    /// Standard settings (128, 16, 10) at 10^6 bits, reduced for short
    /// streams so that each test stays within its validity range.
    pub fn for_length(n: usize) -> Result<Self> {
        if n < 1024 {
            return Err(Error::InsufficientData { needed: 1024, got: n });
        }
        let log2 = n.ilog2() as usize;
        Ok(Self {
            block_frequency_m: if n >= 12_800 { 128 } else { n / 100 },
            serial_m: 16.min(log2 - 3),
            apen_m: 10.min(log2 - 6),
        })
    }
}

/// Names and instance labels, in report order.
const CATEGORIES: [(&str, &[&str]); 8] = [
    ("Frequency", &["Frequency"]),
    ("BlockFrequency", &["BlockFrequency"]),
    ("CumulativeSums", &["CumulativeSums-forward", "CumulativeSums-backward"]),
    ("Runs", &["Runs"]),
    ("LongestRun", &["LongestRun"]),
    ("DFT", &["DFT"]),
    ("Serial", &["Serial-1", "Serial-2"]),
    ("ApproximateEntropy", &["ApproximateEntropy"]),
];

/// All p-values of one stream, in [`CATEGORIES`] instance order.
pub fn stream_p_values(bits: &[u8], params: &BatteryParams) -> Result<Vec<f64>> {
    let (s1, s2) = nist::serial(bits, params.serial_m)?;
    Ok(vec![
        nist::frequency(bits)?,
        nist::block_frequency(bits, params.block_frequency_m)?,
        nist::cumulative_sums(bits, true)?,
        nist::cumulative_sums(bits, false)?,
        nist::runs(bits)?,
        nist::longest_run(bits)?,
        nist::dft(bits)?,
        s1,
        s2,
        nist::approximate_entropy(bits, params.apen_m)?,
    ])
}

/// Chi-square uniformity of p-values over 10 equal bins.
pub fn uniformity_p(p_values: &[f64]) -> Result<f64> {
    if p_values.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: p_values.len(),
        });
    }
    let mut bins = [0usize; 10];
    for &p in p_values {
        bins[((p * 10.0).floor() as usize).min(9)] += 1;
    }
    let expect = p_values.len() as f64 / 10.0;
    let chi2: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
    Ok(special::igamc(4.5, chi2 / 2.0))
}

/// Acceptance band for the pass proportion over `n_streams` streams.
pub fn proportion_band(alpha: f64, n_streams: usize) -> (f64, f64) {
    let p = 1.0 - alpha;
    let half = 3.0 * (p * (1.0 - p) / n_streams as f64).sqrt();
    (p - half, p + half)
}

/// Kolmogorov-Smirnov distance of a sample from the uniform distribution.
pub fn ks_distance(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

/// One instance of a test (e.g. the backward cumulative sums) over all streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub name: String,
    pub p_values: Vec<f64>,
    pub uniformity_p: f64,
    pub proportion_pass: f64,
    pub verdict: Verdict,
}

/// A test category; its P-value and proportion are the lowest over its
/// instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub uniformity_p: f64,
    pub proportion_pass: f64,
    pub verdict: Verdict,
    pub instances: Vec<InstanceResult>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub stream_bits: usize,
    pub n_streams: usize,
    pub alpha: f64,
    pub params: BatteryParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub config: BatteryConfig,
    pub proportion_band: (f64, f64),
    pub tests: Vec<TestResult>,
}

impl TestReport {
    pub fn all_passed(&self) -> bool {
        self.tests.iter().all(|t| t.verdict.passed())
    }

    pub fn test(&self, name: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.name == name)
    }

    /// Fixed-width table: test name, lowest uniformity P-value, verdict.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} streams of {} bits, alpha = {}, proportion band [{:.4}, {:.4}]\n\n",
            self.config.n_streams,
            self.config.stream_bits,
            self.config.alpha,
            self.proportion_band.0,
            self.proportion_band.1
        );
        s += &format!("{:<24} {:>8} {:>10}  {}\n", "Statistical Test", "P-value", "Proportion", "Result");
        s += &format!("{}\n", "-".repeat(55));
        for t in &self.tests {
            s += &format!(
                "{:<24} {:>8.4} {:>10.4}  {}\n",
                t.name, t.uniformity_p, t.proportion_pass, t.verdict
            );
        }
        s
    }
}

/// Splits `bits` into `n_streams` streams of `stream_bits` and runs the
/// battery on each.
pub fn run_battery(bits: &BitBuf, stream_bits: usize, n_streams: usize) -> Result<TestReport> {
    run_battery_with(bits, stream_bits, n_streams, ALPHA)
}

pub fn run_battery_with(bits: &BitBuf, stream_bits: usize, n_streams: usize, alpha: f64) -> Result<TestReport> {
    if n_streams == 0 {
        return Err(Error::InvalidParameter("need at least one stream".into()));
    }
    let needed = stream_bits * n_streams;
    if bits.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: bits.len(),
        });
    }
    let params = BatteryParams::for_length(stream_bits)?;
    let per_stream: Vec<Vec<f64>> = (0..n_streams)
        .into_par_iter()
        .map(|i| {
            let s = bits.slice(i * stream_bits, stream_bits);
            let bytes: Vec<u8> = s.iter().map(u8::from).collect();
            stream_p_values(&bytes, &params)
        })
        .collect::<Result<_>>()?;

    let band = proportion_band(alpha, n_streams);
    let mut column = 0;
    let mut tests = Vec::with_capacity(CATEGORIES.len());
    for (name, labels) in CATEGORIES {
        let mut instances = Vec::with_capacity(labels.len());
        for label in labels {
            let p_values: Vec<f64> = per_stream.iter().map(|row| row[column]).collect();
            column += 1;
            // Too few streams for a uniformity statistic makes it vacuous.
            let uniformity = if p_values.len() >= 10 { uniformity_p(&p_values)? } else { 1.0 };
            let proportion = p_values.iter().filter(|&&p| p >= alpha).count() as f64 / n_streams as f64;
            let ok = uniformity >= UNIFORMITY_THRESHOLD && proportion >= band.0 && proportion <= band.1;
            instances.push(InstanceResult {
                name: label.to_string(),
                p_values,
                uniformity_p: uniformity,
                proportion_pass: proportion,
                verdict: Verdict::from_bool(ok),
            });
        }
        tests.push(TestResult {
            name: name.to_string(),
            uniformity_p: instances.iter().map(|i| i.uniformity_p).fold(f64::INFINITY, f64::min),
            proportion_pass: instances.iter().map(|i| i.proportion_pass).fold(f64::INFINITY, f64::min),
            verdict: Verdict::from_bool(instances.iter().all(|i| i.verdict.passed())),
            instances,
        });
    }
    Ok(TestReport {
        config: BatteryConfig {
            stream_bits,
            n_streams,
            alpha,
            params,
        },
        proportion_band: band,
        tests,
    })
}

/// Autocorrelation profiles of a sequence before hashing and of the hashed
/// bits (mapped to +-1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfComparison {
    pub before: AcfProfile,
    pub after: AcfProfile,
}

impl AcfComparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,before,after,bound99_before,bound99_after\n");
        for (i, lag) in self.before.lags.iter().enumerate() {
            s += &format!(
                "{lag},{},{},{},{}\n",
                self.before.values[i], self.after.values[i], self.before.bound99, self.after.bound99
            );
        }
        s
    }
}

pub fn bits_to_pm1(bits: &BitBuf) -> Vec<f64> {
    bits.iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
}

pub fn compare_acf<T: Copy + Into<f64>>(before: &[T], after: &BitBuf, max_lag: usize) -> Result<AcfComparison> {
    Ok(AcfComparison {
        before: autocorrelation(before, max_lag)?,
        after: autocorrelation(&bits_to_pm1(after), max_lag)?,
    })
}
