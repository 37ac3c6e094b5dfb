#![allow(dead_code)]

use std::path::Path;

use qrng_core::dsp::FilterKernel;
use qrng_core::extractor::BitBuf;
use qrng_core::pipeline::config::PipelineConfig;

/// Textbook matrix-vector product over GF(2), `T[i][j] = seed[i - j + n - 1]`.
pub fn naive_toeplitz(seed: &[bool], n: usize, m: usize, x: &[bool]) -> Vec<bool> {
    assert_eq!(seed.len(), n + m - 1);
    assert_eq!(x.len(), n);
    (0..m)
        .map(|i| (0..n).fold(false, |acc, j| acc ^ (seed[i + n - 1 - j] & x[j])))
        .collect()
}

pub fn to_bools(b: &BitBuf) -> Vec<bool> {
    b.iter().collect()
}

pub fn from_bools(v: &[bool]) -> BitBuf {
    let mut b = BitBuf::with_capacity(v.len());
    for &bit in v {
        b.push(bit);
    }
    b
}

/// Band edges of the response mask: flat within 1 dB over the inner
/// passband, at least 40 dB down outside the guard bands.
pub fn passband(low: f64, high: f64) -> (f64, f64) {
    (1.1 * low, 0.9 * high)
}

pub fn stopbands(low: f64, high: f64, fs: f64) -> [(f64, f64); 2] {
    [(0.0, 0.5 * low), (1.1 * high, 0.5 * fs)]
}

/// Worst passband deviation and least stopband attenuation, in dB, over a
/// dense grid.
pub fn mask_margins(k: &FilterKernel, low: f64, high: f64, fs: f64) -> (f64, f64) {
    let grid = |a: f64, b: f64, n: usize| (0..=n).map(move |i| a + (b - a) * i as f64 / n as f64);
    let (pa, pb) = passband(low, high);
    let ripple = grid(pa, pb, 800).map(|f| k.gain_db_at(f).abs()).fold(0.0, f64::max);
    let atten = stopbands(low, high, fs)
        .iter()
        .flat_map(|&(a, b)| grid(a, b, 800))
        .map(|f| -k.gain_db_at(f))
        .fold(f64::INFINITY, f64::min);
    (ripple, atten)
}

/// A configuration small enough for a test, writing into `dir`.
pub fn small_config(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.source.samples = 2_000_000;
    cfg.calibration.points = 8;
    cfg.calibration.samples_per_point = 200_000;
    cfg.tests.stream_bits = 100_000;
    cfg.tests.n_streams = 10;
    cfg.tests.acf_samples = 100_000;
    cfg.output.dir = dir.to_path_buf();
    cfg
}
