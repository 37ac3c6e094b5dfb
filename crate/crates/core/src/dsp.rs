//! Digital conditioning: band-pass FIR design and filtering, autocorrelation
//! analysis and decimation.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Two-sided 99% quantile of the standard normal distribution.
pub const Z99: f64 = 2.5758;

/// Default number of taps of the band-pass kernel.
pub const DEFAULT_TAPS: usize = 1279;

/// Linear-phase FIR kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterKernel {
    pub taps: Vec<f64>,
    pub low_cut: f64,
    pub high_cut: f64,
    pub design_rate: f64,
}

impl FilterKernel {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Group delay in samples; exact for symmetric taps.
    pub fn group_delay(&self) -> f64 {
        (self.taps.len() as f64 - 1.0) / 2.0
    }

    /// Magnitude response at `freq` Hz.
    pub fn gain_at(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.design_rate;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &h) in self.taps.iter().enumerate() {
            let (s, c) = (w * k as f64).sin_cos();
            re += h * c;
            im -= h * s;
        }
        re.hypot(im)
    }

    pub fn gain_db_at(&self, freq: f64) -> f64 {
        20.0 * self.gain_at(freq).log10()
    }

    /// Sum of squared taps: the power gain for white input.
    pub fn white_power_gain(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman-windowed sinc band-pass with unit gain at the band centre.
pub fn design_bandpass(low: f64, high: f64, fs: f64, n_taps: usize) -> Result<FilterKernel> {
    ensure(fs.is_finite() && fs > 0.0, || format!("invalid design rate {fs}"))?;
    ensure(low > 0.0 && low < high && high < fs / 2.0, || {
        format!("band edges must satisfy 0 < low < high < fs/2, got {low}, {high}, fs={fs}")
    })?;
    ensure(n_taps % 2 == 1 && n_taps >= 63, || {
        format!("n_taps must be odd and >= 63, got {n_taps}")
    })?;

    let (f1, f2) = (low / fs, high / fs);
    let mid = (n_taps - 1) / 2;
    let denom = (n_taps - 1) as f64;
    let mut taps = vec![0.0; n_taps];
    for k in 0..=mid {
        let t = k as f64 - mid as f64;
        let ideal = 2.0 * f2 * sinc(2.0 * f2 * t) - 2.0 * f1 * sinc(2.0 * f1 * t);
        let phase = 2.0 * PI * k as f64 / denom;
        let window = 0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
        let v = ideal * window;
        taps[k] = v;
        taps[n_taps - 1 - k] = v;
    }
    let centre = 0.5 * (f1 + f2);
    let response: f64 = taps
        .iter()
        .enumerate()
        .map(|(k, h)| h * (2.0 * PI * centre * (k as f64 - mid as f64)).cos())
        .sum();
    for h in &mut taps {
        *h /= response;
    }
    Ok(FilterKernel {
        taps,
        low_cut: low,
        high_cut: high,
        design_rate: fs,
    })
}

struct OverlapSave {
    fft_len: usize,
    taps_len: usize,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl OverlapSave {
    fn new(taps: &[f64]) -> Self {
        let fft_len = (4 * taps.len()).next_power_of_two().max(1024);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let scale = 1.0 / fft_len as f64;
        let mut spectrum = vec![Complex::new(0.0, 0.0); fft_len];
        for (s, &h) in spectrum.iter_mut().zip(taps) {
            *s = Complex::new(h * scale, 0.0);
        }
        forward.process(&mut spectrum);
        Self {
            fft_len,
            taps_len: taps.len(),
            spectrum,
            forward,
            inverse,
        }
    }

    /// Calls `emit(start, block)` with consecutive runs of the valid output.
    fn run<T: Copy + Into<f64>>(&self, x: &[T], mut emit: impl FnMut(usize, &[f64])) {
        let t = self.taps_len;
        let out_len = x.len() + 1 - t;
        let step = self.fft_len - t + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        let mut block = vec![0.0; step];
        let mut start = 0;
        while start < out_len {
            let seg_end = (start + self.fft_len).min(x.len());
            for (b, &v) in buf.iter_mut().zip(&x[start..seg_end]) {
                *b = Complex::new(v.into(), 0.0);
            }
            for b in buf.iter_mut().skip(seg_end - start) {
                *b = Complex::new(0.0, 0.0);
            }
            self.forward.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                *b *= s;
            }
            self.inverse.process(&mut buf);
            let count = step.min(out_len - start);
            for (o, c) in block[..count].iter_mut().zip(&buf[t - 1..]) {
                *o = c.re;
            }
            emit(start, &block[..count]);
            start += step;
        }
    }
}

fn direct_valid<T: Copy + Into<f64>>(x: &[T], taps: &[f64], mut emit: impl FnMut(usize, &[f64])) {
    let t = taps.len();
    let out_len = x.len() + 1 - t;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let mut acc = 0.0;
        for (j, &h) in taps.iter().enumerate() {
            acc += h * x[i + t - 1 - j].into();
        }
        out.push(acc);
    }
    emit(0, &out);
}

fn convolve_valid<T: Copy + Into<f64>>(
    x: &[T],
    kernel: &FilterKernel,
    emit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    if x.len() <= kernel.len() {
        return Err(Error::TooShort {
            needed: kernel.len() + 1,
            got: x.len(),
        });
    }
    let out_len = x.len() + 1 - kernel.len();
    if out_len * kernel.len() < (1 << 18) {
        direct_valid(x, &kernel.taps, emit);
    } else {
        OverlapSave::new(&kernel.taps).run(x, emit);
    }
    Ok(())
}

/// Linear convolution keeping only the fully overlapped ("valid") region:
/// `y[i] = sum_j h[j] x[i + L - 1 - j]`, length `len(x) - L + 1`.
pub fn apply_filter<T: Copy + Into<f64>>(x: &[T], kernel: &FilterKernel) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len().saturating_sub(kernel.len()) + 1);
    convolve_valid(x, kernel, |_, b| out.extend_from_slice(b))?;
    Ok(out)
}

/// `downsample(apply_filter(x), factor, phase)` without materialising the
/// full-rate output.
pub fn filter_decimate<T: Copy + Into<f64>>(
    x: &[T],
    kernel: &FilterKernel,
    factor: usize,
    phase: usize,
) -> Result<Vec<f64>> {
    check_decimation(factor, phase)?;
    let mut out = Vec::new();
    convolve_valid(x, kernel, |start, block| {
        let first = if start <= phase {
            phase - start
        } else {
            (factor - (start - phase) % factor) % factor
        };
        out.extend(block.iter().skip(first).step_by(factor).copied());
    })?;
    Ok(out)
}

fn check_decimation(factor: usize, phase: usize) -> Result<()> {
    ensure(factor >= 1, || "decimation factor must be >= 1".into())?;
    ensure(phase < factor, || {
        format!("phase {phase} must be smaller than factor {factor}")
    })
}

/// Keeps elements at `phase, phase + factor, ...`.
pub fn downsample<T: Copy>(x: &[T], factor: usize, phase: usize) -> Result<Vec<T>> {
    check_decimation(factor, phase)?;
    Ok(x.iter().skip(phase).step_by(factor).copied().collect())
}

/// Power gain of `kernel` for white noise first shaped by `shaping`.
pub fn noise_power_gain(kernel: &FilterKernel, shaping: &[f64]) -> f64 {
    if shaping.is_empty() {
        return 0.0;
    }
    let mut total = vec![0.0; kernel.len() + shaping.len() - 1];
    for (i, &h) in kernel.taps.iter().enumerate() {
        for (j, &g) in shaping.iter().enumerate() {
            total[i + j] += h * g;
        }
    }
    total.iter().map(|v| v * v).sum()
}

/// Sample autocorrelation normalized by the sample variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfProfile {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub n_samples: usize,
    /// 99% confidence half-width for Gaussian white noise.
    pub bound99: f64,
}

impl AcfProfile {
    pub fn max_lag(&self) -> usize {
        self.lags.len().saturating_sub(1)
    }

    /// Fraction of lags in `1..=max_lag` with `|r| < bound99`.
    pub fn fraction_within_bound(&self) -> f64 {
        let inside = self.values[1..]
            .iter()
            .filter(|v| v.abs() < self.bound99)
            .count();
        inside as f64 / self.max_lag().max(1) as f64
    }

    /// CSV with header `lag,value,bound99`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,value,bound99\n");
        for (lag, v) in self.lags.iter().zip(&self.values) {
            s.push_str(&format!("{lag},{v:.9e},{:.9e}\n", self.bound99));
        }
        s
    }
}

/// Biased autocorrelation estimator
/// `r(k) = sum (x_t - m)(x_{t+k} - m) / sum (x_t - m)^2` for `k = 0..=max_lag`.
pub fn autocorrelation<T: Copy + Into<f64>>(x: &[T], max_lag: usize) -> Result<AcfProfile> {
    ensure(max_lag >= 1, || "max_lag must be >= 1".into())?;
    let needed = 10 * max_lag;
    if x.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: x.len(),
        });
    }
    let n = x.len();
    let mean = x.iter().map(|&v| v.into()).sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|&v| v.into() - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let values = (0..=max_lag)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
        })
        .collect();
    Ok(AcfProfile {
        lags: (0..=max_lag).collect(),
        values,
        n_samples: n,
        bound99: Z99 / (n as f64).sqrt(),
    })
}

/// Smallest lag `k > 0` with `r(k) <= 0`.
pub fn first_zero_lag(acf: &AcfProfile) -> Result<usize> {
    ensure(acf.values.len() >= 2, || "ACF needs at least two lags".into())?;
    acf.values
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, &v)| v <= 0.0)
        .map(|(k, _)| k)
        .ok_or(Error::NoZeroCrossing {
            max_lag: acf.max_lag(),
        })
}

/// Magnitude of the analytic ACF, `sqrt(r^2 + H[r]^2)`, where `H` is the
/// discrete Hilbert transform of the even extension of `r`.
pub fn envelope(acf: &AcfProfile) -> Vec<f64> {
    let r = &acf.values;
    let l = r.len() as i64 - 1;
    (0..=l)
        .map(|k| {
            let mut h = 0.0;
            // Odd offsets only; the kernel vanishes on even ones.
            let mut m = -l + if (k + l) % 2 == 0 { 1 } else { 0 };
            while m <= l {
                h += r[m.unsigned_abs() as usize] * 2.0 / (PI * (k - m) as f64);
                m += 2;
            }
            r[k as usize].hypot(h)
        })
        .collect()
}

/// Lag of the first null of the ACF envelope.
///
/// A band-pass process has an ACF that oscillates at the band centre, so its
/// first sign change happens well before samples decorrelate. The envelope
/// null sits at `fs / bandwidth` for a flat band and is the lag at which
/// decimation yields nearly uncorrelated samples. The first local minimum of
/// the envelope is refined with a parabola through its neighbours and rounded
/// to the nearest lag.
pub fn envelope_zero_lag(acf: &AcfProfile) -> Result<usize> {
    ensure(acf.values.len() >= 8, || "envelope needs at least 8 lags".into())?;
    let env = envelope(acf);
    // The Hilbert sum is truncated at max_lag; only trust the first half.
    let limit = env.len() / 2;
    for k in 1..limit {
        if env[k] < env[k - 1] && env[k] <= env[k + 1] {
            let curvature = env[k - 1] - 2.0 * env[k] + env[k + 1];
            let offset = if curvature > 0.0 {
                0.5 * (env[k - 1] - env[k + 1]) / curvature
            } else {
                0.0
            };
            let lag = (k as f64 + offset).round().max(1.0);
            return Ok(lag as usize);
        }
    }
    Err(Error::NoZeroCrossing {
        max_lag: acf.max_lag(),
    })
}

/// One-sided Welch power spectral density with a Hann window and 50% overlap.
/// Returns `(frequency_hz, psd)` pairs.
pub fn welch_psd<T: Copy + Into<f64>>(
    x: &[T],
    segment: usize,
    fs: f64,
) -> Result<Vec<(f64, f64)>> {
    ensure(segment >= 8 && segment.is_power_of_two(), || {
        format!("segment length must be a power of two >= 8, got {segment}")
    })?;
    if x.len() < segment {
        return Err(Error::TooShort {
            needed: segment,
            got: x.len(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(segment);
    let window: Vec<f64> = (0..segment)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment as f64).cos())
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let mean = x.iter().map(|&v| v.into()).sum::<f64>() / x.len() as f64;
    let mut acc = vec![0.0; segment / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); segment];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= x.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new((x[start + i].into() - mean) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += segment / 2;
    }
    let scale = 1.0 / (fs * wpow * count as f64);
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let one_sided = if i == 0 || i == segment / 2 { 1.0 } else { 2.0 };
            (i as f64 * fs / segment as f64, a * scale * one_sided)
        })
        .collect())
}
