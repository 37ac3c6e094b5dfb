//! Calibration to vacuum units and the min-entropy budget.
//!
//! Quadrature variance is linear in LO photocurrent: the slope is the
//! shot-noise contribution and the intercept is the noise floor. The slope
//! converts ADC codes into vacuum units through
//! `k = sqrt(2 * slope * I)`, in which a pure vacuum state has variance 1/2.
//! One LSB in vacuum units is the resolution `delta = 1 / k` (codes), and the
//! conditional min-entropy per (p, q) pair is bounded below by
//! `log2(pi / (delta_p * delta_q))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::source_sim::{AdcSpec, PerQuadrature};

/// Vacuum-state quadrature variance in vacuum units.
pub const VACUUM_VARIANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    /// Reference photodiode current, amperes.
    pub photocurrent: f64,
    /// Variance of the filtered p quadrature, codes^2.
    pub var_p: f64,
    pub var_q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    /// codes^2 per ampere.
    pub slope_p: f64,
    pub slope_q: f64,
    /// codes^2.
    pub intercept_p: f64,
    pub intercept_q: f64,
    /// RMS residual over both quadratures, codes^2.
    pub residual_rms: f64,
}

impl CalibrationFit {
    pub fn slopes(&self) -> PerQuadrature<f64> {
        PerQuadrature::new(self.slope_p, self.slope_q)
    }

    pub fn intercepts(&self) -> PerQuadrature<f64> {
        PerQuadrature::new(self.intercept_p, self.intercept_q)
    }
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Ordinary least squares of variance against photocurrent, per quadrature,
/// with a free intercept. Two points with distinct currents give the exact
/// interpolating line.
pub fn fit_variance_curve(points: &[CalibrationPoint]) -> Result<CalibrationFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    for p in points {
        ensure(
            p.photocurrent.is_finite()
                && p.var_p.is_finite()
                && p.var_q.is_finite()
                && p.var_p >= 0.0
                && p.var_q >= 0.0,
            || format!("invalid calibration point {p:?}"),
        )?;
    }
    let x: Vec<f64> = points.iter().map(|p| p.photocurrent).collect();
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return Err(Error::DegenerateFit("all photocurrents are equal".into()));
    }
    let yp: Vec<f64> = points.iter().map(|p| p.var_p).collect();
    let yq: Vec<f64> = points.iter().map(|p| p.var_q).collect();
    let (slope_p, intercept_p) = ols(&x, &yp);
    let (slope_q, intercept_q) = ols(&x, &yq);
    let sq: f64 = points
        .iter()
        .map(|p| {
            let rp = p.var_p - (slope_p * p.photocurrent + intercept_p);
            let rq = p.var_q - (slope_q * p.photocurrent + intercept_q);
            rp * rp + rq * rq
        })
        .sum();
    Ok(CalibrationFit {
        slope_p,
        slope_q,
        intercept_p,
        intercept_q,
        residual_rms: (sq / (2 * points.len()) as f64).sqrt(),
    })
}

/// `k = sqrt(2 * slope * I)` per quadrature, in codes per vacuum unit.
pub fn correction_factor(fit: &CalibrationFit, photocurrent: f64) -> Result<PerQuadrature<f64>> {
    if !(photocurrent.is_finite() && photocurrent > 0.0) {
        return Err(Error::NoCertifiableRandomness(format!(
            "photocurrent must be positive to calibrate, got {photocurrent}"
        )));
    }
    if !(fit.slope_p > 0.0 && fit.slope_q > 0.0) {
        return Err(Error::NoCertifiableRandomness(format!(
            "calibration slopes must be positive, got {} and {}",
            fit.slope_p, fit.slope_q
        )));
    }
    Ok(fit.slopes().map(|m| (2.0 * m * photocurrent).sqrt()))
}

/// Divides each code by `k`.
pub fn to_vacuum_units<T: Copy + Into<f64>>(codes: &[T], k: f64) -> Result<Vec<f64>> {
    ensure(k.is_finite() && k > 0.0, || format!("k must be positive, got {k}"))?;
    Ok(codes.iter().map(|&c| c.into() / k).collect())
}

/// Resolution in vacuum units, `R_adc / (2^N k)`. `full_scale` and `k` must
/// use the same unit: pass `2^N` with `k` in codes, or volts with `k` in
/// volts per vacuum unit.
pub fn resolution(full_scale: f64, bits: u32, k: f64) -> Result<f64> {
    ensure(k.is_finite() && k > 0.0, || format!("k must be positive, got {k}"))?;
    Ok(full_scale / (1u64 << bits) as f64 / k)
}

/// Resolution for `k` expressed in codes per vacuum unit.
pub fn resolution_codes(adc: &AdcSpec, k: f64) -> Result<f64> {
    resolution((1u64 << adc.bits) as f64, adc.bits, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEntropy {
    pub bits: f64,
    /// The bound exceeded the sampled bits and was capped.
    pub clamped: bool,
}

/// `log2(pi / (delta_p * delta_q))`, capped at `raw_bits`.
pub fn min_entropy(delta_p: f64, delta_q: f64, raw_bits: f64) -> Result<MinEntropy> {
    ensure(delta_p > 0.0 && delta_q > 0.0, || {
        format!("resolutions must be positive, got {delta_p} and {delta_q}")
    })?;
    let product = delta_p * delta_q;
    // Written negated so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(product < PI) {
        return Err(Error::NoCertifiableRandomness(format!(
            "delta_p * delta_q = {product:.6} is not below pi"
        )));
    }
    let bits = (PI / product).log2();
    if bits > raw_bits {
        Ok(MinEntropy {
            bits: raw_bits,
            clamped: true,
        })
    } else {
        Ok(MinEntropy {
            bits,
            clamped: false,
        })
    }
}

/// Bits per second for `h_min` bits per pair at `pair_rate` pairs per second.
pub fn generation_rate(h_min: f64, pair_rate: f64) -> f64 {
    h_min * pair_rate
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBudget {
    /// Codes per vacuum unit.
    pub k_p: f64,
    pub k_q: f64,
    /// Vacuum units per LSB.
    pub delta_p: f64,
    pub delta_q: f64,
    /// Bits per (p, q) pair.
    pub h_min: f64,
    pub h_min_clamped: bool,
    /// 2N.
    pub raw_bits: u32,
    pub pair_rate: f64,
    pub gen_rate: f64,
}

impl EntropyBudget {
    pub fn from_fit(
        fit: &CalibrationFit,
        photocurrent: f64,
        adc: &AdcSpec,
        pair_rate: f64,
    ) -> Result<Self> {
        ensure(pair_rate.is_finite() && pair_rate > 0.0, || {
            format!("pair rate must be positive, got {pair_rate}")
        })?;
        let k = correction_factor(fit, photocurrent)?;
        let delta_p = resolution_codes(adc, k.p)?;
        let delta_q = resolution_codes(adc, k.q)?;
        let raw_bits = 2 * adc.bits;
        let h = min_entropy(delta_p, delta_q, raw_bits as f64)?;
        Ok(Self {
            k_p: k.p,
            k_q: k.q,
            delta_p,
            delta_q,
            h_min: h.bits,
            h_min_clamped: h.clamped,
            raw_bits,
            pair_rate,
            gen_rate: generation_rate(h.bits, pair_rate),
        })
    }

    /// `(k_p, k_q)`.
    pub fn k(&self) -> PerQuadrature<f64> {
        PerQuadrature::new(self.k_p, self.k_q)
    }
}

/// Variance of a code sequence, normalized by `n` around the sample mean.
pub fn variance<T: Copy + Into<f64>>(x: &[T]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v.into()).sum::<f64>() / n;
    x.iter().map(|&v| (v.into() - mean).powi(2)).sum::<f64>() / n
}
