//! Leftover-hash security accounting for Toeplitz extraction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `-log2(eps)` for an `m x n` hash of a source with `h_min` bits per
/// `raw_bits`-bit sample: `(n * h_min / raw_bits - m) / 2`.
pub fn eps_exp(n: usize, m: usize, h_min: f64, raw_bits: u32) -> f64 {
    (n as f64 * h_min / raw_bits as f64 - m as f64) / 2.0
}

/// Strict compression condition `m / n < h_min / raw_bits`.
pub fn ratio_condition(n: usize, m: usize, h_min: f64, raw_bits: u32) -> bool {
    (m as f64) * (raw_bits as f64) < (n as f64) * h_min
}

/// Hash dimensions together with their security accounting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n: usize,
    pub m: usize,
    pub h_min: f64,
    pub raw_bits: u32,
    pub eps_exp: f64,
    pub ratio_ok: bool,
}

impl Dimensions {
    fn new(n: usize, m: usize, h_min: f64, raw_bits: u32) -> Self {
        Self {
            n,
            m,
            h_min,
            raw_bits,
            eps_exp: eps_exp(n, m, h_min, raw_bits),
            ratio_ok: ratio_condition(n, m, h_min, raw_bits),
        }
    }

    pub fn compression(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

fn check_inputs(h_min: f64, raw_bits: u32, n: usize) -> Result<()> {
    if raw_bits == 0 {
        return Err(Error::InvalidParameter("raw_bits must be positive".into()));
    }
    if !(h_min.is_finite() && h_min > 0.0 && h_min <= raw_bits as f64) {
        return Err(Error::InvalidParameter(format!(
            "h_min must be in (0, {raw_bits}], got {h_min}"
        )));
    }
    if n < 2 || !n.is_multiple_of(raw_bits as usize) {
        return Err(Error::InvalidParameter(format!(
            "n = {n} must be a positive multiple of raw_bits = {raw_bits}"
        )));
    }
    Ok(())
}

/// Largest output length `m` that satisfies the ratio condition and reaches
/// `target_eps_exp`.
pub fn choose_dimensions(h_min: f64, raw_bits: u32, n: usize, target_eps_exp: f64) -> Result<Dimensions> {
    check_inputs(h_min, raw_bits, n)?;
    let budget = n as f64 * h_min / raw_bits as f64;
    // Largest integer strictly below the budget, and below budget - 2*target.
    let by_ratio = budget.ceil() as i64 - 1;
    let by_eps = (budget - 2.0 * target_eps_exp).floor() as i64;
    let m = by_ratio.min(by_eps).min(n as i64 - 1);
    if m < 1 {
        return Err(Error::InfeasibleDimensions {
            best_eps_exp: eps_exp(n, 1, h_min, raw_bits),
        });
    }
    let dims = Dimensions::new(n, m as usize, h_min, raw_bits);
    debug_assert!(dims.ratio_ok && dims.eps_exp >= target_eps_exp);
    Ok(dims)
}

/// Accounting for caller-chosen dimensions. Fails only on malformed input;
/// check `ratio_ok` and `eps_exp` for the security verdict.
pub fn check_dimensions(h_min: f64, raw_bits: u32, n: usize, m: usize) -> Result<Dimensions> {
    check_inputs(h_min, raw_bits, n)?;
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!("need 0 < m < n, got m = {m}, n = {n}")));
    }
    Ok(Dimensions::new(n, m, h_min, raw_bits))
}
