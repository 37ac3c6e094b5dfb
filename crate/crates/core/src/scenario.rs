//! Simulator parameters back-solved from target operating-point figures.
//!
//! Given the min-entropy and vacuum-unit variance wanted after filtering,
//! the quantum slope, classical excess and electronic floor are chosen so
//! that the calibration of the filtered codes lands on those targets. The
//! power gains of the band-pass for each noise shape are computed exactly
//! from the filter taps and the shaping impulse responses.

use serde::{Deserialize, Serialize};

use crate::calibration::VACUUM_VARIANCE;
use crate::dsp::{design_bandpass, noise_power_gain, FilterKernel, DEFAULT_TAPS};
use crate::error::{ensure, Result};
use crate::source_sim::{
    lowfreq_impulse_response, tia_impulse_response, AdcSpec, LowFreqNoise, PerQuadrature, SourceParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTargets {
    /// Min-entropy per sample pair at the operating point, bits.
    pub h_min: f64,
    /// Filtered variance in vacuum units at the operating point.
    pub vacuum_variance: f64,
    /// Operating photocurrent, A.
    pub photocurrent: f64,
    /// Fraction of the laser-off filtered variance due to the white
    /// electronic floor plus quantization; the rest is TIA-shaped excess.
    pub electronic_share: f64,
    /// RMS of the laser-on low-frequency noise before filtering, ADC codes.
    pub lowfreq_rms_codes: f64,
    pub lowfreq_cutoff: f64,
    pub tia_bandwidth: f64,
    pub adc: AdcSpec,
    pub band_low: f64,
    pub band_high: f64,
    pub taps: usize,
}

/// Filter power gains by noise shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterGains {
    pub tia: f64,
    pub white: f64,
    pub lowfreq: f64,
}

/// Calibration figures the back-solved source should reproduce, in filtered
/// ADC codes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCalibration {
    /// Variance slope, codes^2 per ampere.
    pub slope: f64,
    /// Filtered variance with the laser off, codes^2.
    pub laser_off_intercept: f64,
    /// Intercept of a sweep taken with the laser on (includes the residual
    /// low-frequency noise passed by the filter), codes^2.
    pub laser_on_intercept: f64,
    /// Correction factor at the operating point, codes per vacuum unit.
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub targets: ScenarioTargets,
    pub params: SourceParams,
    pub gains: FilterGains,
    pub expected: ExpectedCalibration,
}

impl Scenario {
    pub fn kernel(&self) -> Result<FilterKernel> {
        let t = &self.targets;
        design_bandpass(t.band_low, t.band_high, t.adc.sample_rate, t.taps)
    }

    /// Expected filtered variance at `photocurrent` (codes^2, laser on).
    pub fn expected_variance(&self, photocurrent: f64) -> f64 {
        self.expected.slope * photocurrent + self.expected.laser_on_intercept
    }

    /// Expected vacuum-unit variance at `photocurrent`.
    pub fn expected_vacuum_variance(&self, photocurrent: f64) -> f64 {
        let mi = self.expected.slope * photocurrent;
        VACUUM_VARIANCE * (mi + self.expected.laser_on_intercept) / mi
    }

    /// Expected min-entropy at `photocurrent`, unclamped.
    pub fn expected_h_min(&self, photocurrent: f64) -> f64 {
        let k2 = 2.0 * self.expected.slope * photocurrent;
        (std::f64::consts::PI * k2).log2()
    }
}

/// Filter power gains for the noise shapes of `targets`.
pub fn filter_gains(targets: &ScenarioTargets) -> Result<FilterGains> {
    let fs = targets.adc.sample_rate;
    let kernel = design_bandpass(targets.band_low, targets.band_high, fs, targets.taps)?;
    Ok(FilterGains {
        tia: noise_power_gain(&kernel, &tia_impulse_response(targets.tia_bandwidth, fs)),
        white: kernel.white_power_gain(),
        lowfreq: noise_power_gain(&kernel, &lowfreq_impulse_response(targets.lowfreq_cutoff, fs)),
    })
}

pub fn back_solve(targets: &ScenarioTargets) -> Result<Scenario> {
    targets.adc.validate()?;
    ensure(targets.h_min > 0.0 && targets.h_min <= 2.0 * targets.adc.bits as f64, || {
        format!("h_min must be in (0, {}], got {}", 2 * targets.adc.bits, targets.h_min)
    })?;
    ensure(targets.vacuum_variance >= VACUUM_VARIANCE, || {
        format!("vacuum variance must be at least {VACUUM_VARIANCE}, got {}", targets.vacuum_variance)
    })?;
    ensure(targets.photocurrent > 0.0, || "operating photocurrent must be positive".into())?;
    ensure((0.0..=1.0).contains(&targets.electronic_share), || {
        format!("electronic share must be in [0, 1], got {}", targets.electronic_share)
    })?;
    ensure(targets.lowfreq_rms_codes >= 0.0, || "low-frequency RMS must be non-negative".into())?;

    let gains = filter_gains(targets)?;
    let lsb2 = targets.adc.lsb().powi(2);

    // H = log2(pi k^2) with k^2 = 2 m I (codes).
    let k2 = 2f64.powf(targets.h_min) / std::f64::consts::PI;
    let slope = k2 / (2.0 * targets.photocurrent);
    // vacuum variance = 1/2 + b / k^2
    let laser_on_intercept = (targets.vacuum_variance - VACUUM_VARIANCE) * k2;
    let lowfreq_passed = gains.lowfreq * targets.lowfreq_rms_codes.powi(2);
    let laser_off_intercept = laser_on_intercept - lowfreq_passed;
    ensure(laser_off_intercept >= 0.0, || {
        "low-frequency noise leaks more power than the intercept allows".into()
    })?;
    let quantization = gains.white / 12.0;
    let electronic_codes = (targets.electronic_share * laser_off_intercept - quantization) / gains.white;
    ensure(electronic_codes >= 0.0, || {
        "electronic share is below the quantization noise floor".into()
    })?;
    let classical_codes = (1.0 - targets.electronic_share) * laser_off_intercept / gains.tia;

    let params = SourceParams {
        photocurrent: targets.photocurrent,
        quantum_slope: PerQuadrature::splat(slope / gains.tia * lsb2),
        classical_noise_var: PerQuadrature::splat(classical_codes * lsb2),
        electronic_noise_var: PerQuadrature::splat(electronic_codes * lsb2),
        lowfreq_noise: LowFreqNoise {
            amplitude: targets.lowfreq_rms_codes * targets.adc.lsb(),
            cutoff: targets.lowfreq_cutoff,
        },
        tia_bandwidth: targets.tia_bandwidth,
    };
    params.validate()?;
    Ok(Scenario {
        targets: targets.clone(),
        params,
        gains,
        expected: ExpectedCalibration {
            slope,
            laser_off_intercept,
            laser_on_intercept,
            k: k2.sqrt(),
        },
    })
}

/// Operating point of the reference device: 12-bit 20 GS/s ADC, 0.2-2.2 GHz
/// band, 17.5 bits of min-entropy and vacuum-unit variance 1.23 at 70 uA.
pub fn reference_targets() -> ScenarioTargets {
    ScenarioTargets {
        h_min: 17.5,
        vacuum_variance: 1.23,
        photocurrent: 70e-6,
        electronic_share: 0.3,
        lowfreq_rms_codes: 150.0,
        lowfreq_cutoff: 50e6,
        tia_bandwidth: 2.5e9,
        adc: AdcSpec {
            bits: 12,
            full_scale: 0.5,
            sample_rate: 20e9,
        },
        band_low: 0.2e9,
        band_high: 2.2e9,
        taps: DEFAULT_TAPS,
    }
}

pub fn reference_scenario() -> Result<Scenario> {
    back_solve(&reference_targets())
}

/// Min-entropy after scaling the photocurrent by `factor` at fixed slope:
/// `k^2` scales linearly, so the entropy grows by `log2(factor)`.
pub fn projected_h_min(h_min: f64, factor: f64) -> f64 {
    h_min + factor.log2()
}

/// Photocurrent factor of the loss-reduction projection (ten times the
/// optical power at the detectors).
pub const PROJECTED_POWER_FACTOR: f64 = 10.0;
