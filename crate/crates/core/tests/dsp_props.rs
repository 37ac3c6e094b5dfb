mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use qrng_core::dsp::{
    apply_filter, autocorrelation, design_bandpass, downsample, envelope_zero_lag, first_zero_lag, Z99,
    DEFAULT_TAPS,
};
use qrng_core::source_sim::{simulate_trace, AdcSpec, LowFreqNoise, PerQuadrature, Quadrature, SourceParams};

use common::mask_margins;

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn default_design_meets_response_mask() {
    let (low, high, fs) = (0.2e9, 2.2e9, 20e9);
    let k = design_bandpass(low, high, fs, DEFAULT_TAPS).unwrap();
    let (ripple, atten) = mask_margins(&k, low, high, fs);
    assert!(ripple <= 1.0, "passband ripple {ripple} dB");
    assert!(atten >= 40.0, "stopband attenuation {atten} dB");
}

#[test]
fn tones_follow_the_response() {
    let k = design_bandpass(0.2e9, 2.2e9, 20e9, DEFAULT_TAPS).unwrap();
    let tone = |f: f64| -> f64 {
        let x: Vec<f64> = (0..40_000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 20e9).sin()).collect();
        let y = apply_filter(&x, &k).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        20.0 * (rms(&y) / rms(&x)).log10()
    };
    assert!(tone(1.2e9).abs() <= 1.0);
    assert!(tone(50e6) <= -40.0);
}

#[test]
fn white_noise_variance_scales_by_tap_energy() {
    let k = design_bandpass(0.2e9, 2.2e9, 20e9, DEFAULT_TAPS).unwrap();
    let n = 1_000_000;
    let y = apply_filter(&gaussian(n, 3), &k).unwrap();
    let gain: f64 = k.taps.iter().map(|t| t * t).sum();
    let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    // Correlated output: the variance estimate's standard error is
    // sqrt(2 sum_k r(k)^2 / n) times the variance.
    let acf = autocorrelation(&y[..200_000], 400).unwrap();
    let tau: f64 = 1.0 + 2.0 * acf.values[1..].iter().map(|r| r * r).sum::<f64>();
    let sigma = gain * (2.0 * tau / y.len() as f64).sqrt();
    assert!((var - gain).abs() < 3.0 * sigma, "var {var} gain {gain} sigma {sigma}");
}

#[test]
fn white_noise_acf_stays_inside_bound() {
    // Each lag leaves the 99% band with probability 1%, so single traces
    // land at or above 98% about 92% of the time.
    let trials = 40;
    let fractions: Vec<f64> =
        (0..trials).map(|s| autocorrelation(&gaussian(1_000_000, 100 + s), 100).unwrap().fraction_within_bound()).collect();
    let mean = fractions.iter().sum::<f64>() / trials as f64;
    let good = fractions.iter().filter(|f| **f >= 0.98).count();
    assert!(mean >= 0.98, "mean fraction {mean}");
    assert!(good as f64 >= 0.8 * trials as f64, "{good} of {trials} traces at 98%");
}

fn flat_source() -> SourceParams {
    SourceParams {
        photocurrent: 0.0,
        quantum_slope: PerQuadrature::splat(0.0),
        classical_noise_var: PerQuadrature::splat(0.0),
        electronic_noise_var: PerQuadrature::splat(1e-4),
        lowfreq_noise: LowFreqNoise { amplitude: 0.0, cutoff: 1e6 },
        tia_bandwidth: 2.5e9,
    }
}

#[test]
fn decimating_at_the_null_decorrelates_flat_band_noise() {
    let adc = AdcSpec::new(12, 0.5, 20e9).unwrap();
    let k = design_bandpass(0.2e9, 2.2e9, 20e9, DEFAULT_TAPS).unwrap();
    let traces = 100;
    let mut inside = 0;
    for seed in 0..traces {
        let trace = simulate_trace(&flat_source(), &adc, 100_000 + k.len() - 1, 1000 + seed).unwrap();
        let y = apply_filter(trace.channel(Quadrature::P), &k).unwrap();
        let lag = envelope_zero_lag(&autocorrelation(&y, 40).unwrap()).unwrap();
        assert_eq!(lag, 10);
        let d = downsample(&y, lag, 0).unwrap();
        let acf = autocorrelation(&d, 1).unwrap();
        inside += usize::from(acf.values[1].abs() < acf.bound99);
    }
    assert!(inside * 100 >= 95 * traces as usize, "{inside} of {traces}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_linear(a in -1e3f64..1e3, b in -1e3f64..1e3, s in any::<u64>(), len in 200usize..5000) {
        let k = design_bandpass(0.1, 0.3, 1.0, 63).unwrap();
        let (x, y) = (gaussian(len, s), gaussian(len, !s));
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = apply_filter(&mixed, &k).unwrap();
        let (fx, fy) = (apply_filter(&x, &k).unwrap(), apply_filter(&y, &k).unwrap());
        let scale = a.abs() + b.abs() + 1.0;
        for ((l, u), v) in lhs.iter().zip(&fx).zip(&fy) {
            prop_assert!((l - (a * u + b * v)).abs() <= 1e-9 * scale * (1.0 + u.abs() + v.abs()));
        }
    }

    #[test]
    fn acf_is_normalised(s in any::<u64>(), len in 200usize..3000, offset in -100f64..100.0) {
        let x: Vec<f64> = gaussian(len, s).into_iter().map(|v| v + offset).collect();
        let acf = autocorrelation(&x, 20).unwrap();
        prop_assert!((acf.values[0] - 1.0).abs() < 1e-9);
        prop_assert!(acf.values.iter().all(|v| v.abs() <= 1.0 + 1e-9));
        prop_assert!((acf.bound99 - Z99 / (len as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn first_zero_ignores_positive_scaling(s in any::<u64>(), c in 1e-6f64..1e6) {
        let k = design_bandpass(0.2e9, 2.2e9, 20e9, 255).unwrap();
        let y = apply_filter(&gaussian(20_000, s), &k).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
        let a = autocorrelation(&y, 40).unwrap();
        let b = autocorrelation(&scaled, 40).unwrap();
        prop_assert_eq!(first_zero_lag(&a).ok(), first_zero_lag(&b).ok());
        prop_assert_eq!(envelope_zero_lag(&a).ok(), envelope_zero_lag(&b).ok());
    }
}
