use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use qrng_core::extractor::toeplitz::deterministic_seed;
use qrng_core::extractor::BitBuf;
use qrng_core::stattests::{
    compare_acf, ks_distance, proportion_band, run_battery, uniformity_p, Verdict, UNIFORMITY_THRESHOLD,
};

#[test]
fn p_values_of_a_uniform_source_are_uniform() {
    // Default stream length. Shorter streams bias ApproximateEntropy at
    // m = 10: its log-likelihood statistic converges slowly to chi-square.
    let (stream_bits, n_streams) = (1_000_000, 1000);
    let bits = deterministic_seed(stream_bits * n_streams, 0x5eed);
    let report = run_battery(&bits, stream_bits, n_streams).unwrap();
    let mut worst = Vec::new();
    for inst in report.tests.iter().flat_map(|t| &t.instances) {
        assert_eq!(inst.p_values.len(), n_streams);
        assert!(inst.p_values.iter().all(|p| (0.0..=1.0).contains(p)), "{}", inst.name);
        worst.push((inst.name.clone(), ks_distance(&inst.p_values)));
    }
    let failing: Vec<_> = worst.iter().filter(|(_, d)| *d >= 0.05).collect();
    assert!(failing.is_empty(), "KS distance at or above 0.05: {failing:?}");
    assert!(report.all_passed(), "{}", report.to_table());
}

#[test]
fn uniform_p_values_rarely_fail_uniformity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 200;
    let failures = (0..trials)
        .filter(|_| {
            let p: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
            uniformity_p(&p).unwrap() < UNIFORMITY_THRESHOLD
        })
        .count();
    // Expected failures: 200 * 1e-4 = 0.02.
    assert!(failures <= 1, "{failures} of {trials}");
}

#[test]
fn proportion_band_is_three_sigma() {
    let (lo, hi) = proportion_band(0.01, 100);
    let half = 3.0 * (0.99f64 * 0.01 / 100.0).sqrt();
    assert!((lo - (0.99 - half)).abs() < 1e-15);
    assert!((hi - (0.99 + half)).abs() < 1e-15);
    assert!((lo - 0.960150).abs() < 1e-6);
}

#[test]
fn sampler_artifact_at_lag_two_is_visible_before_hashing() {
    let n = 100_000;
    let bound = 2.5758 / (n as f64).sqrt();
    // x_t = e_t + a e_{t-2} has r(2) = a / (1 + a^2).
    let target = 4.0 * bound;
    let a = (1.0 - (1.0 - 4.0 * target * target).sqrt()) / (2.0 * target);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e: Vec<f64> = (0..n + 2).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x: Vec<f64> = (0..n).map(|t| e[t + 2] + a * e[t]).collect();
    let after = deterministic_seed(n, 5);
    let cmp = compare_acf(&x, &after, 100).unwrap();
    assert!(cmp.before.values[2] > cmp.before.bound99, "{} vs {}", cmp.before.values[2], cmp.before.bound99);
    assert!(cmp.before.values[1].abs() < cmp.before.bound99);
    assert!(cmp.after.fraction_within_bound() >= 0.95);
}

#[test]
fn biased_source_fails() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bits = BitBuf::with_capacity(20 * 100_000);
    for _ in 0..20 * 100_000 {
        bits.push(rng.random_bool(0.51));
    }
    let report = run_battery(&bits, 100_000, 20).unwrap();
    assert_eq!(report.test("Frequency").unwrap().verdict, Verdict::Failed);
    assert!(!report.all_passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn battery_is_deterministic(seed in any::<u64>(), streams in 1usize..12) {
        let bits = deterministic_seed(streams * 4096, seed);
        let a = run_battery(&bits, 4096, streams).unwrap();
        let b = run_battery(&bits.clone(), 4096, streams).unwrap();
        prop_assert_eq!(&a, &b);
        for t in &a.tests {
            for inst in &t.instances {
                prop_assert!(inst.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}
