mod common;

use std::fs;

use qrng_core::pipeline::{self, artifacts, PipelineConfig};
use qrng_core::source_sim::simulate_trace;
use qrng_core::trace_file::{read_trace, sidecar_path, write_trace, ingest_auto};
use qrng_core::Error;

use common::small_config;

#[test]
fn laser_off_reports_no_certifiable_randomness() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.source.photocurrent_a = Some(0.0);
    let err = pipeline::run_pipeline(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, source } => {
            assert_eq!(*stage, "calibrate");
            assert!(matches!(**source, Error::NoCertifiableRandomness(_)));
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("no certifiable randomness"), "{err}");
}

#[test]
fn small_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = pipeline::run_pipeline(&cfg).unwrap();
    for name in artifacts::ALL.iter().chain([&artifacts::MANIFEST]) {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let r = &out.report;
    assert_eq!(r.downsample.factor, 10);
    assert!((r.h_min - 17.5).abs() < 0.3, "{}", r.h_min);
    assert!(r.ratio_ok && r.eps_exp >= 63.0);
    assert!((r.gen_rate_bps - r.h_min * r.pair_rate_hz).abs() < 1e-3 * r.gen_rate_bps);
    assert_eq!(out.manifest.artifacts.len(), artifacts::ALL.len());
    let text = fs::read_to_string(dir.path().join(artifacts::REPORT_TXT)).unwrap();
    assert!(text.contains("H_min"), "{text}");
    let extracted = pipeline::load_extracted(dir.path()).unwrap();
    assert_eq!(extracted.len(), r.extractor.output_bits);
    assert_eq!(r.extractor.output_bits, r.extractor.blocks * r.extractor.dimensions.m);
}

#[test]
fn staged_run_matches_full_run() {
    let full_dir = tempfile::tempdir().unwrap();
    pipeline::run_pipeline(&small_config(full_dir.path())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let d = dir.path();
    pipeline::stage_acquire(&cfg).unwrap();
    pipeline::stage_calibrate(&cfg).unwrap();
    pipeline::stage_condition(&cfg, &d.join(artifacts::RAW)).unwrap();
    let ex = pipeline::stage_extract(&cfg, &d.join(artifacts::CONDITIONED), &d.join(artifacts::CALIBRATION)).unwrap();
    pipeline::stage_test(&cfg, &d.join(artifacts::CONDITIONED), &ex.output).unwrap();
    pipeline::stage_report(d).unwrap();
    pipeline::write_manifest(&cfg).unwrap();

    for name in artifacts::ALL {
        let a = fs::read(full_dir.path().join(name)).unwrap();
        let b = fs::read(d.join(name)).unwrap();
        assert!(a == b, "{name} differs between staged and full runs");
    }
}

#[test]
fn repeated_runs_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline::run_pipeline(&small_config(a.path())).unwrap();
    let rb = pipeline::run_pipeline(&small_config(b.path())).unwrap();
    assert_eq!(ra.report, rb.report);
    for name in [artifacts::EXTRACTED, artifacts::REPORT_JSON, artifacts::REPORT_TXT, artifacts::SEED] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn different_source_seed_changes_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_config(b.path());
    cfg.source.seed += 1;
    pipeline::run_pipeline(&small_config(a.path())).unwrap();
    pipeline::run_pipeline(&cfg).unwrap();
    let read = |d: &std::path::Path| fs::read(d.join(artifacts::EXTRACTED)).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn ingested_trace_reproduces_simulated_run() {
    let sim_dir = tempfile::tempdir().unwrap();
    let cfg = small_config(sim_dir.path());
    pipeline::run_pipeline(&cfg).unwrap();

    let data = tempfile::tempdir().unwrap();
    let trace = simulate_trace(&cfg.source_params().unwrap(), &cfg.adc().unwrap(), cfg.source.samples, cfg.source.seed).unwrap();
    let path = data.path().join("capture.trace");
    write_trace(&path, &trace).unwrap();
    assert_eq!(read_trace(&path).unwrap(), trace);

    let in_dir = tempfile::tempdir().unwrap();
    let mut ingest = small_config(in_dir.path());
    ingest.source.input = Some(path);
    pipeline::run_pipeline(&ingest).unwrap();
    for name in [artifacts::RAW, artifacts::EXTRACTED, artifacts::REPORT_JSON] {
        assert_eq!(
            fs::read(sim_dir.path().join(name)).unwrap(),
            fs::read(in_dir.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn headerless_dump_with_sidecar_is_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.bin");
    // 12-bit codes left-justified in 16 bits, two's complement, p then q.
    let pairs: Vec<(i16, i16)> = (0..1000).map(|i| ((i % 4096 - 2048) as i16, (2047 - i % 4096) as i16)).collect();
    let mut bytes = Vec::new();
    for (p, q) in &pairs {
        bytes.extend_from_slice(&(p << 4).to_le_bytes());
        bytes.extend_from_slice(&(q << 4).to_le_bytes());
    }
    fs::write(&path, &bytes).unwrap();
    fs::write(
        sidecar_path(&path),
        "bits = 12\nsample_rate_hz = 20e9\nfull_scale_v = 0.5\nphotocurrent_a = 7e-5\njustify = \"high\"\n",
    )
    .unwrap();
    let trace = ingest_auto(&path).unwrap();
    assert_eq!(trace.len(), bytes.len() / 4);
    assert_eq!(trace.p_codes[5], pairs[5].0);
    assert_eq!(trace.q_codes[999], pairs[999].1);
    assert_eq!(trace.photocurrent, 7e-5);
}

#[test]
fn oversized_matrix_is_refused_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.extractor.m = Some(11_000);
    cfg.tests.enabled = false;
    let err = pipeline::run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "extract", .. }), "{err:?}");

    cfg.extractor.insecure_allow = true;
    let out = pipeline::run_pipeline(&cfg).unwrap();
    assert!(!out.report.ratio_ok);
    assert!(out.report.eps_exp < 63.0);
    assert!(!out.report.all_passed);
}

#[test]
fn config_round_trips_through_toml_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("out"));
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(PipelineConfig::load(&path).unwrap(), cfg);
}
