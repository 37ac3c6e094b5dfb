//! `qrng`: batch post-processing for heterodyne QRNG traces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qrng_core::dsp::{apply_filter, autocorrelation};
use qrng_core::extractor::toeplitz::{deterministic_seed, load_seed, os_seed, save_seed};
use qrng_core::extractor::{
    check_dimensions, choose_dimensions, samples_to_bits, BitBuf, ToeplitzHasher, ToeplitzSpec,
};
use qrng_core::pipeline::{self, artifacts, PipelineConfig};
use qrng_core::stattests::run_battery_with;
use qrng_core::trace_file::{self, MAGIC};

#[derive(Parser)]
#[command(name = "qrng", version, about = "Heterodyne QRNG post-processing: filter, calibrate, extract, test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration (TOML). Defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Channel {
    P,
    Q,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (or ingest) the raw trace into the output directory.
    Simulate(ConfigArg),
    /// Run the photocurrent sweep and fit variance against current.
    Calibrate(ConfigArg),
    /// Autocorrelation of a trace channel as CSV (lag,value,bound99).
    Autocorr {
        /// Trace file (native, or headerless with a `.toml` sidecar).
        input: PathBuf,
        #[arg(long, default_value_t = 40)]
        max_lag: usize,
        #[arg(long, value_enum, default_value = "p")]
        channel: Channel,
        /// Skip the band-pass filter.
        #[arg(long)]
        unfiltered: bool,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Band-pass filter and decimate a raw trace.
    Condition {
        input: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Toeplitz-hash a bit file or a conditioned trace.
    Extract(ExtractArgs),
    /// Run the statistical battery on a binary file.
    Test {
        input: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        stream_bits: usize,
        /// Number of streams; all whole streams when omitted.
        #[arg(long)]
        n_streams: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        /// Valid bits in the file, for outputs whose last byte is padded.
        #[arg(long)]
        bits: Option<usize>,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the full pipeline.
    Run(ConfigArg),
    /// Rebuild the report and manifest from stage outputs.
    Report(ConfigArg),
    /// Print or write the default configuration.
    InitConfig {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a Toeplitz seed file.
    GenSeed {
        #[arg(long)]
        len: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Derive the seed from this number instead of OS entropy.
        #[arg(long)]
        deterministic: Option<u64>,
    },
}

#[derive(Args)]
struct ExtractArgs {
    /// Bits (LSB first within bytes) or a conditioned trace file.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 15_000)]
    n: usize,
    /// Output block length; the largest admissible one when omitted.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 63.0)]
    target_eps_exp: f64,
    #[arg(long)]
    seed_file: PathBuf,
    /// Min-entropy per sample pair, bits.
    #[arg(long)]
    hmin: f64,
    /// Bits per sample pair (2N).
    #[arg(long)]
    raw_bits: u32,
    /// Hash even if the compression ratio condition fails.
    #[arg(long)]
    insecure_allow: bool,
}

enum Outcome {
    Pass,
    Fail,
}

fn read_bits_or_trace(path: &Path) -> Result<BitBuf> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        let t = trace_file::decode_trace(&bytes)?;
        Ok(samples_to_bits(&t.p_codes, &t.q_codes, t.adc.bits)?)
    } else {
        Ok(BitBuf::from_bytes_le(&bytes, bytes.len() * 8)?)
    }
}

fn cmd_extract(a: &ExtractArgs) -> Result<Outcome> {
    let dims = match a.m {
        Some(m) => check_dimensions(a.hmin, a.raw_bits, a.n, m)?,
        None => choose_dimensions(a.hmin, a.raw_bits, a.n, a.target_eps_exp)?,
    };
    println!("n = {}, m = {}", dims.n, dims.m);
    println!("eps_exp = {:.4}  ({})", dims.eps_exp, pipeline::EPS_FORMULA);
    println!(
        "ratio m/n = {:.6} {} h_min/raw_bits = {:.6}",
        dims.compression(),
        if dims.ratio_ok { "<" } else { ">=" },
        a.hmin / a.raw_bits as f64
    );
    if !dims.ratio_ok {
        if !a.insecure_allow {
            bail!("ratio condition fails; refusing to extract (pass --insecure-allow to override)");
        }
        eprintln!("warning: ratio condition fails; output is not certified");
    }
    let seed = load_seed(&a.seed_file, dims.n + dims.m - 1)
        .with_context(|| format!("seed file {} must hold {} bits", a.seed_file.display(), dims.n + dims.m - 1))?;
    let spec = ToeplitzSpec::from_dimensions(&dims, seed)?;
    let bits = read_bits_or_trace(&a.input)?;
    let out = ToeplitzHasher::new(&spec).extract(&bits)?;
    std::fs::write(&a.output, out.to_bytes_le())?;
    println!("{} bits in, {} bits out -> {}", bits.len(), out.len(), a.output.display());
    Ok(if dims.ratio_ok { Outcome::Pass } else { Outcome::Fail })
}

struct TestArgs<'a> {
    input: &'a Path,
    stream_bits: usize,
    n_streams: Option<usize>,
    alpha: f64,
    bits: Option<usize>,
    json: Option<&'a Path>,
}

fn cmd_test(a: TestArgs) -> Result<Outcome> {
    let TestArgs { input, stream_bits, n_streams, alpha, bits, json } = a;
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let len = bits.unwrap_or(bytes.len() * 8);
    if len > bytes.len() * 8 {
        bail!("{} holds {} bits, fewer than --bits {len}", input.display(), bytes.len() * 8);
    }
    let bits = BitBuf::from_bytes_le(&bytes, len)?;
    let streams = n_streams.unwrap_or(bits.len() / stream_bits);
    let report = run_battery_with(&bits, stream_bits, streams, alpha)?;
    print!("{}", report.to_table());
    if let Some(path) = json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if report.all_passed() { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_autocorr(input: &Path, max_lag: usize, channel: Channel, unfiltered: bool, cfg: &ConfigArg) -> Result<Outcome> {
    let trace = trace_file::ingest_auto(input)?;
    let ch = match channel {
        Channel::P => &trace.p_codes,
        Channel::Q => &trace.q_codes,
    };
    let acf = if unfiltered {
        autocorrelation(ch, max_lag)?
    } else {
        let kernel = pipeline::kernel_for(&cfg.load()?, trace.adc.sample_rate)?;
        autocorrelation(&apply_filter(ch, &kernel)?, max_lag)?
    };
    print!("{}", acf.to_csv());
    Ok(Outcome::Pass)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let t = pipeline::stage_acquire(&cfg)?;
            println!("{} pairs -> {}", t.len(), cfg.output.dir.join(artifacts::RAW).display());
            Ok(Outcome::Pass)
        }
        Command::Calibrate(c) => {
            let cfg = c.load()?;
            let cal = pipeline::stage_calibrate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&cal.fit)?);
            let vac = cal.vacuum_variance();
            println!("vacuum variance at {:.3e} A: p {:.4}, q {:.4}", cal.operating_photocurrent, vac.p, vac.q);
            Ok(Outcome::Pass)
        }
        Command::Autocorr { input, max_lag, channel, unfiltered, cfg } => {
            cmd_autocorr(&input, max_lag, channel, unfiltered, &cfg)
        }
        Command::Condition { input, cfg } => {
            let cfg = cfg.load()?;
            let t = pipeline::stage_condition(&cfg, &input)?;
            println!(
                "{} pairs at {:.4e} pairs/s -> {}",
                t.len(),
                t.adc.sample_rate,
                cfg.output.dir.join(artifacts::CONDITIONED).display()
            );
            Ok(Outcome::Pass)
        }
        Command::Extract(a) => cmd_extract(&a),
        Command::Test { input, stream_bits, n_streams, alpha, bits, json } => cmd_test(TestArgs {
            input: &input,
            stream_bits,
            n_streams,
            alpha,
            bits,
            json: json.as_deref(),
        }),
        Command::Run(c) => {
            let cfg = c.load()?;
            let out = pipeline::run_pipeline(&cfg)?;
            print!("{}", std::fs::read_to_string(out.dir.join(artifacts::REPORT_TXT))?);
            Ok(if out.report.all_passed { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Report(c) => {
            let cfg = c.load()?;
            let report = pipeline::stage_report(&cfg.output.dir)?;
            pipeline::write_manifest(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.output.dir.join(artifacts::REPORT_TXT))?);
            Ok(if report.all_passed { Outcome::Pass } else { Outcome::Fail })
        }
        Command::InitConfig { output } => {
            let text = PipelineConfig::default().to_toml()?;
            match output {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(Outcome::Pass)
        }
        Command::GenSeed { len, output, deterministic } => {
            let seed = match deterministic {
                Some(s) => deterministic_seed(len, s),
                None => os_seed(len)?,
            };
            save_seed(&output, &seed)?;
            println!("{len} bits -> {}", output.display());
            Ok(Outcome::Pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
