//! `crashnet`: crash detection and dependency-network analysis over daily
//! close-price panels. Subcommands run slices of one pipeline; `run-all`
//! runs everything. All randomness flows from `--seed`, so two runs with
//! the same inputs produce byte-identical outputs.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crashnet::synth::{random_disjoint_pairs, CrashSpec};
use crashnet::SynthSpec;

use crate::config::{RunConfig, Stage};

#[derive(Parser)]
#[command(name = "crashnet", version, about = "Market crash and dependency-network analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Locate the crash window and decompose the index into oscillatory modes
    Detect(RunArgs),
    /// Build the validated dependency network and spanning tree per period
    Network(RunArgs),
    /// Tree topology and core-periphery report per period
    Metrics(RunArgs),
    /// Community structure and its null-model significance per period
    Community(RunArgs),
    /// Swing-magnitude frequency laws before and after the crash
    Gr(RunArgs),
    /// Every stage in sequence, or a subset via --stages
    RunAll(RunAllArgs),
    /// Rerun the network threshold across significance levels
    SweepAlpha(SweepArgs),
    /// Generate a synthetic market with known structure
    Synth(SynthArgs),
    /// Print the built-in defaults as a config file
    DumpConfig,
}

#[derive(Args)]
struct RunArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Close-price panel CSV (`date,TICKER,...`)
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Benchmark index: a CSV path or the name of a price-panel column
    #[arg(long)]
    market_index: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed for every randomized stage
    #[arg(long)]
    seed: Option<u64>,
    /// Significance level for keeping a dependency
    #[arg(long)]
    alpha: Option<f64>,
    /// Detector reference window, trading days
    #[arg(long)]
    window: Option<usize>,
    /// Worker cap; 0 picks the machine default. Results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunAllArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated subset of hellinger,hht,capm,network,metrics,community,gr
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<String>>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated significance levels to sweep
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of stocks
    #[arg(long, default_value_t = 50)]
    n_assets: usize,
    /// Price rows; returns span one day fewer
    #[arg(long, default_value_t = 400)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for prices.csv, index.csv, truth.json
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Planted dependent pairs, disjoint across assets
    #[arg(long, default_value_t = 0)]
    pairs: usize,
    /// Coupling range for the planted pairs
    #[arg(long, default_value_t = 0.3)]
    coupling_lo: f64,
    #[arg(long, default_value_t = 0.9)]
    coupling_hi: f64,
    /// First crash return index; omit for a calm market
    #[arg(long)]
    crash_start: Option<usize>,
    /// Crash length in return days
    #[arg(long, default_value_t = 20)]
    crash_len: usize,
    /// Volatility multiplier inside the crash window
    #[arg(long, default_value_t = 5.0)]
    vol_mult: f64,
    /// Multiplier on pair couplings inside the crash window
    #[arg(long, default_value_t = 1.0)]
    coupling_boost: f64,
    /// Multiplier on pair couplings after the crash window
    #[arg(long, default_value_t = 1.0)]
    post_boost: f64,
    /// Peak extra market-coupling share during the crash, ramped 0..peak
    /// across assets; 0 disables it
    #[arg(long, default_value_t = 0.0)]
    market_coupling: f64,
    /// Daily volatility of the common factor
    #[arg(long, default_value_t = 0.01)]
    factor_vol: f64,
    /// Daily idiosyncratic volatility
    #[arg(long, default_value_t = 0.01)]
    idio_vol: f64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Detect(a) => run(a, vec![Stage::Hellinger, Stage::Hht], "detect"),
        Cmd::Network(a) => run(a, vec![Stage::Network], "network"),
        Cmd::Metrics(a) => run(a, vec![Stage::Metrics], "metrics"),
        Cmd::Community(a) => run(a, vec![Stage::Community], "community"),
        Cmd::Gr(a) => run(a, vec![Stage::Gr], "gr"),
        Cmd::RunAll(a) => {
            let stages = match &a.stages {
                None => Stage::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<Stage>, _>>()
                    .map_err(|e| anyhow::anyhow!(e))?,
            };
            run(a.run, stages, "run-all")
        }
        Cmd::SweepAlpha(a) => {
            let mut cfg = resolve(&a.run)?;
            if let Some(alphas) = a.alphas {
                cfg.alphas = alphas;
            }
            init_threads(&cfg)?;
            pipeline::sweep_alpha(&cfg)
        }
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::DumpConfig => {
            print!("{}", RunConfig::dump_default());
            Ok(())
        }
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.prices {
        cfg.prices = Some(v.clone());
    }
    if let Some(v) = &args.market_index {
        cfg.market_index = Some(v.clone());
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.alpha {
        if !(0.0..=1.0).contains(&v) {
            bail!("--alpha must lie in [0, 1], got {v}");
        }
        cfg.alpha = v;
    }
    if let Some(v) = args.window {
        cfg.window_w = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    Ok(cfg)
}

fn run(args: RunArgs, stages: Vec<Stage>, command: &str) -> Result<()> {
    let mut cfg = resolve(&args)?;
    cfg.stages = stages;
    init_threads(&cfg)?;
    pipeline::run_pipeline(&cfg, command)
}

fn init_threads(cfg: &RunConfig) -> Result<()> {
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::new(a.n_assets, a.days, a.seed);
    spec.factor_vol = a.factor_vol;
    spec.idio_vol = a.idio_vol;
    if a.pairs > 0 {
        spec.planted_pairs =
            random_disjoint_pairs(a.n_assets, a.pairs, a.coupling_lo, a.coupling_hi, a.seed)?;
    }
    if let Some(start) = a.crash_start {
        let market_coupling = if a.market_coupling > 0.0 {
            (0..a.n_assets)
                .map(|i| a.market_coupling * (i + 1) as f64 / a.n_assets as f64)
                .collect()
        } else {
            Vec::new()
        };
        spec.crash = Some(CrashSpec {
            start,
            length: a.crash_len,
            vol_multiplier: a.vol_mult,
            coupling_boost: a.coupling_boost,
            post_coupling_boost: a.post_boost,
            market_coupling,
        });
    }
    pipeline::write_synth(&spec, &a.out)
}
