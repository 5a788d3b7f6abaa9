//! Command-line harness: train one configuration, run the three-way
//! comparison, or benchmark memory-management cost.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dualmem::dual_memory::MemoryMode;
use dualmem::envs::EnvKind;
use dualmem::harness::{bench_csv, bench_memory_ops, compare, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dualmem", version, about = "Dual replay memory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent with one memory mode and write a metrics CSV.
    Train(TrainArgs),
    /// Run all three memory modes from a shared config over several seeds.
    Compare(CompareArgs),
    /// Measure memory-management cycle cost across main-memory capacities.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Optional key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    /// per | psmm | dms
    #[arg(long)]
    mode: Option<MemoryMode>,
    #[arg(long)]
    main_capacity: Option<usize>,
    #[arg(long)]
    cache_capacity: Option<usize>,
    /// Stratified copies per cache refresh.
    #[arg(long)]
    t: Option<usize>,
    /// Environment steps per training step.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Shared key=value config file (capacities are read as the dual split).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seed list, e.g. 0,1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for per-run CSVs and summary.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated main capacities; scientific notation allowed (1e4).
    #[arg(long, value_delimiter = ',')]
    capacities: Vec<String>,
    #[arg(long)]
    mode: MemoryMode,
    #[arg(long, default_value_t = 2_000)]
    cache_capacity: usize,
    #[arg(long, default_value_t = 16)]
    t: usize,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Compare(args) => run_compare(args),
        Command::Bench(args) => bench(args),
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => {
            let env = args.env.unwrap_or(EnvKind::GridWorld);
            let mode = args.mode.unwrap_or(MemoryMode::DualDms);
            ExperimentConfig::preset(env, mode)
        }
    };
    if let Some(env) = args.env {
        // Re-derive the preset when the env flag overrides a preset-based
        // config, keeping step budgets and capacities consistent.
        if args.config.is_none() {
            let mode = args.mode.unwrap_or(cfg.mode);
            cfg = ExperimentConfig::preset(env, mode);
        } else {
            cfg.env = env;
        }
    }
    if let Some(mode) = args.mode {
        if args.config.is_none() {
            cfg = ExperimentConfig::preset(cfg.env, mode);
        } else {
            cfg.mode = mode;
        }
    }
    if let Some(v) = args.main_capacity {
        cfg.main_capacity = v;
    }
    if let Some(v) = args.cache_capacity {
        cfg.cache_capacity = v;
    }
    if let Some(v) = args.t {
        cfg.t = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.steps {
        cfg.total_steps = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.out {
        cfg.out = Some(v);
    }

    let result = run_experiment(&cfg).context("run failed")?;
    let s = &result.summary;
    println!(
        "env={} mode={} steps={} seed={}",
        cfg.env, cfg.mode, cfg.total_steps, cfg.seed
    );
    println!(
        "episodes={} scheduled_train_steps={} train_steps={} (skipped {}) refreshes={} (skipped {})",
        s.episodes,
        s.scheduled_train_steps,
        s.train_steps,
        s.train_steps_skipped_warmup,
        s.refreshes,
        s.refreshes_skipped_warmup
    );
    println!(
        "final_train_return_mean100={} final_test_return_mean={}",
        result.final_train_return(),
        result.final_test_return()
    );
    if let Some(out) = &cfg.out {
        println!("metrics written to {}", out.display());
    }
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<()> {
    if args.seeds.is_empty() {
        bail!("--seeds needs at least one seed");
    }
    let base = ExperimentConfig::from_file(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let summary = compare(&base, &args.seeds, &args.out).context("comparison failed")?;
    println!("mode seed final_train final_test");
    for r in &summary.records {
        println!(
            "{:4} {:4} {:11.4} {:10.4}",
            r.mode.to_string(),
            r.seed,
            r.final_train_return,
            r.final_test_return
        );
    }
    for (mode, train, test) in &summary.medians {
        println!("{mode} median final_train={train:.4} final_test={test:.4}");
    }
    println!("CSVs written to {}", args.out.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let capacities: Vec<usize> = args
        .capacities
        .iter()
        .map(|s| parse_capacity(s))
        .collect::<Result<_>>()?;
    if capacities.is_empty() {
        bail!("--capacities needs at least one capacity");
    }
    let rows = bench_memory_ops(
        &capacities,
        args.mode,
        args.cache_capacity,
        args.t,
        args.n,
        args.trials,
        args.seed,
    )
    .context("benchmark failed")?;
    let csv = bench_csv(&rows);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!("{csv}");
            println!("timings written to {}", path.display());
        }
        None => println!("{csv}"),
    }
    Ok(())
}

fn parse_capacity(s: &str) -> Result<usize> {
    if let Ok(v) = s.trim().parse::<usize>() {
        return Ok(v);
    }
    let f: f64 = s
        .trim()
        .parse()
        .with_context(|| format!("invalid capacity '{s}'"))?;
    if !f.is_finite() || f < 1.0 || f.fract() != 0.0 {
        bail!("invalid capacity '{s}'");
    }
    Ok(f as usize)
}
