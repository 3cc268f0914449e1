//! `mps` — synthesize populations, train and evaluate policies, run
//! sensitivity sweeps and throughput benchmarks.
//!
//! `MPS_THREADS` caps the worker thread count.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mps_core::harness::{
    benchmark, run_eval, run_scenario_with_init, sensitivity_sweep, PopulationSource,
    ScenarioConfig, SweepParam,
};
use mps_core::population::{save_population, synthesize_population, PopulationConfig};

#[derive(Parser)]
#[command(name = "mps", version, about = "Agent-based pandemic simulator with learning agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a county population file.
    SynthPop {
        /// Population config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output population file.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train policies under a scenario config.
    Train {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Warm-start every seed from this checkpoint directory.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the locked risky policy) without learning.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint directory; omit to evaluate the locked risky policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes: u32,
    },
    /// Sensitivity sweep over an infection or reward parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `beta` (fixed risky policy) or `r_mask` (full training).
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `12.64,15.8,18.96`.
        #[arg(long)]
        values: String,
    },
    /// Fixed-policy throughput benchmark.
    Bench {
        /// Scenario config; defaults to the full-scale county.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Synthesize this many agents instead of the config's population.
        #[arg(long)]
        agents: Option<u64>,
        #[arg(long, default_value_t = 2)]
        warmup_days: usize,
        #[arg(long, default_value_t = 5)]
        timed_days: usize,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MPS_THREADS") {
        let n: usize = v.parse().context("MPS_THREADS must be a positive integer")?;
        if n == 0 {
            bail!("MPS_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    init_threads()?;
    let cli = Cli::parse();
    match cli.command {
        Command::SynthPop { config, out, seed } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg: PopulationConfig = serde_json::from_str(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let pop = synthesize_population(&cfg)?;
            save_population(&pop, &out)?;
            println!(
                "wrote {} agents and {} facilities to {}",
                pop.num_agents(),
                pop.num_facilities(),
                out.display()
            );
        }
        Command::Train { config, init_from } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let report = run_scenario_with_init(&cfg, init_from.as_deref())?;
            println!(
                "trained {} seed(s) x {} episode(s) in {:.1}s; mean total cases {:.1}",
                cfg.seeds.len(),
                cfg.train.episodes,
                report.wall_seconds,
                report.mean_total_cases()
            );
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::Eval { config, checkpoint, episodes } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let report = run_eval(&cfg, checkpoint.as_deref(), episodes)?;
            println!(
                "evaluated {} episode(s) per seed in {:.1}s; mean total cases {:.1}",
                episodes,
                report.wall_seconds,
                report.mean_total_cases()
            );
        }
        Command::Sweep { config, param, values } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let param = SweepParam::parse(&param)
                .with_context(|| format!("unknown sweep parameter '{param}'"))?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().context("bad sweep value"))
                .collect::<Result<_>>()?;
            let report = sensitivity_sweep(&cfg, param, &values)?;
            println!("sweep {} over {:?}", report.param, report.values);
            println!("mean total cases: {:?}", report.mean_total_cases);
            println!(
                "monotone increasing: {}",
                if report.monotone_increasing { "yes" } else { "no" }
            );
        }
        Command::Bench { config, agents, warmup_days, timed_days } => {
            let mut cfg = match config {
                Some(path) => ScenarioConfig::from_file(&path)?,
                None => ScenarioConfig {
                    population: PopulationSource::Synth(PopulationConfig::full_scale(7)),
                    ..ScenarioConfig::default()
                },
            };
            if let Some(n) = agents {
                cfg.population = PopulationSource::Synth(PopulationConfig::scaled(n, 7));
            }
            let report = benchmark(&cfg, warmup_days, timed_days)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
