//! Experiment harness: scenario configuration, training/evaluation drivers,
//! sensitivity sweeps, policy transfer, throughput benchmarks, and CSV/JSON
//! report emission. Identical (config, seed) pairs produce byte-identical
//! metric files regardless of thread count.

mod bench;
mod report;
mod sweep;
mod transfer;

pub use bench::{benchmark, BenchReport};
pub use report::{
    averaged_rows, write_averaged_csv, write_contact_trace, write_metrics_csv, AveragedRow,
};
pub use sweep::{sensitivity_sweep, SweepParam, SweepReport};
pub use transfer::{curve_l1_distance, transfer_run, TransferReport};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{DayMetrics, RewardParams, World, WorldConfig};
use crate::epidemic::DiseaseParams;
use crate::government::{DisclosureMethod, PolicySchedule};
use crate::population::{
    load_population, synthesize_population, PopError, Population, PopulationConfig,
    FULL_SCALE_AGENTS,
};
use crate::rng::{SimRng, StreamKind};
use crate::smadqn::{
    load_checkpoint, run_episode, save_checkpoint, Smadqn, TrainConfig,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Population(#[from] PopError),
    #[error(transparent)]
    Env(#[from] crate::environment::EnvError),
    #[error(transparent)]
    Net(#[from] crate::approximator::NetError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationSource {
    /// County scaled to this many agents with proportional venue counts.
    Scaled { agents: u64, seed: u64 },
    /// Fully explicit synthesis parameters.
    Synth(PopulationConfig),
    /// Load a population file (see `population::load_population`).
    File(PathBuf),
}

/// A complete experiment definition; serializable so that (config, seed)
/// fully determines every emitted byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub version: u32,
    pub population: PopulationSource,
    pub disease: DiseaseParams,
    pub reward: RewardParams,
    pub schedule: PolicySchedule,
    pub disclosure_method: DisclosureMethod,
    pub train: TrainConfig,
    /// Online shopping slots per day; default scales the full-county value
    /// of 17,000 by population size.
    pub online_shopping_capacity: Option<u64>,
    pub seed_cases_symptomatic: u32,
    pub seed_cases_exposed: u32,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub emit_household_dump: bool,
    pub emit_isolation_log: bool,
    pub emit_contact_trace: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            version: 1,
            population: PopulationSource::Scaled { agents: 100_000, seed: 1 },
            disease: DiseaseParams::default(),
            reward: RewardParams::default(),
            schedule: PolicySchedule::unrestricted(),
            disclosure_method: DisclosureMethod::Empirical,
            train: TrainConfig::default(),
            online_shopping_capacity: None,
            seed_cases_symptomatic: 2,
            seed_cases_exposed: 8,
            seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("out"),
            emit_household_dump: false,
            emit_isolation_log: false,
            emit_contact_trace: false,
        }
    }
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != 1 {
            return Err(HarnessError::Config(format!("unsupported config version {}", self.version)));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed required".into()));
        }
        self.schedule.validate().map_err(HarnessError::Config)?;
        match &self.population {
            PopulationSource::Synth(p) => p.validate()?,
            PopulationSource::Scaled { agents, .. } if *agents == 0 => {
                return Err(HarnessError::Config("population must not be empty".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn build_population(&self) -> Result<Arc<Population>, HarnessError> {
        let pop = match &self.population {
            PopulationSource::Scaled { agents, seed } => {
                synthesize_population(&PopulationConfig::scaled(*agents, *seed))?
            }
            PopulationSource::Synth(cfg) => synthesize_population(cfg)?,
            PopulationSource::File(path) => load_population(path)?,
        };
        Ok(Arc::new(pop))
    }

    pub fn online_capacity_for(&self, agents: usize) -> u64 {
        self.online_shopping_capacity.unwrap_or_else(|| {
            ((17_000.0 * agents as f64 / FULL_SCALE_AGENTS as f64).round() as u64).max(1)
        })
    }

    fn world_config(&self, world_seed: u64, agents: usize) -> WorldConfig {
        WorldConfig {
            disease: self.disease.clone(),
            reward: self.reward.clone(),
            schedule: self.schedule.clone(),
            disclosure_method: self.disclosure_method,
            online_shopping_capacity: self.online_capacity_for(agents),
            seed: world_seed,
        }
    }

    /// Observation dimension implied by the disclosure flag.
    pub fn observation_dim(&self) -> usize {
        if self.schedule.disclosure {
            crate::environment::OBS_DIM_DISCLOSURE
        } else {
            crate::environment::OBS_DIM_BASE
        }
    }
}

/// World seed for (run seed, episode); distinct per episode so epidemics
/// differ across episodes as they do between training runs.
pub fn episode_seed(run_seed: u64, episode: u32) -> u64 {
    SimRng::stream(run_seed, StreamKind::Seeding, episode, 0).next_u64()
}

/// One seed's training output.
pub struct SeedRun {
    pub seed: u64,
    /// Per-episode daily metric series.
    pub episodes: Vec<Vec<DayMetrics>>,
    pub checkpoint_dir: PathBuf,
    pub losses: Vec<[f64; 4]>,
}

pub struct RunReport {
    pub seed_runs: Vec<SeedRun>,
    /// Mean curves over the last `averaging_window` episodes of every seed.
    pub averaged: Vec<AveragedRow>,
    pub averaging_window: usize,
    pub wall_seconds: f64,
    pub per_episode_seconds: Vec<f64>,
}

impl RunReport {
    /// Seed-mean of total (final-day cumulative) cases over the averaging
    /// window; the headline comparison number between scenarios.
    pub fn mean_total_cases(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for run in &self.seed_runs {
            let lo = run.episodes.len().saturating_sub(self.averaging_window);
            for ep in &run.episodes[lo..] {
                if let Some(last) = ep.last() {
                    total += last.cum_cases as f64;
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

const AVERAGING_WINDOW: usize = 10;

/// Trains the configured number of episodes per seed, writing one metrics
/// CSV per (seed, episode), a checkpoint per seed, and an averaged curve
/// over the last ten episodes of all seeds.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    run_scenario_with_init(config, None)
}

/// `init_from` warm-starts every seed's learner set from a checkpoint
/// (policy transfer); ε and the episode counter resume from the manifest.
pub fn run_scenario_with_init(
    config: &ScenarioConfig,
    init_from: Option<&Path>,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let started = Instant::now();
    let pop = config.build_population()?;
    let obs_dim = config.observation_dim();

    let mut seed_runs = Vec::new();
    let mut per_episode_seconds = Vec::new();
    for &seed in &config.seeds {
        let mut smadqn = match init_from {
            Some(dir) => load_checkpoint(dir, obs_dim)?,
            None => Smadqn::new(obs_dim, config.train.clone(), seed),
        };
        // Transfer keeps the manifest's ε/episode counter but trains under
        // the new scenario's hyper-parameters.
        smadqn.config = config.train.clone();
        let first_episode = smadqn.episodes_done + 1;
        let last_episode = smadqn.episodes_done + config.train.episodes;

        let mut episodes = Vec::new();
        let mut losses = Vec::new();
        for episode in first_episode..=last_episode {
            let ep_started = Instant::now();
            let world_seed = episode_seed(seed, episode);
            let mut world = World::new(pop.clone(), config.world_config(world_seed, pop.num_agents()));
            world.seed_initial_cases(
                config.seed_cases_symptomatic as usize,
                config.seed_cases_exposed as usize,
            );
            let out = run_episode(
                &mut world,
                &smadqn.learners,
                &config.train,
                smadqn.epsilon,
                true,
            )?;
            let loss = smadqn.end_episode(out.trajectories, seed)?;
            losses.push(loss);
            write_metrics_csv(
                &config.output_dir.join(format!("metrics_seed{seed}_ep{episode:04}.csv")),
                &out.metrics,
            )?;
            if config.emit_household_dump && episode == last_episode {
                report::write_household_dump(
                    &config.output_dir.join(format!("households_seed{seed}.csv")),
                    &world,
                )?;
            }
            if config.emit_isolation_log && episode == last_episode {
                report::write_isolation_log(
                    &config.output_dir.join(format!("isolation_seed{seed}.csv")),
                    &world.isolation_events,
                )?;
            }
            if config.emit_contact_trace && episode == last_episode {
                report::write_contact_trace(
                    &config.output_dir.join(format!("trace_seed{seed}.csv")),
                    &world.trace,
                )?;
            }
            episodes.push(out.metrics);
            per_episode_seconds.push(ep_started.elapsed().as_secs_f64());
        }
        let checkpoint_dir = config.output_dir.join(format!("checkpoint_seed{seed}"));
        save_checkpoint(&smadqn, &checkpoint_dir)?;
        seed_runs.push(SeedRun { seed, episodes, checkpoint_dir, losses });
    }

    let averaged = averaged_rows(
        seed_runs.iter().map(|r| &r.episodes),
        AVERAGING_WINDOW,
        config.train.episode_days as usize,
    );
    write_averaged_csv(&config.output_dir.join("averaged.csv"), &averaged)?;

    let report = RunReport {
        seed_runs,
        averaged,
        averaging_window: AVERAGING_WINDOW,
        wall_seconds: started.elapsed().as_secs_f64(),
        per_episode_seconds,
    };
    write_run_summary(config, &report)?;
    Ok(report)
}

fn write_run_summary(config: &ScenarioConfig, report: &RunReport) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Summary<'a> {
        seeds: &'a [u64],
        episodes_per_seed: u32,
        averaging_window: usize,
        mean_total_cases: f64,
        wall_seconds: f64,
        mean_episode_seconds: f64,
    }
    let mean_ep = if report.per_episode_seconds.is_empty() {
        0.0
    } else {
        report.per_episode_seconds.iter().sum::<f64>() / report.per_episode_seconds.len() as f64
    };
    let summary = Summary {
        seeds: &config.seeds,
        episodes_per_seed: config.train.episodes,
        averaging_window: report.averaging_window,
        mean_total_cases: report.mean_total_cases(),
        wall_seconds: report.wall_seconds,
        mean_episode_seconds: mean_ep,
    };
    let f = std::fs::File::create(config.output_dir.join("report.json"))?;
    serde_json::to_writer_pretty(f, &summary)?;
    Ok(())
}

/// Evaluation without learning: rolls episodes under a trained (or locked)
/// policy and writes their metric series. With `checkpoint` = `None`, every
/// day uses the locked risky action (the fixed-policy baseline).
pub fn run_eval(
    config: &ScenarioConfig,
    checkpoint: Option<&Path>,
    episodes: u32,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let started = Instant::now();
    let pop = config.build_population()?;
    let obs_dim = config.observation_dim();

    let mut seed_runs = Vec::new();
    let mut per_episode_seconds = Vec::new();
    for &seed in &config.seeds {
        let (smadqn, locked_all) = match checkpoint {
            Some(dir) => (load_checkpoint(dir, obs_dim)?, false),
            None => (Smadqn::new(obs_dim, config.train.clone(), seed), true),
        };
        let mut eval_cfg = config.train.clone();
        if locked_all {
            eval_cfg.locked_days = eval_cfg.episode_days;
        }
        let mut metrics_per_episode = Vec::new();
        for episode in 1..=episodes {
            let ep_started = Instant::now();
            let world_seed = episode_seed(seed, episode);
            let mut world = World::new(pop.clone(), config.world_config(world_seed, pop.num_agents()));
            world.seed_initial_cases(
                config.seed_cases_symptomatic as usize,
                config.seed_cases_exposed as usize,
            );
            let out =
                run_episode(&mut world, &smadqn.learners, &eval_cfg, smadqn.epsilon, false)?;
            write_metrics_csv(
                &config.output_dir.join(format!("eval_seed{seed}_ep{episode:04}.csv")),
                &out.metrics,
            )?;
            metrics_per_episode.push(out.metrics);
            per_episode_seconds.push(ep_started.elapsed().as_secs_f64());
        }
        seed_runs.push(SeedRun {
            seed,
            episodes: metrics_per_episode,
            checkpoint_dir: PathBuf::new(),
            losses: Vec::new(),
        });
    }
    let averaged = averaged_rows(
        seed_runs.iter().map(|r| &r.episodes),
        episodes as usize,
        config.train.episode_days as usize,
    );
    write_averaged_csv(&config.output_dir.join("eval_averaged.csv"), &averaged)?;
    Ok(RunReport {
        seed_runs,
        averaged,
        averaging_window: episodes as usize,
        wall_seconds: started.elapsed().as_secs_f64(),
        per_episode_seconds,
    })
}
