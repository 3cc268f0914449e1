//! Scalable million-agent Q-learning: per-age-group source/target networks,
//! soft action selection with a Gaussian-threshold exploration rule,
//! episode-end λ-returns computed from a frozen target, and dual replay
//! buffers with fractional replacement.

mod episode;

pub use episode::{run_episode, EpisodeOutput};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::{NetError, QFunction};
use crate::environment::action_space_size;
use crate::population::{AgentId, AGE_GROUPS};
use crate::rng::SimRng;

/// Replacement fraction for the permanent buffer.
pub const BUFFER_BETA: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// 0.01x + 0.001(1-x) with x = episode/20 - 1 clipped to [0, 1]; the
    /// rate deliberately rises as training advances.
    Table,
    Fixed(f64),
}

impl LrSchedule {
    pub fn value(&self, episode: u32) -> f64 {
        match *self {
            LrSchedule::Table => {
                let x = (episode as f64 / 20.0 - 1.0).clamp(0.0, 1.0);
                0.01 * x + 0.001 * (1.0 - x)
            }
            LrSchedule::Fixed(v) => v,
        }
    }
}

/// Bootstrap value used inside the λ-return recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bootstrap {
    /// Soft state value α·logsumexp(Q/α), consistent with soft sampling.
    #[default]
    Soft,
    /// Plain max over actions.
    HardMax,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_step: f64,
    /// Soft rate α: softmax temperature and soft-value scale.
    pub soft_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Number of minibatches one epoch is split into.
    pub minibatches: usize,
    pub episodes: u32,
    pub episode_days: u32,
    /// Opening days with the locked risky action.
    pub locked_days: u32,
    pub hidden_layers: Vec<usize>,
    pub lr: LrSchedule,
    pub bootstrap: Bootstrap,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eps_min: 0.9,
            eps_max: 1.2,
            eps_step: 0.1,
            soft_rate: 1.0 / 3.0,
            gamma: 0.9,
            lambda: 0.9,
            minibatches: 100,
            episodes: 100,
            episode_days: 80,
            locked_days: 10,
            hidden_layers: vec![64, 64],
            lr: LrSchedule::Table,
            bootstrap: Bootstrap::Soft,
        }
    }
}

impl TrainConfig {
    pub fn layer_sizes(&self, obs_dim: usize, actions: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(actions);
        sizes
    }
}

/// One agent-step; `next` observations live in the following transition of
/// the same trajectory, so only per-step data is stored.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub agent: AgentId,
    pub obs_dim: usize,
    /// Row-major step observations, `len × obs_dim`.
    pub observations: Vec<f32>,
    /// Space-index actions.
    pub actions: Vec<u8>,
    pub rewards: Vec<f32>,
    /// λ-return targets, refreshed each epoch.
    pub targets: Vec<f32>,
}

impl Trajectory {
    pub fn new(agent: AgentId, obs_dim: usize) -> Self {
        Trajectory {
            agent,
            obs_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, observation: &[f32], action: u8, reward: f32) {
        debug_assert_eq!(observation.len(), self.obs_dim);
        self.observations.extend_from_slice(observation);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn observation(&self, step: usize) -> &[f32] {
        &self.observations[step * self.obs_dim..(step + 1) * self.obs_dim]
    }
}

/// Softmax sample over Q/α followed by the Gaussian exploration gate: a
/// standard-normal draw at or above ε discards the choice for a uniform one.
pub fn select_action(q_values: &[f64], alpha: f64, eps: f64, rng: &mut SimRng) -> usize {
    let picked = softmax_sample(q_values, alpha, rng);
    let g = rng.normal();
    if g >= eps {
        rng.uniform_usize(q_values.len())
    } else {
        picked
    }
}

fn softmax_sample(q_values: &[f64], alpha: f64, rng: &mut SimRng) -> usize {
    debug_assert!(!q_values.is_empty());
    let m = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cumulative = Vec::with_capacity(q_values.len());
    let mut acc = 0.0;
    for &q in q_values {
        acc += ((q - m) / alpha).exp();
        cumulative.push(acc);
    }
    let u = rng.next_f64() * acc;
    cumulative.partition_point(|&c| c <= u).min(q_values.len() - 1)
}

/// Soft action-distribution probabilities (softmax of Q/α).
pub fn soft_policy(q_values: &[f64], alpha: f64) -> Vec<f64> {
    let m = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q_values.iter().map(|&q| ((q - m) / alpha).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Bootstrap state value under the configured rule.
pub fn state_value(q_values: &[f64], alpha: f64, bootstrap: Bootstrap) -> f64 {
    let m = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match bootstrap {
        Bootstrap::HardMax => m,
        Bootstrap::Soft => {
            let sum: f64 = q_values.iter().map(|&q| ((q - m) / alpha).exp()).sum();
            m + alpha * sum.ln()
        }
    }
}

/// Backward λ-return recursion G_t = r_t + γ[(1-λ)V_{t+1} + λG_{t+1}] with
/// terminal G = r. `next_values[t]` is the bootstrap value of the state
/// after step `t`; its last entry is ignored.
pub fn lambda_return_recursion(
    rewards: &[f64],
    next_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let len = rewards.len();
    debug_assert_eq!(next_values.len(), len);
    let mut targets = vec![0.0; len];
    let mut g_next = 0.0;
    for t in (0..len).rev() {
        let g = if t + 1 == len {
            rewards[t]
        } else {
            rewards[t] + gamma * ((1.0 - lambda) * next_values[t] + lambda * g_next)
        };
        targets[t] = g;
        g_next = g;
    }
    targets
}

/// Fills a trajectory's targets from the frozen target network.
pub fn compute_lambda_returns(traj: &mut Trajectory, target_net: &QFunction, cfg: &TrainConfig) {
    let len = traj.len();
    traj.targets.resize(len, 0.0);
    if len == 0 {
        return;
    }
    let mut obs_buf = vec![0.0f64; traj.obs_dim];
    let mut rewards = vec![0.0f64; len];
    let mut next_values = vec![0.0f64; len];
    for t in 0..len {
        rewards[t] = traj.rewards[t] as f64;
        if t + 1 < len {
            for (slot, &v) in obs_buf.iter_mut().zip(traj.observation(t + 1)) {
                *slot = v as f64;
            }
            let q_next = target_net.forward(&obs_buf);
            next_values[t] = state_value(&q_next, cfg.soft_rate, cfg.bootstrap);
        }
    }
    let targets = lambda_return_recursion(&rewards, &next_values, cfg.gamma, cfg.lambda);
    for (slot, g) in traj.targets.iter_mut().zip(targets) {
        *slot = g as f32;
    }
}

/// Replaces ⌊β·|permanent|⌋ uniformly chosen permanent trajectories with
/// uniformly chosen temporal ones; the first episode adopts the temporal
/// buffer wholesale. Leftover temporal trajectories are dropped.
pub fn merge_buffers(permanent: &mut Vec<Trajectory>, temporal: Vec<Trajectory>, rng: &mut SimRng) {
    if permanent.is_empty() {
        *permanent = temporal;
        return;
    }
    let k = ((permanent.len() as f64 * BUFFER_BETA).floor() as usize).min(temporal.len());
    if k == 0 {
        return;
    }
    let perm_slots = rng.sample_indices(permanent.len(), k);
    let temp_slots = rng.sample_indices(temporal.len(), k);
    let mut picked: Vec<Option<Trajectory>> = {
        let mut tagged: Vec<Option<Trajectory>> = temporal.into_iter().map(Some).collect();
        temp_slots.iter().map(|&i| tagged[i].take()).collect()
    };
    for (slot, t) in perm_slots.into_iter().zip(picked.iter_mut()) {
        permanent[slot] = t.take().expect("each temporal pick used once");
    }
}

/// Source and target network for one age group.
pub struct Learner {
    pub source: QFunction,
    pub target: QFunction,
    pub action_count: usize,
}

impl Learner {
    pub fn new(obs_dim: usize, actions: usize, cfg: &TrainConfig, rng: &mut SimRng) -> Self {
        let sizes = cfg.layer_sizes(obs_dim, actions);
        let source = QFunction::new(&sizes, rng);
        let mut target = QFunction::zeroed(&sizes);
        target.sync_from(&source);
        Learner { source, target, action_count: actions }
    }
}

/// One SMADQN training pass for one age group: sync the target, refresh
/// every λ-return target, shuffle the permanent buffer into `minibatches`
/// batches, one MSE pass over all. Returns the transition-weighted mean
/// pre-step loss.
pub fn train_epoch(
    learner: &mut Learner,
    buffer: &mut [Trajectory],
    cfg: &TrainConfig,
    episode: u32,
    rng: &mut SimRng,
) -> Result<f64, NetError> {
    assert!(!buffer.is_empty(), "cannot train on an empty buffer");
    learner.target.sync_from(&learner.source);
    {
        let target = &learner.target;
        buffer.par_iter_mut().for_each(|traj| compute_lambda_returns(traj, target, cfg));
    }

    let mut index: Vec<(u32, u16)> = Vec::new();
    for (ti, traj) in buffer.iter().enumerate() {
        for s in 0..traj.len() {
            index.push((ti as u32, s as u16));
        }
    }
    if index.is_empty() {
        return Ok(0.0);
    }
    rng.shuffle(&mut index);

    let lr = cfg.lr.value(episode);
    let nb = cfg.minibatches.max(1).min(index.len());
    let obs_dim = buffer[0].obs_dim;
    let mut loss_sum = 0.0;
    let mut rows: Vec<f64> = Vec::new();
    let mut actions: Vec<usize> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for b in 0..nb {
        let lo = index.len() * b / nb;
        let hi = index.len() * (b + 1) / nb;
        rows.clear();
        rows.reserve((hi - lo) * obs_dim);
        actions.clear();
        targets.clear();
        for &(ti, s) in &index[lo..hi] {
            let traj = &buffer[ti as usize];
            rows.extend(traj.observation(s as usize).iter().map(|&v| v as f64));
            actions.push(traj.actions[s as usize] as usize);
            targets.push(traj.targets[s as usize] as f64);
        }
        let loss = learner.source.train_mse_rows(&rows, &actions, &targets, lr)?;
        loss_sum += loss * actions.len() as f64;
    }
    Ok(loss_sum / index.len() as f64)
}

/// Whole-run training state: four learners, their buffers, and ε.
pub struct Smadqn {
    pub config: TrainConfig,
    pub learners: Vec<Learner>,
    pub buffers: Vec<Vec<Trajectory>>,
    pub epsilon: f64,
    pub episodes_done: u32,
    pub obs_dim: usize,
}

impl Smadqn {
    pub fn new(obs_dim: usize, config: TrainConfig, seed: u64) -> Self {
        let mut rng = SimRng::stream(seed, crate::rng::StreamKind::Training, 0, 0);
        let learners = AGE_GROUPS
            .iter()
            .map(|&g| Learner::new(obs_dim, action_space_size(g), &config, &mut rng))
            .collect();
        Smadqn {
            epsilon: config.eps_min,
            config,
            learners,
            buffers: vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            episodes_done: 0,
            obs_dim,
        }
    }

    /// Merge this episode's trajectories, train every group once, advance ε.
    /// Returns per-group losses.
    pub fn end_episode(
        &mut self,
        temporal: Vec<Vec<Trajectory>>,
        seed: u64,
    ) -> Result<[f64; 4], NetError> {
        assert_eq!(temporal.len(), 4);
        self.episodes_done += 1;
        let episode = self.episodes_done;
        let mut losses = [0.0f64; 4];
        for (g, temp) in temporal.into_iter().enumerate() {
            let mut rng = SimRng::stream(
                seed,
                crate::rng::StreamKind::Training,
                episode,
                g as u64 + 1,
            );
            merge_buffers(&mut self.buffers[g], temp, &mut rng);
            if self.buffers[g].is_empty() {
                continue;
            }
            losses[g] =
                train_epoch(&mut self.learners[g], &mut self.buffers[g], &self.config, episode, &mut rng)?;
        }
        self.epsilon = (self.epsilon + self.config.eps_step).min(self.config.eps_max);
        Ok(losses)
    }
}

/// Checkpoint manifest stored beside the four weight files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub config: TrainConfig,
    pub epsilon: f64,
    pub episodes_done: u32,
    pub obs_dim: usize,
}

const GROUP_FILES: [&str; 4] = ["chd.qnet", "sch.qnet", "adu.qnet", "rtr.qnet"];

pub fn save_checkpoint(s: &Smadqn, dir: &Path) -> Result<(), NetError> {
    std::fs::create_dir_all(dir)?;
    for (g, learner) in s.learners.iter().enumerate() {
        learner.source.save_weights(&dir.join(GROUP_FILES[g]))?;
    }
    let manifest = CheckpointManifest {
        version: 1,
        config: s.config.clone(),
        epsilon: s.epsilon,
        episodes_done: s.episodes_done,
        obs_dim: s.obs_dim,
    };
    let f = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(f, &manifest)
        .map_err(|e| NetError::Corrupt(format!("manifest: {e}")))?;
    Ok(())
}

/// Restores a checkpoint. `expected_obs_dim` guards against loading weights
/// across observation layouts (e.g. disclosure on/off).
pub fn load_checkpoint(dir: &Path, expected_obs_dim: usize) -> Result<Smadqn, NetError> {
    let f = BufReader::new(File::open(dir.join("manifest.json"))?);
    let manifest: CheckpointManifest =
        serde_json::from_reader(f).map_err(|e| NetError::Corrupt(format!("manifest: {e}")))?;
    if manifest.obs_dim != expected_obs_dim {
        return Err(NetError::ObservationDim {
            file: manifest.obs_dim,
            expected: expected_obs_dim,
        });
    }
    let mut learners = Vec::with_capacity(4);
    for (g, &group) in AGE_GROUPS.iter().enumerate() {
        let sizes = manifest.config.layer_sizes(manifest.obs_dim, action_space_size(group));
        let source = QFunction::load_weights(&dir.join(GROUP_FILES[g]), Some(&sizes))?;
        let mut target = QFunction::zeroed(&sizes);
        target.sync_from(&source);
        learners.push(Learner { source, target, action_count: action_space_size(group) });
    }
    Ok(Smadqn {
        epsilon: manifest.epsilon,
        episodes_done: manifest.episodes_done,
        obs_dim: manifest.obs_dim,
        config: manifest.config,
        learners,
        buffers: vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()],
    })
}
