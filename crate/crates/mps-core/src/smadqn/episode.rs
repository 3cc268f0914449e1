//! Rolls one episode of the pandemic world under the current policies,
//! recording per-agent trajectories into temporal buffers.

use rayon::prelude::*;

use crate::approximator::ForwardWorkspace;
use crate::environment::{locked_action, DayMetrics, EnvError, World};
use crate::population::AgentId;
use crate::rng::{SimRng, StreamKind};

use super::{select_action, Learner, TrainConfig, Trajectory};

pub struct EpisodeOutput {
    /// Temporal buffers, one per age group.
    pub trajectories: Vec<Vec<Trajectory>>,
    pub metrics: Vec<DayMetrics>,
}

/// Steps `cfg.episode_days` days. Days before `cfg.locked_days` use the
/// locked risky action; afterwards every living agent samples from its age
/// group's source network. Trajectories end at death, hospitalization, or
/// episode end; agents whose trajectory ended keep acting but are no longer
/// recorded.
pub fn run_episode(
    world: &mut World,
    learners: &[Learner],
    cfg: &TrainConfig,
    epsilon: f64,
    collect: bool,
) -> Result<EpisodeOutput, EnvError> {
    let n = world.pop.num_agents();
    let dim = world.observation_dim();
    let seed = world.cfg.seed;

    let mut obs = vec![0.0f32; n * dim];
    world.fill_observations_f32(&mut obs);

    let mut trajectories: Vec<Trajectory> = if collect {
        (0..n)
            .map(|i| {
                let mut t = Trajectory::new(i as AgentId, dim);
                let cap = cfg.episode_days as usize;
                t.observations.reserve(cap * dim);
                t.actions.reserve(cap);
                t.rewards.reserve(cap);
                t
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut closed = vec![false; n];
    let mut metrics = Vec::with_capacity(cfg.episode_days as usize);
    let mut actions = vec![0u8; n];

    for day in 0..cfg.episode_days {
        let locked = day < cfg.locked_days;
        {
            let pop = &world.pop;
            let world_ref: &World = world;
            let obs_ref = &obs;
            actions
                .par_chunks_mut(crate::environment::CHUNK_HINT)
                .enumerate()
                .for_each(|(ci, block)| {
                    let base = ci * crate::environment::CHUNK_HINT;
                    let mut ws = ForwardWorkspace::default();
                    let mut obs_f64 = vec![0.0f64; dim];
                    for (off, slot) in block.iter_mut().enumerate() {
                        let agent = (base + off) as AgentId;
                        if !world_ref.is_acting(agent) {
                            *slot = 0;
                            continue;
                        }
                        let group = pop.agents[agent as usize].age_group;
                        if locked {
                            *slot =
                                locked_action(group, world_ref.supply_level_of(agent)).flat_index();
                            continue;
                        }
                        let row = &obs_ref[agent as usize * dim..(agent as usize + 1) * dim];
                        for (o, &v) in obs_f64.iter_mut().zip(row) {
                            *o = v as f64;
                        }
                        let q = learners[group.index()].source.forward_into(&obs_f64, &mut ws);
                        let mut rng =
                            SimRng::stream(seed, StreamKind::Training, day, agent as u64);
                        *slot = select_action(q, cfg.soft_rate, epsilon, &mut rng) as u8;
                    }
                });
        }

        let out = world.step_day(&actions)?;

        if collect {
            let acted = &out.acted;
            let rewards = &out.rewards;
            let obs_ref = &obs;
            let world_ref: &World = world;
            trajectories
                .par_iter_mut()
                .zip(closed.par_iter_mut())
                .enumerate()
                .for_each(|(i, (traj, closed))| {
                    if *closed || !acted[i] {
                        return;
                    }
                    let row = &obs_ref[i * dim..(i + 1) * dim];
                    traj.push(row, actions[i], rewards[i] as f32);
                    if !world_ref.is_acting(i as AgentId) {
                        *closed = true;
                    }
                });
        }
        metrics.push(out.metrics);
        world.fill_observations_f32(&mut obs);
    }

    let mut grouped: Vec<Vec<Trajectory>> = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    if collect {
        for traj in trajectories {
            if traj.is_empty() {
                continue;
            }
            let g = world.pop.agents[traj.agent as usize].age_group.index();
            grouped[g].push(traj);
        }
    }
    Ok(EpisodeOutput { trajectories: grouped, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::QFunction;
    use crate::environment::{World, WorldConfig};
    use crate::population::{synthesize_population, PopulationConfig, AGE_GROUPS};
    use std::sync::Arc;

    fn small_world(seed: u64) -> (Arc<crate::population::Population>, World) {
        let cfg = PopulationConfig::scaled(600, 21);
        let pop = Arc::new(synthesize_population(&cfg).unwrap());
        let mut wcfg = WorldConfig::new(seed);
        wcfg.online_shopping_capacity = 9;
        let mut world = World::new(pop.clone(), wcfg);
        world.seed_initial_cases(2, 8);
        (pop, world)
    }

    fn learners_for(world: &World, cfg: &TrainConfig, zeroed: bool) -> Vec<Learner> {
        let mut rng = SimRng::new(5);
        AGE_GROUPS
            .iter()
            .map(|&g| {
                let mut l = Learner::new(
                    world.observation_dim(),
                    crate::environment::action_space_size(g),
                    cfg,
                    &mut rng,
                );
                if zeroed {
                    let sizes = l.source.sizes().to_vec();
                    l.source = QFunction::zeroed(&sizes);
                    l.target = QFunction::zeroed(&sizes);
                }
                l
            })
            .collect()
    }

    #[test]
    fn trajectory_census_matches_population() {
        let (pop, mut world) = small_world(3);
        let cfg = TrainConfig { episode_days: 6, locked_days: 2, ..TrainConfig::default() };
        let learners = learners_for(&world, &cfg, false);
        let out = run_episode(&mut world, &learners, &cfg, 0.9, true).unwrap();
        let mut group_counts = [0usize; 4];
        for a in &pop.agents {
            group_counts[a.age_group.index()] += 1;
        }
        for (g, (trajs, &count)) in
            out.trajectories.iter().zip(group_counts.iter()).enumerate()
        {
            assert_eq!(trajs.len(), count, "group {g} trajectory census");
        }
        assert_eq!(out.metrics.len(), 6);
    }

    #[test]
    fn locked_days_use_identical_actions_within_groups() {
        let (pop, mut world) = small_world(4);
        let cfg = TrainConfig { episode_days: 3, locked_days: 3, ..TrainConfig::default() };
        let learners = learners_for(&world, &cfg, false);
        let out = run_episode(&mut world, &learners, &cfg, 0.9, true).unwrap();
        for g in 0..4 {
            for day in 0..3usize {
                let actions: Vec<u8> = out.trajectories[g]
                    .iter()
                    .filter(|t| t.len() > day)
                    .map(|t| t.actions[day])
                    .collect();
                if let Some(&first) = actions.first() {
                    assert!(
                        actions.iter().all(|&a| a == first),
                        "group {g} day {day}: locked actions must match"
                    );
                }
            }
        }
        let _ = pop;
    }

    #[test]
    fn zero_networks_choose_roughly_uniformly() {
        let (pop, mut world) = small_world(9);
        let cfg = TrainConfig { episode_days: 2, locked_days: 0, ..TrainConfig::default() };
        let learners = learners_for(&world, &cfg, true);
        let out = run_episode(&mut world, &learners, &cfg, 0.9, true).unwrap();
        // Adults and seniors share the 24-action space; pooled over 2 days.
        let mut counts = [0u64; 24];
        for g in [2usize, 3] {
            for t in &out.trajectories[g] {
                for &a in &t.actions {
                    counts[a as usize] += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        let expect = total as f64 / 24.0;
        assert!(total > 500, "enough samples to test uniformity");
        let sigma = (expect * (1.0 - 1.0 / 24.0)).sqrt();
        for (a, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect).abs() < 5.0 * sigma,
                "action {a}: count {c} vs {expect}"
            );
        }
        let _ = pop;
    }
}
