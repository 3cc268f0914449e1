//! Fixed-policy throughput measurement: wall time per simulated day and an
//! O(n) scaling probe.

use std::time::Instant;

use serde::Serialize;

use crate::environment::{locked_action, World};
use crate::population::AgentId;

use super::{HarnessError, ScenarioConfig};

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub agents: usize,
    pub facilities: usize,
    pub warmup_days: usize,
    pub timed_days: usize,
    pub step_seconds: Vec<f64>,
    pub median_step_seconds: f64,
    /// Peak RSS if the platform exposes it.
    pub peak_rss_bytes: Option<u64>,
    pub projected_episode_seconds: f64,
}

/// Steps the world under the locked risky policy and times each day.
pub fn benchmark(
    config: &ScenarioConfig,
    warmup_days: usize,
    timed_days: usize,
) -> Result<BenchReport, HarnessError> {
    let pop = config.build_population()?;
    let mut world = World::new(pop.clone(), {
        let mut w = config_world(config, &pop);
        w.seed = 424_242;
        w
    });
    world.seed_initial_cases(
        config.seed_cases_symptomatic as usize,
        config.seed_cases_exposed as usize,
    );

    let mut actions = vec![0u8; pop.num_agents()];
    let fill_actions = |world: &World, actions: &mut Vec<u8>| {
        for (i, slot) in actions.iter_mut().enumerate() {
            let agent = i as AgentId;
            let g = world.pop.agents[i].age_group;
            *slot = locked_action(g, world.supply_level_of(agent)).flat_index();
        }
    };

    for _ in 0..warmup_days {
        fill_actions(&world, &mut actions);
        world.step_day(&actions)?;
    }
    let mut step_seconds = Vec::with_capacity(timed_days);
    for _ in 0..timed_days {
        fill_actions(&world, &mut actions);
        let t = Instant::now();
        world.step_day(&actions)?;
        step_seconds.push(t.elapsed().as_secs_f64());
    }
    let mut sorted = step_seconds.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    Ok(BenchReport {
        agents: pop.num_agents(),
        facilities: pop.num_facilities(),
        warmup_days,
        timed_days,
        median_step_seconds: median,
        step_seconds,
        peak_rss_bytes: peak_rss(),
        projected_episode_seconds: median * 80.0,
    })
}

fn config_world(
    config: &ScenarioConfig,
    pop: &std::sync::Arc<crate::population::Population>,
) -> crate::environment::WorldConfig {
    crate::environment::WorldConfig {
        disease: config.disease.clone(),
        reward: config.reward.clone(),
        schedule: config.schedule.clone(),
        disclosure_method: config.disclosure_method,
        online_shopping_capacity: config.online_capacity_for(pop.num_agents()),
        seed: 0,
    }
}

/// VmHWM from /proc/self/status, Linux only.
fn peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}
