//! Shared helpers for the criterion benches.

use std::sync::Arc;

use mps_core::environment::{locked_action, World, WorldConfig};
use mps_core::population::{synthesize_population, Population, PopulationConfig};

pub fn bench_world(agents: u64, seed: u64) -> (Arc<Population>, World) {
    let cfg = PopulationConfig::scaled(agents, seed);
    let pop = Arc::new(synthesize_population(&cfg).expect("synthesis"));
    let mut wcfg = WorldConfig::new(seed);
    wcfg.online_shopping_capacity = (17_000 * agents / 1_184_512).max(1);
    let mut world = World::new(pop.clone(), wcfg);
    world.seed_initial_cases(2, 8);
    (pop, world)
}

pub fn risky_actions(world: &World) -> Vec<u8> {
    (0..world.pop.num_agents() as u32)
        .map(|a| {
            let g = world.pop.agents[a as usize].age_group;
            locked_action(g, world.supply_level_of(a)).flat_index()
        })
        .collect()
}
