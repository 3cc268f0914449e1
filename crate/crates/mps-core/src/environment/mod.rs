//! The per-agent MDP surface: action encoding and age-restricted action
//! spaces, observation layout, reward computation, and household supply.

mod world;

pub use world::{DayOutput, World, WorldConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epidemic::HealthState;
use crate::population::AgeGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shopping {
    None,
    Online,
    Offline,
}

/// One day's decision: mask, activity level, shopping channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Action {
    pub masked: bool,
    pub act: u8,
    pub shop: Shopping,
}

pub const FLAT_ACTIONS: usize = 24;
pub const RESTRICTED_ACTIONS: usize = 2;

impl Action {
    /// Flat index: bit 0 mask, bits 1-2 activity, upper bits shopping.
    pub fn flat_index(self) -> u8 {
        let shop = match self.shop {
            Shopping::None => 0u8,
            Shopping::Online => 1,
            Shopping::Offline => 2,
        };
        (self.masked as u8) + 2 * self.act + 8 * shop
    }

    pub fn from_flat(flat: u8) -> Action {
        debug_assert!((flat as usize) < FLAT_ACTIONS);
        let shop = match flat / 8 {
            0 => Shopping::None,
            1 => Shopping::Online,
            _ => Shopping::Offline,
        };
        Action { masked: flat % 2 == 1, act: (flat % 8) / 2, shop }
    }
}

/// Number of choices available to an age group. Children and students only
/// decide on masks; their activity is pinned to compulsory visits and they
/// never shop.
pub fn action_space_size(age: AgeGroup) -> usize {
    if age.decides_activity() {
        FLAT_ACTIONS
    } else {
        RESTRICTED_ACTIONS
    }
}

/// All valid flat actions for an age group, in space-index order. For every
/// group the space index equals the flat index over the valid prefix.
pub fn action_space(age: AgeGroup) -> Vec<Action> {
    (0..action_space_size(age) as u8).map(Action::from_flat).collect()
}

/// Checks a flat action against an age group's space.
pub fn action_valid(age: AgeGroup, flat: u8) -> bool {
    (flat as usize) < action_space_size(age)
}

/// The risky behaviour locked in for the opening days: full activity, no
/// mask, shopping offline only when supplies run low.
pub fn locked_action(age: AgeGroup, supply_level: f64) -> Action {
    if age.decides_activity() {
        Action {
            masked: false,
            act: 3,
            shop: if supply_level < 0.5 { Shopping::Offline } else { Shopping::None },
        }
    } else {
        Action { masked: false, act: 0, shop: Shopping::None }
    }
}

/// Household stock level for `d` days since the last replenishment.
pub fn supply_level(days_since_replenish: u16) -> f64 {
    let d = days_since_replenish as f64 / 21.0;
    (1.0 - d * d).max(0.0)
}

/// Daily household supply update: any successful shop resets the clock,
/// otherwise it advances.
pub fn supply_step(days_since_replenish: u16, replenished: bool) -> u16 {
    if replenished {
        0
    } else {
        days_since_replenish.saturating_add(1)
    }
}

/// Uniformly random subset of at most `capacity` served requests, in
/// selection order. Delivery capacity is shared county-wide per day.
pub fn resolve_online_shopping(
    requests: &[crate::population::AgentId],
    capacity: usize,
    rng: &mut crate::rng::SimRng,
) -> Vec<crate::population::AgentId> {
    if requests.len() <= capacity {
        return requests.to_vec();
    }
    let mut pool = requests.to_vec();
    for k in 0..capacity {
        let j = k + rng.uniform_usize(pool.len() - k);
        pool.swap(k, j);
    }
    pool.truncate(capacity);
    pool
}

/// What an agent (and everyone around it) can tell about a health state:
/// 0 looks healthy, 1 symptomatic, 2 severe/hospitalized, 3 known recovered,
/// 4 dead.
pub fn observable_class(state: HealthState) -> usize {
    use HealthState::*;
    match state {
        Hea | Inc | Ina | Pre | Asy | Ima => 0,
        Sym | Msy => 1,
        Ssy => 2,
        Ims => 3,
        Dea => 4,
    }
}

pub const OBS_HEA_CLASSES: usize = 5;
/// Work-chunk granularity for parallel per-agent loops.
pub const CHUNK_HINT: usize = 4096;
/// Observation layout: one-hot health class, household risk, supply, city
/// count, day; optionally four per-venue-group risk entries.
pub const OBS_DIM_BASE: usize = OBS_HEA_CLASSES + 4;
pub const OBS_DIM_DISCLOSURE: usize = OBS_DIM_BASE + 4;

/// An agent counts as observably symptomatic while it shows symptoms
/// outside a hospital bed; this gates the ethical penalty and what
/// cohabitants can see.
pub fn observably_symptomatic(state: HealthState, hospitalized: bool) -> bool {
    match state {
        HealthState::Sym | HealthState::Msy => true,
        HealthState::Ssy => !hospitalized,
        _ => false,
    }
}

/// Infection penalty schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RillSchedule {
    /// 4500((80-d)/80)^4 + 21000(d/80)^4, the awareness-growth fit.
    Calibration,
    /// Fixed penalty.
    Constant(f64),
}

impl RillSchedule {
    pub fn value(&self, day: u32) -> f64 {
        match *self {
            RillSchedule::Calibration => {
                let d = day as f64;
                let a = (80.0 - d) / 80.0;
                let b = d / 80.0;
                4500.0 * a.powi(4) + 21_000.0 * b.powi(4)
            }
            RillSchedule::Constant(v) => v,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub alpha_act: f64,
    /// Applied (as written, negative) while wearing a mask.
    pub r_mask: f64,
    pub r_shop_offline: f64,
    /// Scale on the (1 - supply level) penalty.
    pub supply_scale: f64,
    pub r_ill: RillSchedule,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            alpha_act: 1.0,
            r_mask: -0.1,
            r_shop_offline: -1.0,
            supply_scale: 1.0 / 0.58,
            r_ill: RillSchedule::Calibration,
        }
    }
}

/// Daily reward. `infection_probability` is the total probability of getting
/// infected today given the chosen action; the one-time illness penalty is
/// smoothed as its expectation. The ethical penalty cancels the activity
/// reward and charges unmasked symptomatic agents the mask magnitude.
pub fn compute_reward(
    params: &RewardParams,
    action: Action,
    symptomatic: bool,
    supply: f64,
    infection_probability: f64,
    day: u32,
) -> f64 {
    let mut r = params.alpha_act * action.act as f64;
    if action.masked {
        r += params.r_mask;
    }
    if action.shop == Shopping::Offline {
        r += params.r_shop_offline;
    }
    r -= params.supply_scale * (1.0 - supply);
    r -= infection_probability * params.r_ill.value(day);
    if symptomatic {
        r -= params.alpha_act * action.act as f64;
        if !action.masked {
            r -= params.r_mask.abs();
        }
    }
    r
}

/// One row of the daily metrics series.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DayMetrics {
    pub day: u32,
    pub new_cases: u64,
    pub cum_cases: u64,
    pub hospitalized: u64,
    pub deaths: u64,
    pub isolated: u64,
    pub mask_rate: f64,
    pub act_histogram: [u64; 4],
    pub shop_offline: u64,
    pub shop_online: u64,
    pub mean_reward: [f64; 4],
}

impl DayMetrics {
    pub fn csv_header() -> &'static str {
        "day,new_cases,cum_cases,hospitalized,deaths,isolated,mask_rate,\
         act0,act1,act2,act3,shop_off,shop_on,\
         reward_chd,reward_sch,reward_adu,reward_rtr"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.day,
            self.new_cases,
            self.cum_cases,
            self.hospitalized,
            self.deaths,
            self.isolated,
            self.mask_rate,
            self.act_histogram[0],
            self.act_histogram[1],
            self.act_histogram[2],
            self.act_histogram[3],
            self.shop_offline,
            self.shop_online,
            self.mean_reward[0],
            self.mean_reward[1],
            self.mean_reward[2],
            self.mean_reward[3],
        )
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("agent {agent} chose action {action} outside its space")]
    InvalidAction { agent: u32, action: u8 },
}
