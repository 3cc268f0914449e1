//! Day-indexed intervention engine: capacity schedules, information
//! disclosure with a two-day collection lag, and weak/strong quarantine
//! with contact tracing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::epidemic::ContactTraceLog;
use crate::population::{AgentId, Facility, FacilityType, FACILITY_TYPES, NUM_FACILITY_TYPES};
use crate::rng::{SimRng, StreamKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuarantineMode {
    #[default]
    None,
    Weak,
    Strong,
}

/// One capacity rule taking effect at `start_day`; fractions per facility
/// type. Types absent from the map fall back to `others`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityRule {
    pub day: u32,
    #[serde(default)]
    pub fractions: HashMap<FacilityType, f64>,
    #[serde(default = "one")]
    pub others: f64,
}

fn one() -> f64 {
    1.0
}

impl CapacityRule {
    /// Dense fraction table; households and hospitals are never restricted.
    pub fn dense(&self) -> [f64; NUM_FACILITY_TYPES] {
        let mut out = [1.0; NUM_FACILITY_TYPES];
        for &t in &FACILITY_TYPES {
            if t == FacilityType::Household || t == FacilityType::Hospital {
                continue;
            }
            out[t.index()] = *self.fractions.get(&t).unwrap_or(&self.others);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicySchedule {
    /// Rules ordered by strictly increasing start day.
    #[serde(default)]
    pub rules: Vec<CapacityRule>,
    #[serde(default)]
    pub disclosure: bool,
    #[serde(default)]
    pub quarantine: QuarantineMode,
}

impl PolicySchedule {
    /// No interventions at all.
    pub fn unrestricted() -> Self {
        PolicySchedule { rules: Vec::new(), disclosure: false, quarantine: QuarantineMode::None }
    }

    /// The county's real-life intervention timeline. Entries beyond the
    /// 80-day episode are stored but unused at the default length.
    pub fn county_timeline() -> Self {
        fn rule(day: u32, named: &[(FacilityType, f64)], others: f64) -> CapacityRule {
            CapacityRule { day, fractions: named.iter().copied().collect(), others }
        }
        use FacilityType::*;
        PolicySchedule {
            rules: vec![
                rule(
                    10,
                    &[(Workplace, 0.25), (Supermarket, 1.0), (Community, 1.0), (Retail, 1.0)],
                    0.0,
                ),
                rule(
                    62,
                    &[
                        (Workplace, 0.5),
                        (Community, 1.0),
                        (Supermarket, 1.0),
                        (Retail, 1.0),
                        (Restaurant, 0.25),
                    ],
                    0.0,
                ),
                rule(
                    82,
                    &[
                        (Workplace, 0.75),
                        (Community, 1.0),
                        (Supermarket, 1.0),
                        (Retail, 1.0),
                        (School, 0.0),
                    ],
                    0.5,
                ),
                rule(
                    110,
                    &[
                        (Workplace, 0.75),
                        (Community, 1.0),
                        (Supermarket, 1.0),
                        (Retail, 1.0),
                        (Restaurant, 0.0),
                    ],
                    0.5,
                ),
                rule(
                    116,
                    &[
                        (Workplace, 0.75),
                        (Community, 1.0),
                        (Supermarket, 1.0),
                        (Retail, 1.0),
                        (Restaurant, 0.10),
                    ],
                    0.5,
                ),
                rule(
                    123,
                    &[
                        (Workplace, 0.75),
                        (Community, 1.0),
                        (Supermarket, 1.0),
                        (Retail, 1.0),
                        (Restaurant, 0.35),
                    ],
                    0.5,
                ),
            ],
            disclosure: false,
            quarantine: QuarantineMode::None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut prev: Option<u32> = None;
        for r in &self.rules {
            if let Some(p) = prev {
                if r.day <= p {
                    return Err(format!("rule days must be strictly increasing at day {}", r.day));
                }
            }
            prev = Some(r.day);
            for (&t, &f) in &r.fractions {
                if !(0.0..=1.0).contains(&f) {
                    return Err(format!("fraction {f} for {} out of [0,1]", t.name()));
                }
            }
            if !(0.0..=1.0).contains(&r.others) {
                return Err(format!("fraction {} for others out of [0,1]", r.others));
            }
        }
        Ok(())
    }

    /// Active dense fraction table for `day`; all ones before the first rule.
    pub fn fractions_for(&self, day: u32) -> [f64; NUM_FACILITY_TYPES] {
        let mut active: Option<&CapacityRule> = None;
        for r in &self.rules {
            if r.day <= day {
                active = Some(r);
            } else {
                break;
            }
        }
        active.map(|r| r.dense()).unwrap_or([1.0; NUM_FACILITY_TYPES])
    }
}

/// Effective capacity of one facility on one day.
pub fn capacity_for(facility: &Facility, day: u32, schedule: &PolicySchedule) -> u32 {
    let frac = schedule.fractions_for(day)[facility.ftype.index()];
    (facility.capacity as f64 * frac).floor() as u32
}

/// Per-facility empirical infection probabilities published with a 2-day lag.
#[derive(Clone, Debug)]
pub struct DisclosureReport {
    pub day: u32,
    /// Probability per facility id; households are always 0.
    pub facility_probability: Vec<f64>,
}

/// How the published per-facility probability is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DisclosureMethod {
    /// Observed fraction: new infections / healthy occupants.
    #[default]
    Empirical,
    /// Model-side mean infection probability over healthy occupants.
    Analytic,
}

/// One day of per-facility observation counters.
#[derive(Clone, Debug)]
pub struct FacilityDayStats {
    pub day: u32,
    pub new_infections: Vec<u32>,
    pub healthy_occupants: Vec<u32>,
    pub sum_victim_probability: Vec<f64>,
    /// Occupants present after capacity kick-out.
    pub occupants: Vec<u32>,
}

impl FacilityDayStats {
    pub fn zeros(day: u32, num_facilities: usize) -> Self {
        FacilityDayStats {
            day,
            new_infections: vec![0; num_facilities],
            healthy_occupants: vec![0; num_facilities],
            sum_victim_probability: vec![0.0; num_facilities],
            occupants: vec![0; num_facilities],
        }
    }

    pub fn reset(&mut self, day: u32) {
        self.day = day;
        self.new_infections.iter_mut().for_each(|v| *v = 0);
        self.healthy_occupants.iter_mut().for_each(|v| *v = 0);
        self.sum_victim_probability.iter_mut().for_each(|v| *v = 0.0);
        self.occupants.iter_mut().for_each(|v| *v = 0);
    }
}

/// Builds the report published on `day` from the stats of `day - 2`.
/// Returns all zeros when the stats are not available (early days).
pub fn generate_disclosure(
    day: u32,
    method: DisclosureMethod,
    stats: Option<&FacilityDayStats>,
    facilities: &[Facility],
) -> DisclosureReport {
    let mut probs = vec![0.0; facilities.len()];
    if let Some(s) = stats {
        debug_assert_eq!(s.day + 2, day);
        for (i, f) in facilities.iter().enumerate() {
            if f.ftype == FacilityType::Household {
                continue;
            }
            let healthy = s.healthy_occupants[i];
            if healthy == 0 {
                continue;
            }
            probs[i] = match method {
                DisclosureMethod::Empirical => s.new_infections[i] as f64 / healthy as f64,
                DisclosureMethod::Analytic => s.sum_victim_probability[i] / healthy as f64,
            };
        }
    }
    DisclosureReport { day, facility_probability: probs }
}

#[derive(Clone, Copy, Debug)]
struct IsolationRecord {
    #[allow(dead_code)]
    isolated_on: u32,
}

/// Set of currently isolated agents.
#[derive(Clone, Debug, Default)]
pub struct QuarantineRegistry {
    isolated: Vec<bool>,
    records: HashMap<AgentId, IsolationRecord>,
}

impl QuarantineRegistry {
    pub fn new(num_agents: usize) -> Self {
        QuarantineRegistry { isolated: vec![false; num_agents], records: HashMap::new() }
    }

    pub fn is_isolated(&self, agent: AgentId) -> bool {
        self.isolated[agent as usize]
    }

    pub fn isolate(&mut self, agent: AgentId, day: u32) {
        if !self.isolated[agent as usize] {
            self.isolated[agent as usize] = true;
            self.records.insert(agent, IsolationRecord { isolated_on: day });
        }
    }

    pub fn release(&mut self, agent: AgentId) {
        self.isolated[agent as usize] = false;
        self.records.remove(&agent);
    }

    /// Death in isolation: drop the record, the agent never returns.
    pub fn remove_dead(&mut self, agent: AgentId) {
        self.release(agent);
    }

    pub fn count(&self) -> usize {
        self.records.len()
    }

    /// Isolated ids in ascending order.
    pub fn isolated_ids(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = self.records.keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}

/// Read-only view of agent health used by the scans.
pub struct ScanView<'a> {
    pub days_symptomatic: &'a [u16],
    pub hospitalized: &'a [bool],
    pub dead: &'a [bool],
    /// Day the agent last entered an immune state; `u32::MAX` if never.
    pub recovered_on: &'a [u32],
}

/// Weak mode discovers agents symptomatic for at least three days with
/// probability 1/3 per day; strong mode discovers them outright and also
/// isolates each contact-traced victim with probability 0.4. Returns newly
/// isolated ids in ascending order.
pub fn quarantine_scan(
    mode: QuarantineMode,
    day: u32,
    seed: u64,
    view: &ScanView<'_>,
    trace: &ContactTraceLog,
    registry: &mut QuarantineRegistry,
) -> Vec<AgentId> {
    if mode == QuarantineMode::None {
        return Vec::new();
    }
    let n = view.days_symptomatic.len();
    let mut newly: Vec<AgentId> = Vec::new();
    let mut discovered: Vec<AgentId> = Vec::new();
    for agent in 0..n as u32 {
        let i = agent as usize;
        if view.days_symptomatic[i] < 3
            || view.dead[i]
            || view.hospitalized[i]
            || registry.is_isolated(agent)
        {
            continue;
        }
        let found = match mode {
            QuarantineMode::Weak => {
                let mut rng = SimRng::stream(seed, StreamKind::Quarantine, day, agent as u64);
                rng.bernoulli(1.0 / 3.0)
            }
            QuarantineMode::Strong => true,
            QuarantineMode::None => unreachable!(),
        };
        if found {
            discovered.push(agent);
        }
    }
    for &agent in &discovered {
        registry.isolate(agent, day);
        newly.push(agent);
    }
    if mode == QuarantineMode::Strong {
        for &source in &discovered {
            for victim in trace.attributed_victims(source, day, u32::MAX) {
                let vi = victim as usize;
                if view.dead[vi] || view.hospitalized[vi] || registry.is_isolated(victim) {
                    continue;
                }
                let mut rng = SimRng::stream(
                    seed,
                    StreamKind::Quarantine,
                    day,
                    (1u64 << 40) ^ ((source as u64) << 20) ^ victim as u64,
                );
                if rng.bernoulli(0.4) {
                    registry.isolate(victim, day);
                    newly.push(victim);
                }
            }
        }
    }
    newly.sort_unstable();
    newly.dedup();
    newly
}

/// Releases isolates nine or more days past recovery (exactly nine in the
/// normal course; later only when isolation began after recovery). Dead
/// isolates are dropped. Returns released ids ascending.
pub fn release_scan(
    day: u32,
    view: &ScanView<'_>,
    registry: &mut QuarantineRegistry,
) -> Vec<AgentId> {
    let mut released = Vec::new();
    for agent in registry.isolated_ids() {
        let i = agent as usize;
        if view.dead[i] {
            registry.remove_dead(agent);
            continue;
        }
        let rec = view.recovered_on[i];
        if rec != u32::MAX && rec + 9 <= day {
            registry.release(agent);
            released.push(agent);
        }
    }
    released
}
