//! The mutable simulation state and the daily pipeline:
//! policy scans, occupancy with capacity kick-out, intra-facility infection,
//! health-state advancement with hospitalization, shopping and supply, then
//! rewards, observations and metrics.
//!
//! Every stochastic draw comes from a counter-based stream keyed by
//! (seed, day, entity), and all cross-agent reductions run in fixed order,
//! so a step is bit-identical for any thread count.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::epidemic::{
    self, ContactTraceLog, DiseaseParams, HealthState, InfectionEvent, Occupant,
};
use crate::government::{
    self, generate_disclosure, DisclosureMethod, DisclosureReport, FacilityDayStats,
    PolicySchedule, QuarantineRegistry, ScanView,
};
use crate::population::{
    distance2, AgentId, FacilityId, FacilityType, Population, NO_FACILITY,
};
use crate::rng::{SimRng, StreamKind};

use super::{
    action_valid, compute_reward, observable_class, observably_symptomatic, supply_level, Action,
    DayMetrics, EnvError, RewardParams, Shopping, OBS_DIM_BASE, OBS_DIM_DISCLOSURE,
    OBS_HEA_CLASSES,
};

const CHUNK: usize = 4096;

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub disease: DiseaseParams,
    pub reward: RewardParams,
    pub schedule: PolicySchedule,
    pub disclosure_method: DisclosureMethod,
    /// Daily number of online-shopping slots.
    pub online_shopping_capacity: u64,
    pub seed: u64,
}

impl WorldConfig {
    pub fn new(seed: u64) -> Self {
        WorldConfig {
            disease: DiseaseParams::default(),
            reward: RewardParams::default(),
            schedule: PolicySchedule::unrestricted(),
            disclosure_method: DisclosureMethod::Empirical,
            online_shopping_capacity: 17_000,
            seed,
        }
    }
}

/// Result of one simulated day.
#[derive(Clone, Debug)]
pub struct DayOutput {
    pub metrics: DayMetrics,
    /// Reward per agent; meaningful where `acted` is set.
    pub rewards: Vec<f64>,
    /// Agents that were alive and out of hospital this morning.
    pub acted: Vec<bool>,
}

pub struct World {
    pub pop: Arc<Population>,
    pub cfg: WorldConfig,
    day: u32,
    // Per agent.
    states: Vec<HealthState>,
    days_symptomatic: Vec<u16>,
    recovered_on: Vec<u32>,
    hospitalized: Vec<bool>,
    hospital_slot: Vec<u32>,
    dead: Vec<bool>,
    infected_ever: Vec<bool>,
    last_actions: Vec<u8>,
    // Per household facility id.
    supply_days: Vec<u16>,
    // Per hospital (position in pop.hospitals()).
    bed_occupancy: Vec<u32>,
    registry: QuarantineRegistry,
    pub trace: ContactTraceLog,
    /// Infection events, reinfections included.
    pub infected_cum: u64,
    /// Agents ever infected; the monotone case count bounded by N.
    pub ever_infected: u64,
    pub discovered_cum: u64,
    pub deaths_cum: u64,
    /// (day, agent, isolated?) ledger of quarantine actions.
    pub isolation_events: Vec<(u32, AgentId, bool)>,
    stats_today: FacilityDayStats,
    stats_prev1: Option<FacilityDayStats>,
    stats_prev2: Option<FacilityDayStats>,
    report: Option<DisclosureReport>,
    scratch: Scratch,
}

#[derive(Default)]
struct Scratch {
    visit_offsets: Vec<u32>,
    pair_facility: Vec<u32>,
    pair_agent: Vec<u32>,
    fac_offsets: Vec<u32>,
    fac_pairs: Vec<u32>,
    p_by_pair: Vec<AtomicU64>,
    infected_today: Vec<bool>,
    new_states: Vec<HealthState>,
    supply_pre: Vec<u16>,
}

impl World {
    pub fn new(pop: Arc<Population>, cfg: WorldConfig) -> Self {
        let n = pop.num_agents();
        let f = pop.num_facilities();
        let hospitals = pop.hospitals().len();
        World {
            cfg,
            day: 0,
            states: vec![HealthState::Hea; n],
            days_symptomatic: vec![0; n],
            recovered_on: vec![u32::MAX; n],
            hospitalized: vec![false; n],
            hospital_slot: vec![u32::MAX; n],
            dead: vec![false; n],
            infected_ever: vec![false; n],
            last_actions: vec![0; n],
            supply_days: vec![0; f],
            bed_occupancy: vec![0; hospitals],
            registry: QuarantineRegistry::new(n),
            trace: ContactTraceLog::new(),
            infected_cum: 0,
            ever_infected: 0,
            discovered_cum: 0,
            deaths_cum: 0,
            isolation_events: Vec::new(),
            stats_today: FacilityDayStats::zeros(0, f),
            stats_prev1: None,
            stats_prev2: None,
            report: None,
            scratch: Scratch::default(),
            pop,
        }
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn state_of(&self, agent: AgentId) -> HealthState {
        self.states[agent as usize]
    }

    pub fn states(&self) -> &[HealthState] {
        &self.states
    }

    pub fn is_isolated(&self, agent: AgentId) -> bool {
        self.registry.is_isolated(agent)
    }

    pub fn is_hospitalized(&self, agent: AgentId) -> bool {
        self.hospitalized[agent as usize]
    }

    /// Alive and out of hospital: will take an action today.
    pub fn is_acting(&self, agent: AgentId) -> bool {
        !self.dead[agent as usize] && !self.hospitalized[agent as usize]
    }

    pub fn supply_level_of(&self, agent: AgentId) -> f64 {
        let hh = self.pop.agents[agent as usize].household_id();
        supply_level(self.supply_days[hh as usize])
    }

    pub fn observation_dim(&self) -> usize {
        if self.cfg.schedule.disclosure {
            OBS_DIM_DISCLOSURE
        } else {
            OBS_DIM_BASE
        }
    }

    /// Point of highest venue density: used to place the first cases.
    fn seed_point(&self) -> (f64, f64) {
        let hospitals = self.pop.hospitals();
        if hospitals.is_empty() {
            // No hospitals: fall back to the densest facility itself.
            return self
                .pop
                .facilities
                .first()
                .map(|f| f.location)
                .unwrap_or((0.0, 0.0));
        }
        let mut best = (0usize, u32::MAX);
        for &hid in hospitals.iter() {
            let loc = self.pop.facilities[hid as usize].location;
            let count = self
                .pop
                .facilities
                .iter()
                .filter(|f| distance2(f.location, loc) <= 25.0)
                .count();
            if best.1 == u32::MAX || count > best.0 {
                best = (count, hid);
            }
        }
        self.pop.facilities[best.1 as usize].location
    }

    /// Seeds the outbreak: `sym` symptomatic plus `inc` exposed agents whose
    /// homes lie nearest the busiest hospital.
    pub fn seed_initial_cases(&mut self, sym: usize, inc: usize) {
        let point = self.seed_point();
        let mut order: Vec<(f64, AgentId)> = self
            .pop
            .agents
            .iter()
            .map(|a| (distance2(a.home_location, point), a.id))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (i, &(_, agent)) in order.iter().take(sym + inc).enumerate() {
            let idx = agent as usize;
            if i < sym {
                self.states[idx] = HealthState::Sym;
                self.days_symptomatic[idx] = 1;
                self.discovered_cum += 1;
            } else {
                self.states[idx] = HealthState::Inc;
            }
            self.infected_ever[idx] = true;
            self.infected_cum += 1;
            self.ever_infected += 1;
        }
    }

    /// Per-household heat-map rows: (household id, x, y, any member ever
    /// infected).
    pub fn household_infection_rows(&self) -> Vec<(FacilityId, f64, f64, bool)> {
        self.pop
            .facilities
            .iter()
            .filter(|f| f.ftype == FacilityType::Household)
            .map(|f| {
                let any = self
                    .pop
                    .household_members(f.id)
                    .iter()
                    .any(|&m| self.infected_ever[m as usize]);
                (f.id, f.location.0, f.location.1, any)
            })
            .collect()
    }

    /// Builds one agent's observation into `out` (length `observation_dim`).
    pub fn fill_observation(&self, agent: AgentId, out: &mut [f64]) {
        let dim = self.observation_dim();
        debug_assert_eq!(out.len(), dim);
        out.iter_mut().for_each(|v| *v = 0.0);
        let i = agent as usize;
        let a = &self.pop.agents[i];
        out[observable_class(self.states[i])] = 1.0;

        // Household risk: treat observably symptomatic cohabitants at home
        // as full-strength sources (p_hs = 1) with their current mask.
        let hh = a.household_id();
        let hh_cap = self.pop.facilities[hh as usize].capacity;
        let mut sum = 0.0;
        for &m in self.pop.household_members(hh) {
            if m == agent {
                continue;
            }
            let mi = m as usize;
            if !observably_symptomatic(self.states[mi], self.hospitalized[mi])
                || self.registry.is_isolated(m)
            {
                continue;
            }
            let masked = Action::from_flat(self.last_actions[mi]).masked;
            sum += if masked { self.cfg.disease.mask_factor } else { 1.0 };
        }
        out[OBS_HEA_CLASSES] = epidemic::victim_infection_probability(
            &self.cfg.disease,
            FacilityType::Household,
            hh_cap,
            a.age_group,
            false,
            0,
            sum,
        );
        out[OBS_HEA_CLASSES + 1] = supply_level(self.supply_days[hh as usize]);
        out[OBS_HEA_CLASSES + 2] = self.discovered_cum as f64 / 1000.0;
        out[OBS_HEA_CLASSES + 3] = self.day as f64;

        if self.cfg.schedule.disclosure {
            if let Some(report) = &self.report {
                let mut escape = [1.0f64; 4];
                for (&t, &fid) in crate::population::FACILITY_TYPES.iter().zip(&a.affiliations) {
                    if fid == NO_FACILITY
                        || t == FacilityType::Household
                        || t == FacilityType::Hospital
                    {
                        continue;
                    }
                    let g = t.min_act() as usize;
                    escape[g] *= 1.0 - report.facility_probability[fid as usize];
                }
                for g in 0..4 {
                    out[OBS_DIM_BASE + g] = 1.0 - escape[g];
                }
            }
        }
    }

    /// Bulk observation fill, one row of `dim` f32 per agent.
    pub fn fill_observations_f32(&self, out: &mut [f32]) {
        let dim = self.observation_dim();
        let n = self.pop.num_agents();
        debug_assert_eq!(out.len(), n * dim);
        out.par_chunks_mut(dim * CHUNK).enumerate().for_each(|(ci, block)| {
            let mut buf = vec![0.0f64; dim];
            let base = ci * CHUNK;
            for (row, chunk_out) in block.chunks_mut(dim).enumerate() {
                let agent = (base + row) as AgentId;
                self.fill_observation(agent, &mut buf);
                for (o, &v) in chunk_out.iter_mut().zip(buf.iter()) {
                    *o = v as f32;
                }
            }
        });
    }

    /// Runs one simulated day.
    pub fn step_day(&mut self, actions: &[u8]) -> Result<DayOutput, EnvError> {
        let n = self.pop.num_agents();
        let nf = self.pop.num_facilities();
        assert_eq!(actions.len(), n, "one action per agent");
        let day = self.day;

        // Agents acting today, and action validation.
        let acted: Vec<bool> = (0..n).map(|i| !self.dead[i] && !self.hospitalized[i]).collect();
        for i in 0..n {
            if acted[i] && !action_valid(self.pop.agents[i].age_group, actions[i]) {
                return Err(EnvError::InvalidAction { agent: i as u32, action: actions[i] });
            }
        }
        // Ethics gating uses the state the agent acted in; snapshot before
        // the advancement phase overwrites it. Acting agents are never in a
        // hospital bed.
        let morning_symptomatic: Vec<bool> = (0..n)
            .map(|i| acted[i] && observably_symptomatic(self.states[i], false))
            .collect();

        // Phase 1: government scans and the day's capacity fractions.
        {
            let view = ScanView {
                days_symptomatic: &self.days_symptomatic,
                hospitalized: &self.hospitalized,
                dead: &self.dead,
                recovered_on: &self.recovered_on,
            };
            let released = government::release_scan(day, &view, &mut self.registry);
            for id in released {
                self.isolation_events.push((day, id, false));
            }
            let newly = government::quarantine_scan(
                self.cfg.schedule.quarantine,
                day,
                self.cfg.seed,
                &view,
                &self.trace,
                &mut self.registry,
            );
            for id in newly {
                self.isolation_events.push((day, id, true));
            }
        }
        let fractions = self.cfg.schedule.fractions_for(day);

        // Phase 2: visit lists (agent-major CSR), then facility-major order.
        let scratch = &mut self.scratch;
        scratch.visit_offsets.clear();
        scratch.visit_offsets.resize(n + 1, 0);
        {
            let pop = &self.pop;
            let registry = &self.registry;
            let states = &self.states;
            let counts: Vec<u32> = (0..n)
                .into_par_iter()
                .map(|i| {
                    visit_count(pop, registry, states, &acted, actions, i as AgentId) as u32
                })
                .collect();
            let mut acc = 0u32;
            for (i, c) in counts.iter().enumerate() {
                scratch.visit_offsets[i] = acc;
                acc += c;
                scratch.visit_offsets[i + 1] = acc;
            }
            let total_pairs = acc as usize;
            scratch.pair_facility.resize(total_pairs, 0);
            scratch.pair_agent.resize(total_pairs, 0);

            // Fill per chunk of agents; each chunk owns a contiguous range.
            let offsets = &scratch.visit_offsets;
            let mut slices: Vec<(usize, &mut [u32], &mut [u32])> = Vec::new();
            {
                let mut rest_f: &mut [u32] = &mut scratch.pair_facility;
                let mut rest_a: &mut [u32] = &mut scratch.pair_agent;
                let mut consumed = 0usize;
                let mut start = 0usize;
                while start < n {
                    let end = (start + CHUNK).min(n);
                    let hi = offsets[end] as usize;
                    let (f_here, f_rest) = rest_f.split_at_mut(hi - consumed);
                    let (a_here, a_rest) = rest_a.split_at_mut(hi - consumed);
                    slices.push((start, f_here, a_here));
                    rest_f = f_rest;
                    rest_a = a_rest;
                    consumed = hi;
                    start = end;
                }
            }
            slices.into_par_iter().for_each(|(start, fs, ags)| {
                let mut cursor = 0usize;
                let end = (start + CHUNK).min(n);
                for i in start..end {
                    let agent = i as AgentId;
                    visit_fill(pop, registry, states, &acted, actions, agent, |fid| {
                        fs[cursor] = fid;
                        ags[cursor] = agent;
                        cursor += 1;
                    });
                }
                debug_assert_eq!(cursor, fs.len());
            });
        }

        // Counting sort of pairs by facility (stable: agent order preserved).
        let total_pairs = scratch.pair_facility.len();
        scratch.fac_offsets.clear();
        scratch.fac_offsets.resize(nf + 1, 0);
        for &f in &scratch.pair_facility {
            scratch.fac_offsets[f as usize + 1] += 1;
        }
        for i in 0..nf {
            scratch.fac_offsets[i + 1] += scratch.fac_offsets[i];
        }
        scratch.fac_pairs.resize(total_pairs, 0);
        {
            let mut cursor = scratch.fac_offsets.clone();
            for (pidx, &f) in scratch.pair_facility.iter().enumerate() {
                let c = &mut cursor[f as usize];
                scratch.fac_pairs[*c as usize] = pidx as u32;
                *c += 1;
            }
        }

        // Phase 3: kick-out and infection sampling per facility.
        scratch.p_by_pair.clear();
        scratch.p_by_pair.resize_with(total_pairs, || AtomicU64::new(0));
        self.stats_today.reset(day);
        struct FacilityOutcome {
            facility: u32,
            occupants: u32,
            healthy: u32,
            sum_victim_p: f64,
            events: Vec<InfectionEvent>,
        }
        let outcomes: Vec<FacilityOutcome> = {
            let pop = &self.pop;
            let states = &self.states;
            let disease = &self.cfg.disease;
            let seed = self.cfg.seed;
            let fac_offsets = &scratch.fac_offsets;
            let fac_pairs = &scratch.fac_pairs;
            let pair_agent = &scratch.pair_agent;
            let p_by_pair = &scratch.p_by_pair;
            (0..nf)
                .into_par_iter()
                .filter(|&f| fac_offsets[f] < fac_offsets[f + 1])
                .map_with(Vec::<Occupant>::new(), |occ_buf, f| {
                    let fid = f as FacilityId;
                    let facility = &pop.facilities[f];
                    let seg: &[u32] =
                        &fac_pairs[fac_offsets[f] as usize..fac_offsets[f + 1] as usize];
                    let base_rng = SimRng::stream(seed, StreamKind::FacilityDay, day, f as u64);

                    // Capacity kick-out; kicked pair selection is sequential
                    // from the stream so lower caps kick nested supersets.
                    let cap = if facility.ftype == FacilityType::Household
                        || facility.ftype == FacilityType::Hospital
                    {
                        facility.capacity
                    } else {
                        (facility.capacity as f64 * fractions[facility.ftype.index()]).floor()
                            as u32
                    };
                    let mut kicked_local: Vec<bool> = Vec::new();
                    if (seg.len() as u32) > cap {
                        let mut kick_rng = base_rng.child(0);
                        kicked_local.resize(seg.len(), false);
                        let mut pool: Vec<u32> = (0..seg.len() as u32).collect();
                        let to_kick = seg.len() - cap as usize;
                        for k in 0..to_kick {
                            let j = k + kick_rng.uniform_usize(pool.len() - k);
                            pool.swap(k, j);
                            kicked_local[pool[k] as usize] = true;
                        }
                    }

                    occ_buf.clear();
                    let mut pair_of_occupant: Vec<u32> = Vec::with_capacity(seg.len());
                    for (pos, &pidx) in seg.iter().enumerate() {
                        if !kicked_local.is_empty() && kicked_local[pos] {
                            continue;
                        }
                        let agent = pair_agent[pidx as usize];
                        let i = agent as usize;
                        let action = Action::from_flat(actions[i]);
                        let age = pop.agents[i].age_group;
                        let act = if age.decides_activity() { action.act } else { 0 };
                        occ_buf.push(Occupant {
                            agent,
                            age,
                            state: states[i],
                            masked: action.masked,
                            act,
                        });
                        pair_of_occupant.push(pidx);
                    }

                    let healthy =
                        occ_buf.iter().filter(|o| o.state == HealthState::Hea).count() as u32;
                    let mut events = Vec::new();
                    let mut sum_victim_p = 0.0;
                    let any_source = occ_buf
                        .iter()
                        .any(|o| epidemic::source_factor(disease, o.state, o.masked) > 0.0);
                    if any_source && facility.ftype != FacilityType::Hospital {
                        let mut inf_rng = base_rng.child(1);
                        epidemic::sample_infections(
                            disease,
                            facility.ftype,
                            facility.capacity,
                            fid,
                            day,
                            occ_buf,
                            &mut inf_rng,
                            &mut events,
                            |occ_idx, _agent, p| {
                                let pidx = pair_of_occupant[occ_idx];
                                p_by_pair[pidx as usize]
                                    .store(p.to_bits(), Ordering::Relaxed);
                                sum_victim_p += p;
                            },
                        );
                    }
                    FacilityOutcome {
                        facility: fid,
                        occupants: occ_buf.len() as u32,
                        healthy,
                        sum_victim_p,
                        events,
                    }
                })
                .collect()
        };

        // Merge in facility order; an agent infected in several venues keeps
        // only the first event so attribution matches state transitions.
        scratch.infected_today.clear();
        scratch.infected_today.resize(n, false);
        let mut new_cases = 0u64;
        for out in &outcomes {
            let f = out.facility as usize;
            self.stats_today.occupants[f] = out.occupants;
            self.stats_today.healthy_occupants[f] = out.healthy;
            self.stats_today.sum_victim_probability[f] = out.sum_victim_p;
            for ev in &out.events {
                let v = ev.victim as usize;
                if scratch.infected_today[v] {
                    continue;
                }
                scratch.infected_today[v] = true;
                self.stats_today.new_infections[f] += 1;
                self.trace.push(*ev);
                new_cases += 1;
            }
        }

        // Phase 4: health-state advancement.
        scratch.new_states.clear();
        scratch.new_states.resize(n, HealthState::Hea);
        {
            let states = &self.states;
            let hospitalized = &self.hospitalized;
            let infected_today = &scratch.infected_today;
            let disease = &self.cfg.disease;
            let seed = self.cfg.seed;
            let pop = &self.pop;
            scratch.new_states.par_iter_mut().enumerate().for_each(|(i, slot)| {
                let s = states[i];
                if s == HealthState::Dea {
                    *slot = HealthState::Dea;
                    return;
                }
                if infected_today[i] && s == HealthState::Hea {
                    *slot = HealthState::Inc;
                    return;
                }
                let mut rng = SimRng::stream(seed, StreamKind::AgentDay, day, i as u64);
                *slot = epidemic::advance_health_state(
                    s,
                    pop.agents[i].age_group,
                    hospitalized[i],
                    disease,
                    &mut rng,
                );
            });
        }
        let mut bed_candidates: Vec<AgentId> = Vec::new();
        for i in 0..n {
            let old = self.states[i];
            if old == HealthState::Dea {
                continue;
            }
            let new = scratch.new_states[i];
            self.states[i] = new;
            if scratch.infected_today[i] && old == HealthState::Hea {
                self.infected_cum += 1;
                if !self.infected_ever[i] {
                    self.infected_ever[i] = true;
                    self.ever_infected += 1;
                }
            }
            if new.is_symptomatic() {
                if old.is_symptomatic() {
                    self.days_symptomatic[i] = self.days_symptomatic[i].saturating_add(1);
                } else {
                    self.days_symptomatic[i] = 1;
                    self.discovered_cum += 1;
                }
            } else {
                self.days_symptomatic[i] = 0;
            }
            match new {
                HealthState::Ima | HealthState::Ims if old != new => {
                    self.recovered_on[i] = day;
                    if old == HealthState::Ssy && self.hospitalized[i] {
                        let slot = self.hospital_slot[i] as usize;
                        self.bed_occupancy[slot] -= 1;
                        self.hospitalized[i] = false;
                        self.hospital_slot[i] = u32::MAX;
                    }
                }
                HealthState::Dea => {
                    self.dead[i] = true;
                    self.deaths_cum += 1;
                    if self.hospitalized[i] {
                        let slot = self.hospital_slot[i] as usize;
                        self.bed_occupancy[slot] -= 1;
                        self.hospitalized[i] = false;
                        self.hospital_slot[i] = u32::MAX;
                    }
                    self.registry.remove_dead(i as AgentId);
                }
                HealthState::Ssy if !self.hospitalized[i] => {
                    bed_candidates.push(i as AgentId);
                }
                _ => {}
            }
        }
        for agent in bed_candidates {
            let i = agent as usize;
            let home = self.pop.agents[i].home_location;
            if let Some(hid) =
                crate::population::assign_hospital(home, &self.pop, &self.bed_occupancy)
            {
                let slot = self.pop.hospitals().iter().position(|&h| h == hid).unwrap();
                self.bed_occupancy[slot] += 1;
                self.hospitalized[i] = true;
                self.hospital_slot[i] = slot as u32;
            }
        }

        // Phase 5: shopping and supply.
        scratch.supply_pre.clear();
        scratch.supply_pre.extend_from_slice(&self.supply_days);
        let mut online_served: Vec<bool> = vec![false; n];
        {
            let requests: Vec<AgentId> = (0..n as u32)
                .filter(|&a| {
                    let i = a as usize;
                    acted[i]
                        && !self.registry.is_isolated(a)
                        && Action::from_flat(actions[i]).shop == Shopping::Online
                })
                .collect();
            let mut rng = SimRng::stream(self.cfg.seed, StreamKind::Shopping, day, 0);
            let served = super::resolve_online_shopping(
                &requests,
                self.cfg.online_shopping_capacity as usize,
                &mut rng,
            );
            for a in served {
                online_served[a as usize] = true;
            }
        }
        {
            let pop = &self.pop;
            let registry = &self.registry;
            let supply_days = &mut self.supply_days;
            for f in pop.facilities.iter().filter(|f| f.ftype == FacilityType::Household) {
                let replenished = pop.household_members(f.id).iter().any(|&m| {
                    let i = m as usize;
                    if !acted[i] || registry.is_isolated(m) {
                        return false;
                    }
                    let action = Action::from_flat(actions[i]);
                    action.shop == Shopping::Offline || online_served[i]
                });
                let d = &mut supply_days[f.id as usize];
                *d = super::supply_step(*d, replenished);
            }
        }

        // Phase 6: rewards (using pre-step supply and the exact sampled
        // infection probabilities), then metrics.
        let rewards: Vec<f64> = {
            let pop = &self.pop;
            let reward_params = &self.cfg.reward;
            let offsets = &scratch.visit_offsets;
            let p_by_pair = &scratch.p_by_pair;
            let supply_pre = &scratch.supply_pre;
            let morning_symptomatic = &morning_symptomatic;
            let acted = &acted;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    if !acted[i] {
                        return 0.0;
                    }
                    let action = Action::from_flat(actions[i]);
                    let agent = &pop.agents[i];
                    let mut escape = 1.0f64;
                    for pidx in offsets[i]..offsets[i + 1] {
                        let p = f64::from_bits(p_by_pair[pidx as usize].load(Ordering::Relaxed));
                        escape *= 1.0 - p;
                    }
                    let q = 1.0 - escape;
                    let hh = agent.household_id() as usize;
                    compute_reward(
                        reward_params,
                        action,
                        morning_symptomatic[i],
                        supply_level(supply_pre[hh]),
                        q,
                        day,
                    )
                })
                .collect()
        };

        let mut metrics =
            DayMetrics { day, new_cases, cum_cases: self.ever_infected, ..Default::default() };
        metrics.deaths = self.deaths_cum;
        metrics.hospitalized = self.hospitalized.iter().filter(|&&h| h).count() as u64;
        metrics.isolated = self.registry.count() as u64;
        let mut masked_count = 0u64;
        let mut acting_count = 0u64;
        let mut reward_sum = [0.0f64; 4];
        let mut reward_count = [0u64; 4];
        for i in 0..n {
            if !acted[i] {
                continue;
            }
            acting_count += 1;
            let action = Action::from_flat(actions[i]);
            if action.masked {
                masked_count += 1;
            }
            let g = self.pop.agents[i].age_group;
            reward_sum[g.index()] += rewards[i];
            reward_count[g.index()] += 1;
            if g.decides_activity() {
                metrics.act_histogram[action.act as usize] += 1;
                match action.shop {
                    Shopping::Offline => metrics.shop_offline += 1,
                    Shopping::Online => metrics.shop_online += 1,
                    Shopping::None => {}
                }
            }
        }
        metrics.mask_rate =
            if acting_count > 0 { masked_count as f64 / acting_count as f64 } else { 0.0 };
        for g in 0..4 {
            metrics.mean_reward[g] =
                if reward_count[g] > 0 { reward_sum[g] / reward_count[g] as f64 } else { 0.0 };
        }

        // Rotate disclosure stats and publish tomorrow's report.
        self.last_actions.copy_from_slice(actions);
        let newest = std::mem::replace(
            &mut self.stats_today,
            self.stats_prev2.take().unwrap_or_else(|| FacilityDayStats::zeros(0, nf)),
        );
        self.stats_prev2 = self.stats_prev1.take();
        self.stats_prev1 = Some(newest);
        self.day = day + 1;
        if self.cfg.schedule.disclosure {
            self.report = Some(generate_disclosure(
                self.day,
                self.cfg.disclosure_method,
                self.stats_prev2.as_ref().filter(|s| s.day + 2 == self.day),
                &self.pop.facilities,
            ));
        }

        Ok(DayOutput { metrics, rewards, acted })
    }

    /// Per-facility occupancy after kick-out for the most recent day.
    pub fn last_day_stats(&self) -> Option<&FacilityDayStats> {
        self.stats_prev1.as_ref()
    }
}

/// Number of facilities agent `i` will visit today.
fn visit_count(
    pop: &Population,
    registry: &QuarantineRegistry,
    _states: &[HealthState],
    acted: &[bool],
    actions: &[u8],
    agent: AgentId,
) -> usize {
    let mut count = 0;
    visit_fill(pop, registry, _states, acted, actions, agent, |_| count += 1);
    count
}

/// Emits the facility ids agent `agent` visits today, in type order.
fn visit_fill(
    pop: &Population,
    registry: &QuarantineRegistry,
    _states: &[HealthState],
    acted: &[bool],
    actions: &[u8],
    agent: AgentId,
    mut emit: impl FnMut(FacilityId),
) {
    let i = agent as usize;
    if !acted[i] || registry.is_isolated(agent) {
        return;
    }
    let a = &pop.agents[i];
    let action = Action::from_flat(actions[i]);
    let act_level = if a.age_group.decides_activity() { action.act } else { 0 };
    for (&t, &fid) in crate::population::FACILITY_TYPES.iter().zip(&a.affiliations) {
        if fid == NO_FACILITY || t == FacilityType::Hospital {
            continue;
        }
        let visits = if t.is_compulsory() {
            true
        } else if t == FacilityType::Retail {
            action.shop == Shopping::Offline
        } else {
            t.min_act() <= act_level
        };
        if visits {
            emit(fid);
        }
    }
}
