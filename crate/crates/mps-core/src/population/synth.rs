//! Statistical county synthesizer.
//!
//! Households are spread uniformly over a square county; every other venue
//! clusters around a handful of Gaussian town centers. Capacities are drawn
//! from a log-normal fitted to each type's published mean and maximum.
//! Agents join the nearest facility of each applicable type, subject to the
//! type's priority radius.

use rayon::prelude::*;

use super::spatial::SpatialIndex;
use super::{
    Agent, AgeGroup, Facility, FacilityId, FacilityType, PopError, Population, PopulationConfig,
    FACILITY_TYPES, NO_FACILITY, NUM_FACILITY_TYPES,
};
use crate::rng::{SimRng, StreamKind};

/// Inverse standard normal CDF (Acklam's rational approximation, |err| < 1.2e-9).
#[allow(clippy::excessive_precision)]
fn probit(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -probit(1.0 - p)
    }
}

/// Log-normal (mu, sigma) whose mean is `mean` and whose (1 - 1/count)
/// quantile sits at `max`. Degenerate inputs fall back to a point mass.
fn lognormal_fit(mean: f64, max: f64, count: u32) -> (f64, f64) {
    if count < 2 || max <= mean {
        return (mean.max(1.0).ln(), 0.0);
    }
    let z = probit(1.0 - 1.0 / count as f64).max(0.1);
    let spread = (max / mean).ln();
    let disc = z * z - 2.0 * spread;
    let sigma = if disc > 0.0 { z - disc.sqrt() } else { z };
    let mu = mean.ln() - sigma * sigma / 2.0;
    (mu, sigma)
}

fn sample_capacity(rng: &mut SimRng, mu: f64, sigma: f64, max: u32) -> u32 {
    let draw = (mu + sigma * rng.normal()).exp();
    (draw.round() as u32).clamp(1, max.max(1))
}

struct Geography {
    centers: Vec<(f64, f64)>,
    extent: f64,
}

impl Geography {
    fn new(cfg: &PopulationConfig, rng: &mut SimRng) -> Self {
        let extent = cfg.county_size_km;
        let centers = (0..cfg.town_centers.max(1))
            .map(|_| {
                (
                    extent * (0.2 + 0.6 * rng.next_f64()),
                    extent * (0.2 + 0.6 * rng.next_f64()),
                )
            })
            .collect();
        Geography { centers, extent }
    }

    fn uniform_point(&self, rng: &mut SimRng) -> (f64, f64) {
        (rng.next_f64() * self.extent, rng.next_f64() * self.extent)
    }

    fn clustered_point(&self, rng: &mut SimRng, sigma: f64) -> (f64, f64) {
        let c = self.centers[rng.uniform_usize(self.centers.len())];
        let x = (c.0 + sigma * rng.normal()).clamp(0.0, self.extent);
        let y = (c.1 + sigma * rng.normal()).clamp(0.0, self.extent);
        (x, y)
    }
}

/// Household sizes drawn to the configured distribution, then nudged so the
/// total equals `agents` exactly.
fn household_sizes(
    spec_mean: f64,
    spec_max: u32,
    households: u64,
    agents: u64,
    rng: &mut SimRng,
) -> Result<Vec<u32>, PopError> {
    if households == 0 {
        return Err(PopError::InfeasibleCapacity("household", "no households configured".into()));
    }
    if households > agents {
        return Err(PopError::InfeasibleCapacity(
            "household",
            format!("{households} households exceed {agents} agents; empty households are not allowed"),
        ));
    }
    if households.saturating_mul(spec_max as u64) < agents {
        return Err(PopError::InfeasibleCapacity(
            "household",
            format!("{households} households of at most {spec_max} cannot hold {agents} agents"),
        ));
    }
    let (mu, sigma) = lognormal_fit(spec_mean, spec_max as f64, households.min(u32::MAX as u64) as u32);
    let mut sizes: Vec<u32> = (0..households)
        .map(|_| sample_capacity(rng, mu, sigma, spec_max))
        .collect();
    let mut total: i64 = sizes.iter().map(|&s| s as i64).sum();
    let want = agents as i64;
    while total < want {
        let i = rng.uniform_usize(sizes.len());
        if sizes[i] < spec_max {
            sizes[i] += 1;
            total += 1;
        }
    }
    while total > want {
        let i = rng.uniform_usize(sizes.len());
        if sizes[i] > 1 {
            sizes[i] -= 1;
            total -= 1;
        }
    }
    Ok(sizes)
}

/// Builds the synthetic county. Deterministic given `cfg.seed`.
pub fn synthesize_population(cfg: &PopulationConfig) -> Result<Population, PopError> {
    cfg.validate()?;
    let rng = SimRng::stream(cfg.seed, StreamKind::PopulationSynth, 0, 0);
    let mut geo_rng = rng.child(1);
    let mut cap_rng = rng.child(2);
    let mut size_rng = rng.child(3);
    let mut age_rng = rng.child(4);

    let geo = Geography::new(cfg, &mut geo_rng);

    // Mandatory types must exist when someone needs them.
    let age_counts = cfg.age_counts();
    let need = |t: FacilityType| cfg.facilities[t.index()].count;
    if need(FacilityType::Household) == 0 && cfg.agent_count > 0 {
        return Err(PopError::InfeasibleCapacity("household", "count is zero".into()));
    }
    if age_counts[AgeGroup::Sch.index()] > 0 && need(FacilityType::School) == 0 {
        return Err(PopError::InfeasibleCapacity("school", "count is zero but students exist".into()));
    }
    if age_counts[AgeGroup::Adu.index()] > 0 && need(FacilityType::Workplace) == 0 {
        return Err(PopError::InfeasibleCapacity("workplace", "count is zero but adults exist".into()));
    }

    // Household sizes first; household capacity equals its size.
    let hh_spec = &cfg.facilities[FacilityType::Household.index()];
    let sizes = household_sizes(
        hh_spec.capacity_mean,
        hh_spec.capacity_max,
        hh_spec.count as u64,
        cfg.agent_count,
        &mut size_rng,
    )?;

    // Facilities, dense ids in type order.
    let mut facilities: Vec<Facility> = Vec::new();
    for &t in &FACILITY_TYPES {
        let spec = &cfg.facilities[t.index()];
        let (mu, sigma) = lognormal_fit(spec.capacity_mean, spec.capacity_max as f64, spec.count);
        let (beds_mu, beds_sigma) = lognormal_fit(spec.beds_mean, spec.beds_max as f64, spec.count);
        for i in 0..spec.count {
            let id = facilities.len() as FacilityId;
            let location = if t == FacilityType::Household {
                geo.uniform_point(&mut geo_rng)
            } else {
                geo.clustered_point(&mut geo_rng, cfg.town_sigma_km)
            };
            let capacity = if t == FacilityType::Household {
                sizes[i as usize]
            } else {
                sample_capacity(&mut cap_rng, mu, sigma, spec.capacity_max)
            };
            let beds = if t == FacilityType::Hospital && spec.beds_max > 0 {
                sample_capacity(&mut cap_rng, beds_mu, beds_sigma, spec.beds_max)
            } else {
                0
            };
            facilities.push(Facility { id, ftype: t, location, capacity, beds });
        }
    }

    // Agents fill households in id order; ages are distributed so that every
    // household gets an adult or senior while any remain (they are the only
    // members who can shop).
    let household_ids: Vec<FacilityId> = facilities
        .iter()
        .filter(|f| f.ftype == FacilityType::Household)
        .map(|f| f.id)
        .collect();

    let mut age_tokens: Vec<AgeGroup> = Vec::with_capacity(cfg.agent_count as usize);
    for (gi, &count) in age_counts.iter().enumerate() {
        age_tokens.extend(std::iter::repeat_n(super::AGE_GROUPS[gi], count as usize));
    }

    let mut shoppers: Vec<AgeGroup> =
        age_tokens.iter().copied().filter(|g| g.decides_activity()).collect();
    let mut others: Vec<AgeGroup> =
        age_tokens.iter().copied().filter(|g| !g.decides_activity()).collect();
    age_rng.shuffle(&mut shoppers);
    age_rng.shuffle(&mut others);

    let n = cfg.agent_count as usize;
    let mut ages: Vec<Option<AgeGroup>> = vec![None; n];
    // First slot of each household (agent ids are assigned sequentially per
    // household below, so precompute the offsets).
    let mut first_slots = Vec::with_capacity(household_ids.len());
    let mut acc = 0usize;
    for &hid in &household_ids {
        let size = facilities[hid as usize].capacity as usize;
        first_slots.push(acc);
        acc += size;
    }
    debug_assert_eq!(acc, n);

    let mut shuffled_first = first_slots.clone();
    age_rng.shuffle(&mut shuffled_first);
    for &slot in &shuffled_first {
        if let Some(g) = shoppers.pop() {
            ages[slot] = Some(g);
        } else {
            break;
        }
    }
    let mut rest: Vec<AgeGroup> = shoppers;
    rest.append(&mut others);
    age_rng.shuffle(&mut rest);
    for a in ages.iter_mut() {
        if a.is_none() {
            *a = rest.pop();
        }
    }

    let mut agents: Vec<Agent> = Vec::with_capacity(n);
    for (hh_idx, &hid) in household_ids.iter().enumerate() {
        let size = facilities[hid as usize].capacity as usize;
        let home = facilities[hid as usize].location;
        for s in 0..size {
            let id = (first_slots[hh_idx] + s) as u32;
            let mut affiliations = [NO_FACILITY; NUM_FACILITY_TYPES];
            affiliations[FacilityType::Household.index()] = hid;
            agents.push(Agent {
                id,
                age_group: ages[id as usize].expect("age token for every agent"),
                home_location: home,
                affiliations,
            });
        }
    }
    agents.sort_by_key(|a| a.id);

    // Nearest-neighbor affiliation per applicable type.
    let indices: Vec<Option<SpatialIndex>> = FACILITY_TYPES
        .iter()
        .map(|&t| {
            if t == FacilityType::Household || t == FacilityType::Hospital {
                return None;
            }
            Some(SpatialIndex::build(
                geo.extent,
                facilities.iter().filter(|f| f.ftype == t).map(|f| (f.id, f.location)),
            ))
        })
        .collect();

    let leisure_types: Vec<FacilityType> = FACILITY_TYPES
        .iter()
        .copied()
        .filter(|t| t.is_leisure() && *t != FacilityType::Hospital)
        .collect();

    agents.par_iter_mut().for_each(|agent| {
        let home = agent.home_location;
        match agent.age_group {
            AgeGroup::Sch => {
                if let Some(idx) = &indices[FacilityType::School.index()] {
                    if let Some(fid) = idx.nearest_within(home, f64::INFINITY) {
                        agent.affiliations[FacilityType::School.index()] = fid;
                    }
                }
            }
            AgeGroup::Adu => {
                if let Some(idx) = &indices[FacilityType::Workplace.index()] {
                    if let Some(fid) = idx.nearest_within(home, f64::INFINITY) {
                        agent.affiliations[FacilityType::Workplace.index()] = fid;
                    }
                }
            }
            _ => {}
        }
        if agent.age_group.decides_activity() {
            for &t in &leisure_types {
                if let Some(idx) = &indices[t.index()] {
                    let radius = cfg.priority_radii[t.index()].unwrap_or(f64::INFINITY);
                    if let Some(fid) = idx.nearest_within(home, radius) {
                        agent.affiliations[t.index()] = fid;
                    }
                }
            }
        }
    });

    // Every student needs a school, every adult a workplace.
    for a in &agents {
        match a.age_group {
            AgeGroup::Sch if a.affiliation(FacilityType::School).is_none() => {
                return Err(PopError::InfeasibleCapacity(
                    "school",
                    format!("agent {} found no school", a.id),
                ));
            }
            AgeGroup::Adu if a.affiliation(FacilityType::Workplace).is_none() => {
                return Err(PopError::InfeasibleCapacity(
                    "workplace",
                    format!("agent {} found no workplace", a.id),
                ));
            }
            _ => {}
        }
    }

    Population::build(agents, facilities)
}
