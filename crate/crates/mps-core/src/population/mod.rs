//! Synthetic county: agents, facilities, and the affiliation network.
//!
//! Agents are attached to at most one facility per type. Households,
//! workplaces and schools are compulsory daily destinations; leisure venues
//! are joined only when within the type's priority radius of the agent's
//! home.

mod io;
mod spatial;
mod synth;

pub use io::{load_population, save_population};
pub use spatial::SpatialIndex;
pub use synth::synthesize_population;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Four-way age split; drives both facility eligibility and disease response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    /// Preschool children, 0-9.
    Chd,
    /// Students, 10-18.
    Sch,
    /// Adults, 19-64.
    Adu,
    /// Seniors, 65+.
    Rtr,
}

pub const AGE_GROUPS: [AgeGroup; 4] = [AgeGroup::Chd, AgeGroup::Sch, AgeGroup::Adu, AgeGroup::Rtr];

impl AgeGroup {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AgeGroup::Chd => "chd",
            AgeGroup::Sch => "sch",
            AgeGroup::Adu => "adu",
            AgeGroup::Rtr => "rtr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "chd" => AgeGroup::Chd,
            "sch" => AgeGroup::Sch,
            "adu" => AgeGroup::Adu,
            "rtr" => AgeGroup::Rtr,
            _ => return None,
        })
    }

    /// Adults and seniors pick an activity level and make shopping decisions;
    /// children and students only decide on masks.
    pub fn decides_activity(self) -> bool {
        matches!(self, AgeGroup::Adu | AgeGroup::Rtr)
    }
}

/// Three-band split used by the severity, fatality, and out-of-hospital
/// death tables (0-17 / 18-64 / 65+).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgeBand {
    Young,
    Middle,
    Senior,
}

impl AgeBand {
    pub fn from_group(g: AgeGroup) -> Self {
        match g {
            AgeGroup::Chd | AgeGroup::Sch => AgeBand::Young,
            AgeGroup::Adu => AgeBand::Middle,
            AgeGroup::Rtr => AgeBand::Senior,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The fourteen venue types of the contact network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacilityType {
    Hospital,
    Household,
    Workplace,
    School,
    Retail,
    Supermarket,
    Community,
    Library,
    Museum,
    Gym,
    Restaurant,
    Stadium,
    Theatre,
    Cinema,
}

pub const NUM_FACILITY_TYPES: usize = 14;

pub const FACILITY_TYPES: [FacilityType; NUM_FACILITY_TYPES] = [
    FacilityType::Hospital,
    FacilityType::Household,
    FacilityType::Workplace,
    FacilityType::School,
    FacilityType::Retail,
    FacilityType::Supermarket,
    FacilityType::Community,
    FacilityType::Library,
    FacilityType::Museum,
    FacilityType::Gym,
    FacilityType::Restaurant,
    FacilityType::Stadium,
    FacilityType::Theatre,
    FacilityType::Cinema,
];

impl FacilityType {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FacilityType::Hospital => "hospital",
            FacilityType::Household => "household",
            FacilityType::Workplace => "workplace",
            FacilityType::School => "school",
            FacilityType::Retail => "retail",
            FacilityType::Supermarket => "supermarket",
            FacilityType::Community => "community",
            FacilityType::Library => "library",
            FacilityType::Museum => "museum",
            FacilityType::Gym => "gym",
            FacilityType::Restaurant => "restaurant",
            FacilityType::Stadium => "stadium",
            FacilityType::Theatre => "theatre",
            FacilityType::Cinema => "cinema",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FACILITY_TYPES.iter().copied().find(|t| t.name() == s)
    }

    /// Base infection coefficient I_F.
    pub fn infection_coefficient(self) -> f64 {
        match self {
            FacilityType::Hospital => 0.0,
            FacilityType::Household => 0.23,
            FacilityType::Workplace => 0.14,
            FacilityType::School => 0.21,
            FacilityType::Retail => 0.09,
            FacilityType::Supermarket => 0.09,
            FacilityType::Community => 0.0075,
            FacilityType::Library => 0.12,
            FacilityType::Museum => 0.12,
            FacilityType::Gym => 0.15,
            FacilityType::Restaurant => 0.21,
            FacilityType::Stadium => 0.42,
            FacilityType::Theatre => 0.42,
            FacilityType::Cinema => 0.42,
        }
    }

    /// Normal visit frequency f_F (visits per day).
    pub fn visit_frequency(self) -> f64 {
        match self {
            FacilityType::Hospital => 0.0,
            FacilityType::Household => 1.0,
            FacilityType::Workplace => 5.0 / 7.0,
            FacilityType::School => 5.0 / 7.0,
            FacilityType::Retail => 1.0,
            FacilityType::Supermarket => 1.0,
            FacilityType::Community => 1.0,
            FacilityType::Library => 10.5 / 365.0,
            FacilityType::Museum => 2.5 / 365.0 / 0.54,
            FacilityType::Gym => 0.47,
            FacilityType::Restaurant => 4.2 / 7.0,
            FacilityType::Stadium => 4.7 / 365.0 / 0.17,
            FacilityType::Theatre => 3.8 / 365.0 / 0.35,
            FacilityType::Cinema => 5.3 / 365.0 / 0.59,
        }
    }

    /// Minimum activity level required to visit.
    pub fn min_act(self) -> u8 {
        match self {
            FacilityType::Hospital
            | FacilityType::Household
            | FacilityType::Workplace
            | FacilityType::School
            | FacilityType::Retail
            | FacilityType::Supermarket => 0,
            FacilityType::Community => 1,
            FacilityType::Library | FacilityType::Museum | FacilityType::Gym => 2,
            FacilityType::Restaurant
            | FacilityType::Stadium
            | FacilityType::Theatre
            | FacilityType::Cinema => 3,
        }
    }

    /// Compulsory destinations are visited regardless of activity level.
    pub fn is_compulsory(self) -> bool {
        matches!(
            self,
            FacilityType::Household | FacilityType::Workplace | FacilityType::School
        )
    }

    /// Leisure venues joined by nearest-within-radius assignment.
    pub fn is_leisure(self) -> bool {
        !matches!(
            self,
            FacilityType::Hospital
                | FacilityType::Household
                | FacilityType::Workplace
                | FacilityType::School
        )
    }

    /// Default priority radius (km) for affiliation; `None` when assignment
    /// is not distance-capped (compulsory types and communities).
    pub fn default_priority_radius(self) -> Option<f64> {
        match self {
            FacilityType::Retail => Some(2.0),
            FacilityType::Restaurant | FacilityType::Gym | FacilityType::Supermarket => Some(5.0),
            FacilityType::Theatre
            | FacilityType::Cinema
            | FacilityType::Library
            | FacilityType::Museum => Some(10.0),
            FacilityType::Stadium => Some(35.0),
            _ => None,
        }
    }
}

pub type AgentId = u32;
pub type FacilityId = u32;

pub const NO_FACILITY: FacilityId = u32::MAX;

#[derive(Clone, Debug)]
pub struct Facility {
    pub id: FacilityId,
    pub ftype: FacilityType,
    pub location: (f64, f64),
    pub capacity: u32,
    /// Hospitals only: bed count gating hospitalization.
    pub beds: u32,
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub id: AgentId,
    pub age_group: AgeGroup,
    pub home_location: (f64, f64),
    /// Affiliated facility per type; `NO_FACILITY` where absent. The
    /// household slot is always present.
    pub affiliations: [FacilityId; NUM_FACILITY_TYPES],
}

impl Agent {
    pub fn household_id(&self) -> FacilityId {
        self.affiliations[FacilityType::Household.index()]
    }

    pub fn affiliation(&self, t: FacilityType) -> Option<FacilityId> {
        let f = self.affiliations[t.index()];
        (f != NO_FACILITY).then_some(f)
    }
}

pub fn distance2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Per-type synthesis parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FacilitySpec {
    pub count: u32,
    pub capacity_mean: f64,
    pub capacity_max: u32,
    /// Hospitals only.
    #[serde(default)]
    pub beds_mean: f64,
    #[serde(default)]
    pub beds_max: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub agent_count: u64,
    /// Fractions per age group (chd, sch, adu, rtr); must sum to 1.
    pub age_fractions: [f64; 4],
    /// Specs in `FACILITY_TYPES` order.
    pub facilities: Vec<FacilitySpec>,
    /// Priority radius per type (km); `None` means unbounded.
    pub priority_radii: Vec<Option<f64>>,
    pub county_size_km: f64,
    pub town_centers: u32,
    pub town_sigma_km: f64,
    pub seed: u64,
}

/// Table of full-scale facility counts and capacities:
/// (count, capacity mean, capacity max) in `FACILITY_TYPES` order, hospital
/// capacity meaning staff (beds are separate).
const FULL_SCALE_FACILITIES: [(u32, f64, u32); NUM_FACILITY_TYPES] = [
    (14, 1577.43, 8613),     // hospital (staff; beds 384 mean / 1542 max)
    (533_919, 2.22527, 13),  // household
    (38_333, 13.5461, 7741), // workplace
    (338, 517.583, 2239),    // school
    (601, 247.977, 1533),    // retail
    (87, 1900.97, 5380),     // supermarket
    (358, 3318.75, 15_889),  // community
    (88, 302.17, 3069),      // library
    (78, 77.8333, 2347),     // museum
    (193, 110.782, 1797),    // gym
    (2691, 201.458, 3462),   // restaurant
    (3, 3963.33, 3976),      // stadium
    (59, 159.576, 758),      // theatre
    (36, 367.917, 3811),     // cinema
];

/// Published group counts (chd, sch, adu, rtr). They sum to 1,184,512.
pub const FULL_SCALE_AGE_COUNTS: [u64; 4] = [130_451, 114_867, 739_183, 200_011];

pub const FULL_SCALE_AGENTS: u64 =
    FULL_SCALE_AGE_COUNTS[0] + FULL_SCALE_AGE_COUNTS[1] + FULL_SCALE_AGE_COUNTS[2] + FULL_SCALE_AGE_COUNTS[3];

impl PopulationConfig {
    /// Full-scale county reproducing the published group counts exactly.
    pub fn full_scale(seed: u64) -> Self {
        Self::scaled(FULL_SCALE_AGENTS, seed)
    }

    /// County scaled to `agent_count` with proportional facility counts.
    pub fn scaled(agent_count: u64, seed: u64) -> Self {
        let total = FULL_SCALE_AGENTS as f64;
        let ratio = agent_count as f64 / total;
        let facilities = FULL_SCALE_FACILITIES
            .iter()
            .enumerate()
            .map(|(i, &(count, mean, max))| {
                let scaled = ((count as f64 * ratio).round() as u32).max(1);
                let mut spec = FacilitySpec {
                    count: if ratio >= 1.0 { count } else { scaled },
                    capacity_mean: mean,
                    capacity_max: max,
                    beds_mean: 0.0,
                    beds_max: 0,
                };
                if i == FacilityType::Hospital.index() {
                    spec.beds_mean = 384.0;
                    spec.beds_max = 1542;
                }
                spec
            })
            .collect();
        PopulationConfig {
            agent_count,
            age_fractions: [
                FULL_SCALE_AGE_COUNTS[0] as f64 / total,
                FULL_SCALE_AGE_COUNTS[1] as f64 / total,
                FULL_SCALE_AGE_COUNTS[2] as f64 / total,
                FULL_SCALE_AGE_COUNTS[3] as f64 / total,
            ],
            facilities,
            priority_radii: FACILITY_TYPES.iter().map(|t| t.default_priority_radius()).collect(),
            county_size_km: 35.0,
            town_centers: 5,
            town_sigma_km: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PopError> {
        let sum: f64 = self.age_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PopError::Config(format!("age fractions sum to {sum}, expected 1")));
        }
        if self.age_fractions.iter().any(|&f| f < 0.0) {
            return Err(PopError::Config("negative age fraction".into()));
        }
        if self.facilities.len() != NUM_FACILITY_TYPES || self.priority_radii.len() != NUM_FACILITY_TYPES {
            return Err(PopError::Config(format!(
                "facility specs and radii must cover all {NUM_FACILITY_TYPES} types"
            )));
        }
        if self.county_size_km <= 0.0 {
            return Err(PopError::Config("county size must be positive".into()));
        }
        Ok(())
    }

    /// Integer age-group targets by largest remainder.
    pub fn age_counts(&self) -> [u64; 4] {
        let mut counts = [0u64; 4];
        let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(4);
        let mut assigned = 0u64;
        for (i, &f) in self.age_fractions.iter().enumerate() {
            let exact = f * self.agent_count as f64;
            let base = exact.floor() as u64;
            counts[i] = base;
            assigned += base;
            remainders.push((i, exact - base as f64));
        }
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut left = self.agent_count - assigned;
        for (i, _) in remainders {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Error)]
pub enum PopError {
    #[error("invalid population config: {0}")]
    Config(String),
    #[error("facility type {0} cannot host all mandatory affiliations: {1}")]
    InfeasibleCapacity(&'static str, String),
    #[error("population file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("population file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("population validation: {0}")]
    Validation(String),
}

/// Immutable county shared read-only by all simulation workers.
#[derive(Clone, Debug)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub facilities: Vec<Facility>,
    /// Facility ids grouped by type.
    pub by_type: Vec<Vec<FacilityId>>,
    /// CSR of household members: `member_offsets[h]..member_offsets[h+1]`
    /// indexes `members` for facility id `h` (non-household ids are empty).
    member_offsets: Vec<u32>,
    members: Vec<AgentId>,
}

impl Population {
    /// Validates invariants and builds lookup structures.
    pub fn build(agents: Vec<Agent>, facilities: Vec<Facility>) -> Result<Self, PopError> {
        for (i, f) in facilities.iter().enumerate() {
            if f.id as usize != i {
                return Err(PopError::Validation(format!(
                    "facility ids must be dense: index {i} holds id {}",
                    f.id
                )));
            }
            if f.capacity == 0 {
                return Err(PopError::Validation(format!("facility {} has zero capacity", f.id)));
            }
        }
        for (i, a) in agents.iter().enumerate() {
            if a.id as usize != i {
                return Err(PopError::Validation(format!(
                    "agent ids must be dense: index {i} holds id {}",
                    a.id
                )));
            }
            for (t, &fid) in FACILITY_TYPES.iter().zip(a.affiliations.iter()) {
                if fid == NO_FACILITY {
                    continue;
                }
                let f = facilities.get(fid as usize).ok_or_else(|| {
                    PopError::Validation(format!("agent {} references unknown facility {}", a.id, fid))
                })?;
                if f.ftype != *t {
                    return Err(PopError::Validation(format!(
                        "agent {} affiliation slot {} points at a {} facility",
                        a.id,
                        t.name(),
                        f.ftype.name()
                    )));
                }
            }
            if a.affiliations[FacilityType::Household.index()] == NO_FACILITY {
                return Err(PopError::Validation(format!("agent {} has no household", a.id)));
            }
            let workplace = a.affiliation(FacilityType::Workplace);
            let school = a.affiliation(FacilityType::School);
            match a.age_group {
                AgeGroup::Chd => {
                    if workplace.is_some() || school.is_some() {
                        return Err(PopError::Validation(format!(
                            "chd agent {} may not have workplace or school",
                            a.id
                        )));
                    }
                }
                AgeGroup::Sch => {
                    if workplace.is_some() {
                        return Err(PopError::Validation(format!(
                            "sch agent {} may not have a workplace",
                            a.id
                        )));
                    }
                }
                AgeGroup::Adu => {
                    if school.is_some() {
                        return Err(PopError::Validation(format!(
                            "adu agent {} may not have a school",
                            a.id
                        )));
                    }
                }
                AgeGroup::Rtr => {
                    if workplace.is_some() || school.is_some() {
                        return Err(PopError::Validation(format!(
                            "rtr agent {} may not have workplace or school",
                            a.id
                        )));
                    }
                }
            }
        }

        let mut by_type = vec![Vec::new(); NUM_FACILITY_TYPES];
        for f in &facilities {
            by_type[f.ftype.index()].push(f.id);
        }

        // Household member CSR.
        let mut counts = vec![0u32; facilities.len() + 1];
        for a in &agents {
            counts[a.household_id() as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let member_offsets = counts.clone();
        let mut members = vec![0u32; agents.len()];
        let mut cursor = member_offsets.clone();
        for a in &agents {
            let h = a.household_id() as usize;
            members[cursor[h] as usize] = a.id;
            cursor[h] += 1;
        }

        Ok(Population { agents, facilities, by_type, member_offsets, members })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn household_members(&self, household: FacilityId) -> &[AgentId] {
        let lo = self.member_offsets[household as usize] as usize;
        let hi = self.member_offsets[household as usize + 1] as usize;
        &self.members[lo..hi]
    }

    pub fn hospitals(&self) -> &[FacilityId] {
        &self.by_type[FacilityType::Hospital.index()]
    }
}

/// Nearest hospital with a free bed, by home distance; `None` when every
/// bed is taken. `bed_occupancy` is indexed by position in `hospitals()`.
pub fn assign_hospital(
    home: (f64, f64),
    pop: &Population,
    bed_occupancy: &[u32],
) -> Option<FacilityId> {
    let mut best: Option<(f64, FacilityId)> = None;
    for (slot, &hid) in pop.hospitals().iter().enumerate() {
        let f = &pop.facilities[hid as usize];
        if bed_occupancy[slot] >= f.beds {
            continue;
        }
        let d2 = distance2(home, f.location);
        let better = match best {
            None => true,
            Some((bd, bid)) => d2 < bd || (d2 == bd && hid < bid),
        };
        if better {
            best = Some((d2, hid));
        }
    }
    best.map(|(_, id)| id)
}
