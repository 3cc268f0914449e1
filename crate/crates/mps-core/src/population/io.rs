//! Line-delimited population file format.
//!
//! Two sections: facilities first, then agents.
//!
//! ```text
//! F <id> <type> <x> <y> <capacity> [beds]
//! A <id> <age_group> <x> <y> <household_id> [<type>=<facility_id> ...]
//! ```
//!
//! Whitespace-separated UTF-8; ids dense from 0 in file order. Blank lines
//! and lines starting with `#` are ignored on read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{
    Agent, AgeGroup, Facility, FacilityType, PopError, Population, FACILITY_TYPES, NO_FACILITY,
    NUM_FACILITY_TYPES,
};

pub fn save_population(pop: &Population, path: &Path) -> Result<(), PopError> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in &pop.facilities {
        if f.ftype == FacilityType::Hospital {
            writeln!(
                w,
                "F {} {} {} {} {} {}",
                f.id,
                f.ftype.name(),
                f.location.0,
                f.location.1,
                f.capacity,
                f.beds
            )?;
        } else {
            writeln!(
                w,
                "F {} {} {} {} {}",
                f.id,
                f.ftype.name(),
                f.location.0,
                f.location.1,
                f.capacity
            )?;
        }
    }
    for a in &pop.agents {
        write!(
            w,
            "A {} {} {} {} {}",
            a.id,
            a.age_group.name(),
            a.home_location.0,
            a.home_location.1,
            a.household_id()
        )?;
        for &t in &FACILITY_TYPES {
            if t == FacilityType::Household {
                continue;
            }
            if let Some(fid) = a.affiliation(t) {
                write!(w, " {}={}", t.name(), fid)?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_population(path: &Path) -> Result<Population, PopError> {
    let reader = BufReader::new(File::open(path)?);
    let mut facilities: Vec<Facility> = Vec::new();
    let mut agents: Vec<Agent> = Vec::new();
    let mut in_agent_section = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let tag = fields.next().unwrap();
        let err = |msg: String| PopError::Parse { line: lineno, msg };
        match tag {
            "F" => {
                if in_agent_section {
                    return Err(err("facility record after agent section".into()));
                }
                let id: u32 = next_field(&mut fields, "id", lineno)?;
                if id as usize != facilities.len() {
                    return Err(err(format!(
                        "facility ids must be dense: expected {}, found {id}",
                        facilities.len()
                    )));
                }
                let tname: String = next_field(&mut fields, "type", lineno)?;
                let ftype = FacilityType::parse(&tname)
                    .ok_or_else(|| err(format!("unknown facility type '{tname}'")))?;
                let x: f64 = next_field(&mut fields, "x", lineno)?;
                let y: f64 = next_field(&mut fields, "y", lineno)?;
                let capacity: u32 = next_field(&mut fields, "capacity", lineno)?;
                let beds = match fields.next() {
                    Some(b) => {
                        if ftype != FacilityType::Hospital {
                            return Err(err("beds field only valid for hospitals".into()));
                        }
                        b.parse::<u32>().map_err(|e| err(format!("bad beds field: {e}")))?
                    }
                    None => 0,
                };
                if fields.next().is_some() {
                    return Err(err("trailing fields on facility record".into()));
                }
                facilities.push(Facility { id, ftype, location: (x, y), capacity, beds });
            }
            "A" => {
                in_agent_section = true;
                let id: u32 = next_field(&mut fields, "id", lineno)?;
                if id as usize != agents.len() {
                    return Err(err(format!(
                        "agent ids must be dense: expected {}, found {id}",
                        agents.len()
                    )));
                }
                let gname: String = next_field(&mut fields, "age_group", lineno)?;
                let age_group = AgeGroup::parse(&gname)
                    .ok_or_else(|| err(format!("unknown age group '{gname}'")))?;
                let x: f64 = next_field(&mut fields, "x", lineno)?;
                let y: f64 = next_field(&mut fields, "y", lineno)?;
                let household: u32 = next_field(&mut fields, "household_id", lineno)?;
                let mut affiliations = [NO_FACILITY; NUM_FACILITY_TYPES];
                affiliations[FacilityType::Household.index()] = household;
                for pair in fields {
                    let (tname, fid) = pair
                        .split_once('=')
                        .ok_or_else(|| err(format!("malformed affiliation '{pair}'")))?;
                    let t = FacilityType::parse(tname)
                        .ok_or_else(|| err(format!("unknown facility type '{tname}'")))?;
                    if t == FacilityType::Household {
                        return Err(err("household affiliation belongs in column 6".into()));
                    }
                    let fid: u32 =
                        fid.parse().map_err(|e| err(format!("bad affiliation id: {e}")))?;
                    if affiliations[t.index()] != NO_FACILITY {
                        return Err(err(format!("duplicate affiliation for type '{tname}'")));
                    }
                    affiliations[t.index()] = fid;
                }
                agents.push(Agent { id, age_group, home_location: (x, y), affiliations });
            }
            other => {
                return Err(err(format!("unknown record tag '{other}'")));
            }
        }
    }
    Population::build(agents, facilities)
}

fn next_field<T: std::str::FromStr>(
    fields: &mut std::str::SplitWhitespace<'_>,
    name: &str,
    line: usize,
) -> Result<T, PopError>
where
    T::Err: std::fmt::Display,
{
    let raw = fields
        .next()
        .ok_or_else(|| PopError::Parse { line, msg: format!("missing field '{name}'") })?;
    raw.parse::<T>()
        .map_err(|e| PopError::Parse { line, msg: format!("bad field '{name}': {e}") })
}
