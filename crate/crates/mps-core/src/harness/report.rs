//! CSV emission. All numeric formatting is fixed-width decimal so that
//! deterministic runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::environment::{DayMetrics, World};
use crate::population::AgentId;

use super::HarnessError;

pub fn write_metrics_csv(path: &Path, rows: &[DayMetrics]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", DayMetrics::csv_header())?;
    for row in rows {
        writeln!(w, "{}", row.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Day-indexed mean over (seed, episode) pairs of every metric column.
#[derive(Clone, Debug, Default)]
pub struct AveragedRow {
    pub day: u32,
    pub new_cases: f64,
    pub cum_cases: f64,
    pub hospitalized: f64,
    pub deaths: f64,
    pub isolated: f64,
    pub mask_rate: f64,
    pub act_histogram: [f64; 4],
    pub shop_offline: f64,
    pub shop_online: f64,
    pub mean_reward: [f64; 4],
}

/// Means over the last `window` episodes of each seed's series.
pub fn averaged_rows<'a>(
    seed_episodes: impl Iterator<Item = &'a Vec<Vec<DayMetrics>>>,
    window: usize,
    days: usize,
) -> Vec<AveragedRow> {
    let mut acc: Vec<AveragedRow> = (0..days)
        .map(|d| AveragedRow { day: d as u32, ..Default::default() })
        .collect();
    let mut count = 0usize;
    for episodes in seed_episodes {
        let lo = episodes.len().saturating_sub(window);
        for ep in &episodes[lo..] {
            count += 1;
            for (slot, m) in acc.iter_mut().zip(ep.iter()) {
                slot.new_cases += m.new_cases as f64;
                slot.cum_cases += m.cum_cases as f64;
                slot.hospitalized += m.hospitalized as f64;
                slot.deaths += m.deaths as f64;
                slot.isolated += m.isolated as f64;
                slot.mask_rate += m.mask_rate;
                for g in 0..4 {
                    slot.act_histogram[g] += m.act_histogram[g] as f64;
                    slot.mean_reward[g] += m.mean_reward[g];
                }
                slot.shop_offline += m.shop_offline as f64;
                slot.shop_online += m.shop_online as f64;
            }
        }
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        for slot in acc.iter_mut() {
            slot.new_cases *= inv;
            slot.cum_cases *= inv;
            slot.hospitalized *= inv;
            slot.deaths *= inv;
            slot.isolated *= inv;
            slot.mask_rate *= inv;
            for g in 0..4 {
                slot.act_histogram[g] *= inv;
                slot.mean_reward[g] *= inv;
            }
            slot.shop_offline *= inv;
            slot.shop_online *= inv;
        }
    }
    acc
}

pub fn write_averaged_csv(path: &Path, rows: &[AveragedRow]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "day,new_cases,cum_cases,hospitalized,deaths,isolated,mask_rate,\
         act0,act1,act2,act3,shop_off,shop_on,\
         reward_chd,reward_sch,reward_adu,reward_rtr"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.day,
            r.new_cases,
            r.cum_cases,
            r.hospitalized,
            r.deaths,
            r.isolated,
            r.mask_rate,
            r.act_histogram[0],
            r.act_histogram[1],
            r.act_histogram[2],
            r.act_histogram[3],
            r.shop_offline,
            r.shop_online,
            r.mean_reward[0],
            r.mean_reward[1],
            r.mean_reward[2],
            r.mean_reward[3],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Heat-map source: one row per household with its cumulative infection flag.
pub fn write_household_dump(path: &Path, world: &World) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "day,household_id,x,y,any_infected")?;
    let day = world.day();
    for (id, x, y, any) in world.household_infection_rows() {
        writeln!(w, "{},{},{},{},{}", day, id, x, y, any as u8)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_isolation_log(
    path: &Path,
    events: &[(u32, AgentId, bool)],
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "day,agent,action")?;
    for &(day, agent, isolated) in events {
        writeln!(w, "{},{},{}", day, agent, if isolated { "isolate" } else { "release" })?;
    }
    w.flush()?;
    Ok(())
}

/// Attributed-infection ledger for debugging contact tracing.
pub fn write_contact_trace(
    path: &Path,
    trace: &crate::epidemic::ContactTraceLog,
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "day,victim,source,facility")?;
    for ev in trace.events() {
        writeln!(w, "{},{},{},{}", ev.day, ev.victim, ev.source, ev.facility)?;
    }
    w.flush()?;
    Ok(())
}
