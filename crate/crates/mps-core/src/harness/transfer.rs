//! Policy transfer: fine-tune a checkpoint under a new scenario and report
//! its curve beside a from-scratch baseline of equal episode budget.

use std::path::Path;

use serde::Serialize;

use super::{run_scenario, run_scenario_with_init, HarnessError, RunReport, ScenarioConfig};

#[derive(Debug, Serialize)]
pub struct TransferReport {
    pub finetune_episodes: u32,
    /// Daily new-case curve after fine-tuning (averaged window).
    pub finetuned_daily_cases: Vec<f64>,
    /// Same-budget from-scratch baseline curve.
    pub scratch_daily_cases: Vec<f64>,
}

/// L1 distance between two daily curves over an inclusive day range.
pub fn curve_l1_distance(a: &[f64], b: &[f64], day_lo: usize, day_hi: usize) -> f64 {
    let hi = day_hi.min(a.len().saturating_sub(1)).min(b.len().saturating_sub(1));
    let mut total = 0.0;
    for d in day_lo..=hi {
        total += (a[d] - b[d]).abs();
    }
    total
}

/// Loads `base_checkpoint`, fine-tunes for `finetune_episodes` under
/// `config`, and trains an equal-budget from-scratch baseline.
pub fn transfer_run(
    base_checkpoint: &Path,
    config: &ScenarioConfig,
    finetune_episodes: u32,
) -> Result<(TransferReport, RunReport, RunReport), HarnessError> {
    let mut fine_cfg = config.clone();
    fine_cfg.train.episodes = finetune_episodes;
    fine_cfg.output_dir = config.output_dir.join("finetune");
    let finetuned = if finetune_episodes == 0 {
        // Pure evaluation of the transferred policy.
        super::run_eval(&fine_cfg, Some(base_checkpoint), 1)?
    } else {
        run_scenario_with_init(&fine_cfg, Some(base_checkpoint))?
    };

    let mut scratch_cfg = config.clone();
    scratch_cfg.train.episodes = finetune_episodes.max(1);
    scratch_cfg.output_dir = config.output_dir.join("scratch");
    let scratch = run_scenario(&scratch_cfg)?;

    let report = TransferReport {
        finetune_episodes,
        finetuned_daily_cases: finetuned.averaged.iter().map(|r| r.new_cases).collect(),
        scratch_daily_cases: scratch.averaged.iter().map(|r| r.new_cases).collect(),
    };
    std::fs::create_dir_all(&config.output_dir)?;
    let f = std::fs::File::create(config.output_dir.join("transfer_report.json"))?;
    serde_json::to_writer_pretty(f, &report)?;
    Ok((report, finetuned, scratch))
}
