use std::fmt::Write as _;

use clap::Args;
use serde::Serialize;
use taskcut::defaults;
use taskcut::matrix::{all_pass_rates, full_scores, PerformanceMatrix};
use taskcut::selection::{
    matched_budget, overlap_fraction, select_extreme, select_greedy, select_random,
    select_stratified, BandAttempt, Extreme, MidrangeRule, Overlap, Selection, SelectionError,
    SelectionReport, SelectionResult, Strategy,
};

use super::emit_summary;
use crate::args::{BandArgs, DataArgs};
use crate::table::{pct, Table};
use crate::{Outcome, OutputDir};

pub const SELECTION_FILE: &str = "selection.json";

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub band: BandArgs,
    /// midrange, greedy, random, easiest, hardest or stratified.
    #[arg(long, default_value = "midrange")]
    pub strategy: Strategy,
    /// Budget for non-midrange strategies; defaults to the mid-range count.
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for random and stratified.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ridge penalty used by greedy.
    #[arg(long, default_value_t = defaults::RIDGE_ALPHA)]
    pub alpha: f64,
}

/// The selection plus the mid-range/easiest comparison, when both exist.
#[derive(Debug, Serialize)]
pub struct SelectSummary {
    pub n_tasks: usize,
    pub k: usize,
    pub reduction: f64,
    pub midrange_easiest_overlap: Option<Overlap>,
}

/// Runs `strategy` on every agent of `matrix`.
pub fn select_all(
    matrix: &PerformanceMatrix,
    rule: &MidrangeRule,
    strategy: Strategy,
    k: Option<usize>,
    seed: u64,
    alpha: f64,
) -> Result<Selection, SelectionError> {
    let rates = all_pass_rates(matrix);
    let k = match (strategy, k) {
        (Strategy::Midrange, _) => return matched_budget(&rates, rule),
        (_, Some(k)) => k,
        (_, None) => matched_budget(&rates, rule)?.k(),
    };
    match strategy {
        Strategy::Midrange => unreachable!("handled above"),
        Strategy::Greedy => {
            let y = full_scores(matrix);
            Ok(select_greedy(matrix.entries(), y.values(), k, alpha)?.selection)
        }
        Strategy::Random => select_random(matrix.n_tasks(), k, seed),
        Strategy::Easiest => select_extreme(&rates, k, Extreme::Easiest),
        Strategy::Hardest => select_extreme(&rates, k, Extreme::Hardest),
        Strategy::Stratified => select_stratified(&rates, k, seed),
    }
}

pub fn band_table(attempts: &[BandAttempt], n_tasks: usize) -> String {
    let mut t = Table::new(["band", "tasks", "share"]).numeric_from(1);
    for a in attempts {
        t.row([
            a.band.to_string(),
            a.selected.to_string(),
            pct(a.selected as f64 / n_tasks as f64),
        ]);
    }
    t.render()
}

pub fn run(args: &SelectArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let matrix = args.data.load()?;
    let rule = args.band.rule()?;
    let m = matrix.n_tasks();

    let selection = match select_all(&matrix, &rule, args.strategy, args.k, args.seed, args.alpha) {
        Ok(s) => s,
        Err(SelectionError::InsufficientBand {
            attempts,
            n_tasks,
            min_fraction,
        }) => {
            let mut text = format!(
                "infeasible: fewer than {:.0}% of {n_tasks} tasks fall in any band\n\n",
                min_fraction * 100.0
            );
            text.push_str(&band_table(&attempts, n_tasks));
            emit_summary(out, "selection.txt", &text)?;
            return Ok(Outcome::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };

    let all: Vec<usize> = (0..matrix.n_agents()).collect();
    let result = SelectionResult::from_selection(&selection, &matrix, &all);
    out.write_json(
        SELECTION_FILE,
        &SelectionReport::new(result, selection.trail.clone()),
    )?;

    let rates = all_pass_rates(&matrix);
    let overlap = matched_budget(&rates, &rule).ok().and_then(|mr| {
        let easy = select_extreme(&rates, mr.k(), Extreme::Easiest).ok()?;
        Some(overlap_fraction(&mr.tasks, &easy.tasks))
    });
    let summary = SelectSummary {
        n_tasks: m,
        k: selection.k(),
        reduction: 1.0 - selection.k() as f64 / m as f64,
        midrange_easiest_overlap: overlap,
    };
    out.write_json("selection_summary.json", &summary)?;

    let mut text = String::new();
    writeln!(text, "strategy   {}", selection.strategy)?;
    writeln!(text, "tasks      {} of {m}", summary.k)?;
    writeln!(text, "reduction  {}", pct(summary.reduction))?;
    if let Some(band) = selection.band_used {
        writeln!(text, "band       {band}")?;
    }
    if let Some(seed) = selection.seed {
        writeln!(text, "seed       {seed}")?;
    }
    if let Some(o) = overlap {
        writeln!(
            text,
            "midrange/easiest overlap  {} tasks, jaccard {:.3}, of smaller set {:.3}",
            o.intersection, o.jaccard, o.min_normalized
        )?;
    }
    if selection.trail.len() > 1 {
        text.push_str("\nband fallback trail\n");
        text.push_str(&band_table(&selection.trail, m));
    }
    writeln!(text, "\nwrote {SELECTION_FILE}")?;
    emit_summary(out, "selection.txt", &text)?;
    Ok(Outcome::Success)
}
