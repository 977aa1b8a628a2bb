use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use ndarray::Array2;
use serde::Serialize;
use taskcut::defaults;
use taskcut::matrix::{full_scores, row_means, PerformanceMatrix};
use taskcut::ridge::bootstrap_intervals;
use taskcut::selection::{SelectionReport, SelectionResult};

use super::emit_summary;
use crate::args::{load, DataArgs};
use crate::table::{num, Table};
use crate::{Outcome, OutputDir};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Historical full-benchmark results.
    #[command(flatten)]
    pub data: DataArgs,
    /// Selection file written by `select`.
    #[arg(long)]
    pub selection: PathBuf,
    /// Runs of new agents on (at least) the selected tasks; omit to report the historical agents.
    #[arg(long)]
    pub new: Option<PathBuf>,
    #[arg(long, default_value_t = defaults::RIDGE_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = defaults::PREDICTION_BOOTSTRAP_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, default_value_t = defaults::PREDICTION_INTERVAL_LEVEL)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub agent_id: String,
    pub predicted: f64,
    pub lower: f64,
    pub upper: f64,
    pub subset_mean: f64,
    /// Full-benchmark score, known only for historical agents.
    pub actual: Option<f64>,
}

pub fn read_selection(path: &Path) -> anyhow::Result<SelectionResult> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: SelectionReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    report.result.validate()?;
    Ok(report.result)
}

/// Columns of `matrix` for the selected task ids, in selection order.
pub fn subset_columns(
    matrix: &PerformanceMatrix,
    selection: &SelectionResult,
) -> anyhow::Result<Array2<f64>> {
    let cols = selection.task_indices(matrix)?;
    let rows: Vec<usize> = (0..matrix.n_agents()).collect();
    Ok(matrix.submatrix(&rows, &cols))
}

/// Ridge penalty and bootstrap settings for prediction intervals.
#[derive(Debug, Clone, Copy)]
pub struct IntervalSettings {
    pub alpha: f64,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for IntervalSettings {
    fn default() -> Self {
        Self {
            alpha: defaults::RIDGE_ALPHA,
            resamples: defaults::PREDICTION_BOOTSTRAP_RESAMPLES,
            level: defaults::PREDICTION_INTERVAL_LEVEL,
            seed: 0,
        }
    }
}

/// Predictions for `targets`; `known` adds their full scores as `actual`.
pub fn predictions(
    history: &PerformanceMatrix,
    selection: &SelectionResult,
    targets: &PerformanceMatrix,
    known: bool,
    settings: IntervalSettings,
) -> anyhow::Result<Vec<PredictionRow>> {
    let IntervalSettings {
        alpha,
        resamples,
        level,
        seed,
    } = settings;
    let x = subset_columns(history, selection)?;
    let y = full_scores(history);
    let x_new =
        subset_columns(targets, selection).context("new runs must cover every selected task")?;
    let intervals = bootstrap_intervals(
        x.view(),
        y.values(),
        x_new.view(),
        alpha,
        resamples,
        level,
        seed,
    )?;
    let means = row_means(x_new.view());
    let actual = known.then(|| full_scores(targets));
    Ok(targets
        .agents()
        .iter()
        .enumerate()
        .map(|(i, a)| PredictionRow {
            agent_id: a.agent_id.clone(),
            predicted: intervals[i].point,
            lower: intervals[i].lower,
            upper: intervals[i].upper,
            subset_mean: means[i],
            actual: actual.as_ref().map(|s| s.values()[i]),
        })
        .collect())
}

pub fn run(args: &ReportArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let history = args.data.load()?;
    let selection = read_selection(&args.selection)?;
    let (targets, known) = match &args.new {
        Some(path) => (load(path, args.data.options())?, false),
        None => (history.clone(), true),
    };
    let settings = IntervalSettings {
        alpha: args.alpha,
        resamples: args.resamples,
        level: args.level,
        seed: args.seed,
    };
    let rows = predictions(&history, &selection, &targets, known, settings)?;

    out.write_with("predictions.csv", |buf| -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "agent_id",
            "predicted",
            "lower",
            "upper",
            "subset_mean",
            "actual",
        ])?;
        for r in &rows {
            w.write_record([
                r.agent_id.clone(),
                format!("{:.6}", r.predicted),
                format!("{:.6}", r.lower),
                format!("{:.6}", r.upper),
                format!("{:.6}", r.subset_mean),
                num(r.actual, 6),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[b]
            .predicted
            .total_cmp(&rows[a].predicted)
            .then(a.cmp(&b))
    });
    let mut t = Table::new([
        "rank",
        "agent",
        "predicted",
        "interval",
        "subset_mean",
        "actual",
    ])
    .numeric_from(2);
    for (rank, &i) in order.iter().enumerate() {
        let r = &rows[i];
        t.row([
            (rank + 1).to_string(),
            r.agent_id.clone(),
            format!("{:.3}", r.predicted),
            format!("[{:.3}, {:.3}]", r.lower, r.upper),
            format!("{:.3}", r.subset_mean),
            num(r.actual, 3),
        ]);
    }
    let text = format!(
        "predicted full-benchmark scores from {} selected tasks, {:.0}% bootstrap intervals ({} resamples)\n\n{}",
        selection.budget_k,
        args.level * 100.0,
        args.resamples,
        t.render()
    );
    emit_summary(out, "predictions.txt", &text)?;
    Ok(Outcome::Success)
}
