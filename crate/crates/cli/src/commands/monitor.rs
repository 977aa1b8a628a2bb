use std::fmt::{self, Write as _};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use ndarray::{concatenate, Axis};
use serde::Serialize;
use taskcut::defaults;
use taskcut::matrix::{full_scores, write_flat_csv, PerformanceMatrix, TaskRecord};
use taskcut::metrics::spearman_rho;
use taskcut::ridge::{fit_ridge, loo_predictions, predict};

use super::emit_summary;
use super::report::{read_selection, subset_columns};
use crate::args::{load, DataArgs};
use crate::table::num;
use crate::{Outcome, OutputDir};

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Historical full-benchmark results the subset was selected on.
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub selection: PathBuf,
    /// New agents' runs on (at least) the selected tasks.
    #[arg(long)]
    pub new: PathBuf,
    /// Full-benchmark runs used to check the reduced ranking.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Agents already added since the last ridge fit, before this batch.
    #[arg(long, default_value_t = 0)]
    pub since_refit: usize,
    #[arg(long, default_value_t = defaults::REFIT_EVERY)]
    pub refit_every: usize,
    #[arg(long, default_value_t = defaults::RESELECT_RHO)]
    pub reselect_rho: f64,
    #[arg(long, default_value_t = defaults::RIDGE_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Advice {
    Keep,
    Reselect,
    Refit,
}

impl fmt::Display for Advice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Advice::Keep => "KEEP",
            Advice::Reselect => "RESELECT",
            Advice::Refit => "REFIT",
        })
    }
}

/// RESELECT when the validated rho is below `threshold`, KEEP when it is at
/// or above; nothing when there is no validation. REFIT once
/// `agents_since_refit` reaches `refit_every`.
pub fn advise(
    rho: Option<f64>,
    threshold: f64,
    agents_since_refit: usize,
    refit_every: usize,
) -> Vec<Advice> {
    let mut advice = Vec::new();
    match rho {
        Some(r) if r < threshold => advice.push(Advice::Reselect),
        Some(_) => advice.push(Advice::Keep),
        None => {}
    }
    if refit_every > 0 && agents_since_refit >= refit_every {
        advice.push(Advice::Refit);
    }
    advice
}

#[derive(Debug, Serialize)]
pub struct MonitorReport {
    pub new_agents: usize,
    pub agents_since_refit: usize,
    pub validation_agents: usize,
    pub validation_rho: Option<f64>,
    pub reselect_below: f64,
    pub refit_every: usize,
    pub advice: Vec<Advice>,
}

/// Historical agents restricted to the selected tasks, then the new agents.
fn append_subset(
    history: &PerformanceMatrix,
    new: &PerformanceMatrix,
    selection: &taskcut::selection::SelectionResult,
) -> anyhow::Result<PerformanceMatrix> {
    for a in new.agents() {
        anyhow::ensure!(
            history.agent_index(&a.agent_id).is_none(),
            "new agent {:?} already exists in the history",
            a.agent_id
        );
    }
    let old = subset_columns(history, selection)?;
    let fresh =
        subset_columns(new, selection).context("new runs must cover every selected task")?;
    let entries = concatenate(Axis(0), &[old.view(), fresh.view()])?;
    let agents = history
        .agents()
        .iter()
        .chain(new.agents())
        .cloned()
        .collect();
    let tasks = selection
        .task_ids
        .iter()
        .map(|id| TaskRecord {
            task_id: id.clone(),
        })
        .collect();
    let trials = history.trials_per_cell().max(new.trials_per_cell());
    Ok(PerformanceMatrix::new(entries, agents, tasks, trials)?)
}

/// Spearman rho between ridge-predicted and full scores over every agent
/// with full data: historical agents get leave-one-out predictions, and
/// validation agents not in the history are predicted by the full fit.
fn validation_rho(
    history: &PerformanceMatrix,
    validation: &PerformanceMatrix,
    selection: &taskcut::selection::SelectionResult,
    alpha: f64,
) -> anyhow::Result<(usize, Option<f64>)> {
    let x = subset_columns(history, selection)?;
    let y = full_scores(history);
    let mut predicted = loo_predictions(x.view(), y.values(), alpha)?;
    let mut actual = y.values().to_vec();

    let fresh: Vec<usize> = (0..validation.n_agents())
        .filter(|&i| {
            history
                .agent_index(&validation.agents()[i].agent_id)
                .is_none()
        })
        .collect();
    let xv = subset_columns(validation, selection)
        .context("validation runs must cover every selected task")?;
    let fit = fit_ridge(x.view(), y.values(), alpha)?;
    let pv = predict(&fit, xv.view())?;
    let yv = full_scores(validation);
    for &i in &fresh {
        predicted.push(pv[i]);
        actual.push(yv.values()[i]);
    }
    Ok((fresh.len(), spearman_rho(&predicted, &actual)?))
}

pub fn run(args: &MonitorArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let history = args.data.load()?;
    let selection = read_selection(&args.selection)?;
    let new = load(&args.new, args.data.options())?;
    let merged = append_subset(&history, &new, &selection)?;
    out.write_with("subset_history.csv", |buf| write_flat_csv(&merged, buf))?;

    let (validation_agents, rho) = match &args.validation {
        Some(path) => {
            let v = load(path, args.data.options())?;
            validation_rho(&history, &v, &selection, args.alpha)?
        }
        None => (0, None),
    };
    let since = args.since_refit + new.n_agents();
    let report = MonitorReport {
        new_agents: new.n_agents(),
        agents_since_refit: since,
        validation_agents,
        validation_rho: rho,
        reselect_below: args.reselect_rho,
        refit_every: args.refit_every,
        advice: advise(rho, args.reselect_rho, since, args.refit_every),
    };
    out.write_json("monitor.json", &report)?;

    let mut text = String::new();
    writeln!(
        text,
        "appended {} new agent(s); {} since the last refit",
        report.new_agents, since
    )?;
    match (&args.validation, rho) {
        (None, _) => writeln!(text, "no validation runs supplied; ranking not checked")?,
        (Some(_), r) => writeln!(
            text,
            "validation rho {} over {} historical + {} new agent(s) (reselect below {})",
            num(r, 3),
            history.n_agents(),
            validation_agents,
            args.reselect_rho
        )?,
    }
    let advice: Vec<String> = report.advice.iter().map(ToString::to_string).collect();
    writeln!(
        text,
        "advice: {}",
        if advice.is_empty() {
            "none".to_string()
        } else {
            advice.join(" ")
        }
    )?;
    emit_summary(out, "monitor.txt", &text)?;
    Ok(Outcome::Success)
}
