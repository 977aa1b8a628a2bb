use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use taskcut::cost::{
    builtin_cost_models, estimate_savings, find_model, load_cost_csv, write_savings_csv, CostModel,
};
use taskcut::selection::SelectionReport;

use super::emit_summary;
use crate::table::{pct, Table};
use crate::{Outcome, OutputDir};

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Cost table (benchmark,n_tasks,median_cost,min_cost,max_cost); defaults to the built-in table.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Reduced-suite size per benchmark, as NAME=K; repeat for several.
    #[arg(long = "budget")]
    pub budgets: Vec<String>,
    /// Take K from a selection file instead; needs --benchmark.
    #[arg(long, requires = "benchmark")]
    pub selection: Option<PathBuf>,
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Print the cost table and exit.
    #[arg(long)]
    pub list: bool,
}

fn parse_budget(raw: &str) -> anyhow::Result<(String, usize)> {
    let (name, k) = raw
        .split_once('=')
        .with_context(|| format!("budget {raw:?} must look like NAME=K"))?;
    let k = k
        .trim()
        .parse()
        .with_context(|| format!("budget {raw:?}: K is not an integer"))?;
    Ok((name.trim().to_string(), k))
}

fn cost_table(models: &[CostModel]) -> String {
    let mut t = Table::new(["benchmark", "n_tasks", "median", "min", "max"]).numeric_from(1);
    for m in models {
        t.row([
            m.benchmark.clone(),
            m.n_tasks_full.to_string(),
            format!("${}", m.median_cost_per_run),
            format!("${}", m.cost_per_run_range.0),
            format!("${}", m.cost_per_run_range.1),
        ]);
    }
    t.render()
}

pub fn run(args: &CostArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let models = match &args.costs {
        Some(path) => load_cost_csv(path).with_context(|| format!("loading {}", path.display()))?,
        None => builtin_cost_models(),
    };
    if args.list {
        emit_summary(out, "costs.txt", &cost_table(&models))?;
        return Ok(Outcome::Success);
    }

    let mut budgets: Vec<(String, usize)> = args
        .budgets
        .iter()
        .map(|b| parse_budget(b))
        .collect::<Result<_, _>>()?;
    if let Some(path) = &args.selection {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: SelectionReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let name = args.benchmark.clone().expect("clap enforces --benchmark");
        budgets.push((name, report.result.budget_k));
    }
    anyhow::ensure!(
        !budgets.is_empty(),
        "give at least one --budget NAME=K, a --selection, or --list"
    );

    let savings = budgets
        .iter()
        .map(|(name, k)| Ok(estimate_savings(find_model(&models, name)?, *k)?))
        .collect::<anyhow::Result<Vec<_>>>()?;
    out.write_with("savings.csv", |buf| write_savings_csv(&savings, buf))?;

    let mut t = Table::new([
        "benchmark",
        "k",
        "n_tasks",
        "reduction",
        "median_saving",
        "range",
    ])
    .numeric_from(1);
    for s in &savings {
        t.row([
            s.benchmark.clone(),
            s.k.to_string(),
            s.n_tasks.to_string(),
            pct(s.reduction),
            format!("${}", s.median),
            format!("${} to ${}", s.range.0, s.range.1),
        ]);
    }
    let text = format!("per-run savings, linear in task count\n\n{}", t.render());
    emit_summary(out, "savings.txt", &text)?;
    Ok(Outcome::Success)
}
