use std::fmt::Write as _;

use clap::Args;
use serde::Serialize;
use taskcut::defaults;
use taskcut::matrix::PerformanceMatrix;
use taskcut::metrics::Metric;
use taskcut::protocols::{
    divergence_summary, format_value, meta_bootstrap, run_grid, strategy_summary,
    write_results_csv, BenchmarkCell, DivergenceRow, GridCell, Protocol, ProtocolParams,
    StrategyRow, INFEASIBLE_MARK,
};
use taskcut::selection::Strategy;

use super::emit_summary;
use crate::args::{dataset_name, ingest_options, load, MissingArg, ParamArgs};
use crate::table::{num, Table};
use crate::{Outcome, OutputDir};

pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Flat CSV per benchmark, as PATH or NAME=PATH; repeat for several.
    #[arg(long, short, required = true)]
    pub input: Vec<String>,
    /// Treat `outcome` as a raw reward for every input.
    #[arg(long)]
    pub threshold_positive: bool,
    /// Agents missing any task: reject the file, or drop those agents.
    #[arg(long, value_enum, default_value = "strict")]
    pub missing: MissingArg,
    /// Comma-separated protocols.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "loao,within_scaffold_loao,random_split,loso,temporal"
    )]
    pub protocols: Vec<Protocol>,
    /// Comma-separated strategies.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "midrange,greedy,random,easiest,hardest,stratified"
    )]
    pub strategies: Vec<Strategy>,
    #[command(flatten)]
    pub params: ParamArgs,
}

/// The grid for one benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRun {
    pub benchmark: String,
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetaBootstrapRow {
    pub benchmark: String,
    pub protocol: Protocol,
    pub metric: Metric,
    pub n_seeds: usize,
    pub var_of_mean: f64,
    pub var_of_std: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapRow {
    pub benchmark: String,
    #[serde(flatten)]
    pub row: StrategyRow,
}

pub fn evaluate(
    datasets: &[(String, PerformanceMatrix)],
    protocols: &[Protocol],
    strategies: &[Strategy],
    params: &ProtocolParams,
) -> anyhow::Result<Vec<BenchmarkRun>> {
    datasets
        .iter()
        .map(|(name, m)| {
            Ok(BenchmarkRun {
                benchmark: name.clone(),
                cells: run_grid(m, protocols, strategies, params)?,
            })
        })
        .collect()
}

pub fn meta_bootstrap_rows(runs: &[BenchmarkRun]) -> anyhow::Result<Vec<MetaBootstrapRow>> {
    let mut rows = Vec::new();
    for run in runs {
        for r in run.cells.iter().filter_map(GridCell::result) {
            let Some(summary) = &r.seed_summary else {
                continue;
            };
            for metric in Metric::ALL {
                let values = summary.values(metric);
                if values.is_empty() {
                    continue;
                }
                let mb = meta_bootstrap(
                    &values,
                    defaults::META_BOOTSTRAP_RESAMPLES,
                    defaults::META_BOOTSTRAP_SEED,
                )?;
                rows.push(MetaBootstrapRow {
                    benchmark: run.benchmark.clone(),
                    protocol: r.protocol,
                    metric,
                    n_seeds: values.len(),
                    var_of_mean: mb.var_of_mean,
                    var_of_std: mb.var_of_std,
                    passes: mb.passes(defaults::META_BOOTSTRAP_THRESHOLD),
                });
            }
        }
    }
    Ok(rows)
}

pub fn heatmap_rows(runs: &[BenchmarkRun]) -> Vec<HeatmapRow> {
    runs.iter()
        .flat_map(|run| {
            let results: Vec<_> = run.cells.iter().filter_map(GridCell::result).collect();
            strategy_summary(&results)
                .into_iter()
                .map(|row| HeatmapRow {
                    benchmark: run.benchmark.clone(),
                    row,
                })
        })
        .collect()
}

pub fn divergence_rows(runs: &[BenchmarkRun]) -> Vec<DivergenceRow> {
    let cells: Vec<BenchmarkCell> = runs
        .iter()
        .flat_map(|run| {
            run.cells.iter().filter_map(|c| {
                c.result().map(|result| BenchmarkCell {
                    benchmark: &run.benchmark,
                    result,
                })
            })
        })
        .collect();
    divergence_summary(&cells)
}

fn csv_bytes(
    fill: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
) -> csv::Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

pub fn divergence_csv(rows: &[DivergenceRow]) -> csv::Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record([
            "grouping",
            "protocol",
            "metric",
            "best",
            "avg",
            "n_benchmarks",
            "n_cells",
            "n_undefined",
        ])?;
        for r in rows {
            w.write_record([
                r.grouping.name().to_string(),
                r.protocol.name().to_string(),
                r.metric.name().to_string(),
                format_value(r.best),
                format_value(r.avg),
                r.n_benchmarks.to_string(),
                r.n_cells.to_string(),
                r.n_undefined.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn heatmap_csv(rows: &[HeatmapRow]) -> csv::Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record([
            "benchmark",
            "strategy",
            "mean_rho",
            "best_rho",
            "worst_rho",
            "n_protocols",
        ])?;
        for h in rows {
            w.write_record([
                h.benchmark.clone(),
                h.row.strategy.name().to_string(),
                format_value(h.row.mean_rho),
                format_value(h.row.best_rho),
                format_value(h.row.worst_rho),
                h.row.n_protocols.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn meta_bootstrap_csv(rows: &[MetaBootstrapRow]) -> csv::Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record([
            "benchmark",
            "protocol",
            "metric",
            "n_seeds",
            "var_of_mean",
            "var_of_std",
            "passes",
        ])?;
        for r in rows {
            w.write_record([
                r.benchmark.clone(),
                r.protocol.name().to_string(),
                r.metric.name().to_string(),
                r.n_seeds.to_string(),
                format!("{:.3e}", r.var_of_mean),
                format!("{:.3e}", r.var_of_std),
                r.passes.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Protocol rows by strategy columns of pooled rho; random shows mean±std.
fn rho_grid(run: &BenchmarkRun, protocols: &[Protocol], strategies: &[Strategy]) -> String {
    let mut header = vec!["protocol".to_string()];
    header.extend(strategies.iter().map(|s| s.name().to_string()));
    let mut t = Table::new(header).numeric_from(1);
    for &p in protocols {
        let mut row = vec![p.name().to_string()];
        for &s in strategies {
            let cell = run
                .cells
                .iter()
                .find(|c| c.protocol() == p && c.strategy() == s);
            row.push(match cell.and_then(GridCell::result) {
                None => INFEASIBLE_MARK.to_string(),
                Some(r) => match r.seed_summary.as_ref().and_then(|ss| ss.spearman_rho) {
                    Some(st) => format!("{:.3}±{:.3}", st.mean, st.std),
                    None => num(r.pooled.spearman_rho, 3),
                },
            });
        }
        t.row(row);
    }
    t.render()
}

pub fn run(args: &EvaluateArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let params = args.params.params()?;
    let options = ingest_options(args.threshold_positive, args.missing);
    let mut datasets = Vec::new();
    for raw in &args.input {
        let (name, path) = dataset_name(raw);
        anyhow::ensure!(
            datasets.iter().all(|(n, _): &(String, _)| *n != name),
            "duplicate benchmark name {name:?}"
        );
        datasets.push((name, load(&path, options)?));
    }

    let runs = evaluate(&datasets, &args.protocols, &args.strategies, &params)?;
    for run in &runs {
        out.write_with(&format!("{}/{RESULTS_FILE}", run.benchmark), |buf| {
            write_results_csv(&run.cells, buf)
        })?;
        out.write_json(&format!("{}/detail.json", run.benchmark), &run.cells)?;
    }
    let divergence = divergence_rows(&runs);
    let heatmap = heatmap_rows(&runs);
    let meta = meta_bootstrap_rows(&runs)?;
    out.write_bytes("divergence.csv", &divergence_csv(&divergence)?)?;
    out.write_bytes("heatmap.csv", &heatmap_csv(&heatmap)?)?;
    out.write_bytes("meta_bootstrap.csv", &meta_bootstrap_csv(&meta)?)?;
    out.write_json("params.json", &params)?;

    let mut text = String::new();
    for run in &runs {
        writeln!(text, "== {} (Spearman rho, pooled)", run.benchmark)?;
        text.push_str(&rho_grid(run, &args.protocols, &args.strategies));
        for cell in &run.cells {
            if let GridCell::Infeasible {
                protocol,
                strategy,
                reason,
            } = cell
            {
                writeln!(text, "{INFEASIBLE_MARK} {protocol} / {strategy}: {reason}")?;
            }
        }
        text.push('\n');
    }
    let mut dt = Table::new(["grouping", "protocol", "metric", "best", "avg"]).numeric_from(3);
    for r in &divergence {
        dt.row([
            r.grouping.name().to_string(),
            r.protocol.name().to_string(),
            r.metric.name().to_string(),
            num(r.best, 3),
            num(r.avg, 3),
        ]);
    }
    if !dt.is_empty() {
        text.push_str("== divergence: best vs average strategy\n");
        text.push_str(&dt.render());
    }
    let failing = meta.iter().filter(|r| !r.passes).count();
    if !meta.is_empty() {
        writeln!(
            text,
            "\nmeta-bootstrap: {} of {} random-strategy summaries below {:e}",
            meta.len() - failing,
            meta.len(),
            defaults::META_BOOTSTRAP_THRESHOLD
        )?;
    }
    emit_summary(out, "summary.txt", &text)?;

    let any_done = runs
        .iter()
        .flat_map(|r| &r.cells)
        .any(|c| c.result().is_some());
    Ok(if any_done {
        Outcome::Success
    } else {
        Outcome::Infeasible
    })
}
