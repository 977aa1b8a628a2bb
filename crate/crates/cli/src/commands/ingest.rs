use std::fmt::Write as _;

use clap::Args;
use serde::Serialize;
use taskcut::defaults;
use taskcut::matrix::{
    all_pass_rates, avg_task_rho, full_scores, write_flat_csv, PerformanceMatrix,
};
use taskcut::selection::{decile, select_band, BandAttempt, DifficultyBand};

use super::emit_summary;
use crate::args::DataArgs;
use crate::table::{pct, Table};
use crate::{Outcome, OutputDir};

pub const MATRIX_FILE: &str = "matrix.csv";

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Band whose membership is marked in pass_rates.csv.
    #[arg(long, default_value = "0.30,0.70")]
    pub band: DifficultyBand,
}

pub fn run_ingest(args: &IngestArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let matrix = args.data.load()?;
    out.write_with(MATRIX_FILE, |buf| write_flat_csv(&matrix, buf))?;
    let mut text = String::new();
    writeln!(text, "ingested {}", args.data.input.display())?;
    writeln!(
        text,
        "{} agents x {} tasks, {} trial(s) per cell, {} scaffold(s)",
        matrix.n_agents(),
        matrix.n_tasks(),
        matrix.trials_per_cell(),
        matrix.scaffold_groups().len()
    )?;
    writeln!(text, "wrote {MATRIX_FILE}")?;
    emit_summary(out, "ingest.txt", &text)?;
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
pub struct DatasetStats {
    pub n_agents: usize,
    pub n_tasks: usize,
    pub trials_per_cell: u32,
    pub scaffolds: Vec<ScaffoldCount>,
    pub score_mean: f64,
    pub score_min: f64,
    pub score_max: f64,
    /// Task counts per pass-rate decile, [0, 0.1) ... [0.9, 1.0].
    pub pass_rate_deciles: [usize; 10],
    pub bands: Vec<BandAttempt>,
    pub avg_task_rho: Option<f64>,
    pub avg_task_rho_pairs: usize,
    pub constant_tasks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_task_rho_note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ScaffoldCount {
    pub scaffold: String,
    pub agents: usize,
}

pub fn dataset_stats(matrix: &PerformanceMatrix) -> DatasetStats {
    let scores = full_scores(matrix);
    let s = scores.values();
    let rates = all_pass_rates(matrix);
    let mut deciles = [0usize; 10];
    for &r in &rates {
        deciles[decile(r)] += 1;
    }
    let mut bands: Vec<DifficultyBand> = defaults::widening_ladder();
    bands.extend(defaults::sweep_ladder());
    bands.sort_by(|a, b| {
        a.width()
            .total_cmp(&b.width())
            .then(a.lower.total_cmp(&b.lower))
    });
    bands.dedup();
    let bands = bands
        .into_iter()
        .map(|band| BandAttempt {
            band,
            selected: select_band(&rates, band).len(),
        })
        .collect();
    let (rho, pairs, constant, note) = match avg_task_rho(matrix) {
        Ok(r) => (Some(r.mean_rho), r.pairs, r.excluded_constant, None),
        Err(e) => {
            let constant = (0..matrix.n_tasks())
                .filter(|&j| {
                    let c = matrix.column(j);
                    c.iter().all(|&v| v == c[0])
                })
                .count();
            (None, 0, constant, Some(e.to_string()))
        }
    };
    DatasetStats {
        n_agents: matrix.n_agents(),
        n_tasks: matrix.n_tasks(),
        trials_per_cell: matrix.trials_per_cell(),
        scaffolds: matrix
            .scaffold_groups()
            .into_iter()
            .map(|(scaffold, members)| ScaffoldCount {
                scaffold,
                agents: members.len(),
            })
            .collect(),
        score_mean: s.iter().sum::<f64>() / s.len() as f64,
        score_min: s.iter().copied().fold(f64::INFINITY, f64::min),
        score_max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        pass_rate_deciles: deciles,
        bands,
        avg_task_rho: rho,
        avg_task_rho_pairs: pairs,
        constant_tasks: constant,
        avg_task_rho_note: note,
    }
}

pub fn run_stats(args: &StatsArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let matrix = args.data.load()?;
    let stats = dataset_stats(&matrix);
    out.write_json("stats.json", &stats)?;

    let rates = all_pass_rates(&matrix);
    out.write_with("pass_rates.csv", |buf| -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["task_id", "pass_rate", "decile", "in_band"])?;
        for (task, &r) in matrix.tasks().iter().zip(&rates) {
            w.write_record([
                task.task_id.clone(),
                format!("{r:.6}"),
                decile(r).to_string(),
                u8::from(args.band.contains(r)).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let mut text = String::new();
    writeln!(
        text,
        "{} agents x {} tasks, {} trial(s) per cell",
        stats.n_agents, stats.n_tasks, stats.trials_per_cell
    )?;
    writeln!(
        text,
        "score mean {:.4}, min {:.4}, max {:.4}",
        stats.score_mean, stats.score_min, stats.score_max
    )?;
    match stats.avg_task_rho {
        Some(r) => writeln!(
            text,
            "avg task rho {r:.4} over {} pairs ({} constant tasks excluded)",
            stats.avg_task_rho_pairs, stats.constant_tasks
        )?,
        None => writeln!(
            text,
            "avg task rho NA: {}",
            stats.avg_task_rho_note.as_deref().unwrap_or("undefined")
        )?,
    }
    text.push('\n');
    let mut sc = Table::new(["scaffold", "agents"]).numeric_from(1);
    for s in &stats.scaffolds {
        sc.row([s.scaffold.clone(), s.agents.to_string()]);
    }
    text.push_str(&sc.render());
    text.push('\n');
    let mut bt = Table::new(["band", "tasks", "share"]).numeric_from(1);
    for b in &stats.bands {
        bt.row([
            b.band.to_string(),
            b.selected.to_string(),
            pct(b.selected as f64 / stats.n_tasks as f64),
        ]);
    }
    text.push_str(&bt.render());
    text.push('\n');
    let mut dt = Table::new(["pass_rate", "tasks"]).numeric_from(1);
    for (d, &count) in stats.pass_rate_deciles.iter().enumerate() {
        let hi = if d == 9 {
            "1.0]".to_string()
        } else {
            format!("{:.1})", (d + 1) as f64 / 10.0)
        };
        dt.row([format!("[{:.1}, {hi}", d as f64 / 10.0), count.to_string()]);
    }
    text.push_str(&dt.render());
    emit_summary(out, "stats.txt", &text)?;
    Ok(Outcome::Success)
}
