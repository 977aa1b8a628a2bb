use clap::Args;
use taskcut::defaults;
use taskcut::protocols::Protocol;
use taskcut::selection::{DifficultyBand, MidrangeRule};
use taskcut::sensitivity::{band_sweep, write_sweep_csv};

use super::emit_summary;
use crate::args::{dataset_name, ingest_options, load, MissingArg, ModelArgs};
use crate::table::{num, pct, Table};
use crate::{Outcome, OutputDir};

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Flat CSV per benchmark, as PATH or NAME=PATH; repeat for several.
    #[arg(long, short, required = true)]
    pub input: Vec<String>,
    /// Treat `outcome` as a raw reward for every input.
    #[arg(long)]
    pub threshold_positive: bool,
    /// Agents missing any task: reject the file, or drop those agents.
    #[arg(long, value_enum, default_value = "strict")]
    pub missing: MissingArg,
    /// Protocol whose pooled rho is reported for each band.
    #[arg(long, default_value = "loao")]
    pub protocol: Protocol,
    /// Band to sweep, as LOWER,UPPER; repeat for several. Defaults to the built-in ladder.
    #[arg(long = "sweep-band")]
    pub bands: Vec<DifficultyBand>,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn run(args: &SweepArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let options = ingest_options(args.threshold_positive, args.missing);
    let mut names = Vec::new();
    let mut datasets = Vec::new();
    for raw in &args.input {
        let (name, path) = dataset_name(raw);
        datasets.push(load(&path, options)?);
        names.push(name);
    }
    let bands = if args.bands.is_empty() {
        defaults::sweep_ladder()
    } else {
        args.bands.clone()
    };
    // band_sweep replaces the rule per band; this one only fills the struct.
    let params = args.model.params(MidrangeRule::default())?;
    let report = band_sweep(&datasets, &bands, args.protocol, &params)?;

    out.write_with("sweep.csv", |buf| write_sweep_csv(&report.rows, buf))?;
    out.write_json(
        "sweep.json",
        &serde_json::json!({
            "benchmarks": names,
            "protocol": report.protocol,
            "rows": report.rows,
        }),
    )?;

    let mut t = Table::new([
        "band",
        "mean_rho",
        "rho_std",
        "reduction",
        "benchmarks",
        "skipped",
    ])
    .numeric_from(1);
    for r in &report.rows {
        t.row([
            r.band.to_string(),
            num(r.mean_rho, 3),
            num(r.rho_std, 3),
            pct(r.mean_reduction),
            r.n_benchmarks.to_string(),
            r.n_skipped.to_string(),
        ]);
    }
    let text = format!(
        "band sweep over {} benchmark(s), protocol {}\n\n{}",
        datasets.len(),
        report.protocol,
        t.render()
    );
    emit_summary(out, "sweep.txt", &text)?;
    let any = report.rows.iter().any(|r| r.n_benchmarks > 0);
    Ok(if any {
        Outcome::Success
    } else {
        Outcome::Infeasible
    })
}
