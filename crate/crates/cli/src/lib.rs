//! Command-line front end.
//!
//! Every command reads its inputs, writes deterministic files into the output
//! directory, and prints an aligned-text summary. The only nondeterministic
//! file is `run_meta.json`, which carries the timestamp.

mod args;
pub mod commands;
mod output;
pub mod table;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

pub use args::{BandArgs, DataArgs, ModelArgs, ParamArgs};
pub use output::OutputDir;

/// Environment variable that sets the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TASKCUT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "taskcut-out";

#[derive(Debug, Parser)]
#[command(
    name = "taskcut",
    version,
    about = "Select small, rank-preserving task subsets for agent benchmarks"
)]
pub struct Cli {
    /// Directory for every file a command writes.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = DEFAULT_OUTPUT_DIR)]
    pub out_dir: PathBuf,

    /// Worker threads for fold and seed execution (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Print every default constant as JSON and exit.
    #[arg(long)]
    pub print_defaults: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a flat CSV and write the normalized matrix.
    Ingest(commands::ingest::IngestArgs),
    /// Dataset statistics: scores, pass-rate distribution, band counts, task correlation.
    Stats(commands::ingest::StatsArgs),
    /// Choose a task subset with one strategy.
    Select(commands::select::SelectArgs),
    /// Run the protocol × strategy grid.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Sweep fixed mid-range bands across datasets.
    Sweep(commands::sweep::SweepArgs),
    /// Generate a synthetic 2PL population with scaffold shifts.
    Simulate(commands::simulate::SimulateArgs),
    /// Per-run savings of a reduced suite.
    Cost(commands::cost::CostArgs),
    /// Predict full-benchmark scores from subset results, with bootstrap intervals.
    Report(commands::report::ReportArgs),
    /// Check a deployed subset against new runs and advise KEEP, RESELECT, or REFIT.
    Monitor(commands::monitor::MonitorArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Stats(_) => "stats",
            Command::Select(_) => "select",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::Simulate(_) => "simulate",
            Command::Cost(_) => "cost",
            Command::Report(_) => "report",
            Command::Monitor(_) => "monitor",
        }
    }
}

/// How a command finished. Errors are reported separately through `anyhow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Valid input that cannot be served, such as a band with too few tasks.
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Infeasible => 2,
        }
    }
}

pub const EXIT_ERROR: i32 = 1;

pub fn run(cli: Cli, argv: &[String]) -> anyhow::Result<Outcome> {
    if cli.print_defaults {
        let text = serde_json::to_string_pretty(&taskcut::defaults::defaults())? + "\n";
        commands::print_stdout(&text)?;
        return Ok(Outcome::Success);
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no command given; run with --help");
    };
    let out = OutputDir::create(&cli.out_dir)?;
    out.write_run_meta(command.name(), argv, cli.jobs)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("building worker pool")?;
    pool.install(|| match command {
        Command::Ingest(a) => commands::ingest::run_ingest(&a, &out),
        Command::Stats(a) => commands::ingest::run_stats(&a, &out),
        Command::Select(a) => commands::select::run(&a, &out),
        Command::Evaluate(a) => commands::evaluate::run(&a, &out),
        Command::Sweep(a) => commands::sweep::run(&a, &out),
        Command::Simulate(a) => commands::simulate::run(&a, &out),
        Command::Cost(a) => commands::cost::run(&a, &out),
        Command::Report(a) => commands::report::run(&a, &out),
        Command::Monitor(a) => commands::monitor::run(&a, &out),
    })
}

/// Parses `args`, runs, and maps the result to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let printable: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(cli, &printable) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
