use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use taskcut::matrix::write_flat_csv;
use taskcut::synthetic::{
    reference_population, simulate_scaffold_population, IrtConfig, ShiftConfig,
};

use super::emit_summary;
use crate::{Outcome, OutputDir};

pub const SIM_MATRIX_FILE: &str = "synthetic.csv";
pub const SIM_LATENT_FILE: &str = "synthetic.latent.json";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON file with `irt` and `shifts`; defaults to the built-in reference population.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub trials: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// One scaffold group with no distortion.
    #[arg(long)]
    pub no_shift: bool,
}

/// The simulate config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub irt: IrtConfig,
    #[serde(default)]
    pub shifts: Vec<ShiftConfig>,
}

impl SimulationConfig {
    pub fn reference() -> Self {
        let (irt, shifts) = reference_population();
        Self { irt, shifts }
    }
}

pub fn run(args: &SimulateArgs, out: &OutputDir) -> anyhow::Result<Outcome> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SimulationConfig::reference(),
    };
    if let Some(n) = args.agents {
        cfg.irt.n_agents = n;
    }
    if let Some(m) = args.tasks {
        cfg.irt.n_tasks = m;
    }
    if let Some(t) = args.trials {
        cfg.irt.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.irt.seed = s;
    }
    if args.no_shift || cfg.shifts.is_empty() {
        cfg.shifts = vec![ShiftConfig::identity()];
    }
    let data = simulate_scaffold_population(&cfg.irt, &cfg.shifts)?;
    out.write_with(SIM_MATRIX_FILE, |buf| write_flat_csv(&data.matrix, buf))?;
    out.write_json(SIM_LATENT_FILE, &data.latent)?;
    let text = format!(
        "simulated {} agents x {} tasks, {} trial(s), {} scaffold group(s), seed {}\nwrote {SIM_MATRIX_FILE} and {SIM_LATENT_FILE}\n",
        cfg.irt.n_agents,
        cfg.irt.n_tasks,
        cfg.irt.trials,
        cfg.shifts.len(),
        cfg.irt.seed
    );
    emit_summary(out, "simulate.txt", &text)?;
    Ok(Outcome::Success)
}
