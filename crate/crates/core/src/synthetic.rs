//! Synthetic leaderboards from a two-parameter logistic IRT model.
//!
//! Agent i solves task j with probability `logistic(a_j (θ_i − b_j))`. Each
//! cell is the fraction of `trials` Bernoulli draws that succeed. Scaffold
//! populations distort abilities with an affine map `θ' = scale·θ + offset + ε`
//! before responses are drawn, so the latent ordering is known exactly.
//!
//! Randomness is addressed by counter: parameters, shift noise, and every
//! matrix cell draw from their own substream of the configured seed.

use chrono::NaiveDate;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{AgentRecord, MatrixError, PerformanceMatrix, TaskRecord};
use crate::rng;

const ABILITY_STREAM: u64 = 0;
const DIFFICULTY_STREAM: u64 = 1;
const DISCRIMINATION_STREAM: u64 = 2;
const CELL_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtConfig {
    pub n_agents: usize,
    pub n_tasks: usize,
    pub ability_mean: f64,
    pub ability_std: f64,
    pub difficulty_mean: f64,
    pub difficulty_std: f64,
    pub discrimination_low: f64,
    pub discrimination_high: f64,
    pub trials: u32,
    pub seed: u64,
}

impl Default for IrtConfig {
    fn default() -> Self {
        Self {
            n_agents: 40,
            n_tasks: 100,
            ability_mean: 0.0,
            ability_std: 1.0,
            difficulty_mean: 0.0,
            difficulty_std: 1.5,
            discrimination_low: 0.5,
            discrimination_high: 2.0,
            trials: 1,
            seed: 0,
        }
    }
}

impl IrtConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |msg: &str| Err(SyntheticError::Config(msg.to_string()));
        if self.n_agents == 0 || self.n_tasks == 0 {
            return bad("n_agents and n_tasks must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        if !(self.ability_std >= 0.0 && self.difficulty_std >= 0.0) {
            return bad("standard deviations must be nonnegative");
        }
        if !(self.discrimination_low > 0.0 && self.discrimination_low <= self.discrimination_high) {
            return bad("need 0 < discrimination_low <= discrimination_high");
        }
        if ![
            self.ability_mean,
            self.difficulty_mean,
            self.discrimination_high,
        ]
        .iter()
        .all(|v| v.is_finite())
        {
            return bad("parameters must be finite");
        }
        Ok(())
    }
}

/// Affine distortion `scale·x + offset + N(0, noise_std²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub scale: f64,
    pub offset: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl ShiftConfig {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }

    /// Rank preservation only holds for positive scale.
    pub fn is_monotone(&self) -> bool {
        self.scale > 0.0
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        if self.scale == 0.0 || !self.scale.is_finite() || !self.offset.is_finite() {
            return Err(SyntheticError::Config(
                "shift scale must be finite and nonzero".into(),
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SyntheticError::Config(
                "noise_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The generator's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub config: IrtConfig,
    /// Abilities before any scaffold shift.
    pub base_abilities: Vec<f64>,
    /// Abilities that generated the responses.
    pub abilities: Vec<f64>,
    pub difficulties: Vec<f64>,
    pub discriminations: Vec<f64>,
    /// Index into `shifts` for each agent.
    pub scaffold_of: Vec<usize>,
    pub shifts: Vec<ShiftConfig>,
}

impl LatentTruth {
    /// Success probability of agent i on task j.
    pub fn probability(&self, agent: usize, task: usize) -> f64 {
        logistic(self.discriminations[task] * (self.abilities[agent] - self.difficulties[task]))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub matrix: PerformanceMatrix,
    pub latent: LatentTruth,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fisher information about ability carried by a Bernoulli item with success probability p.
pub fn fisher_information(p: f64) -> f64 {
    p * (1.0 - p)
}

/// The two probabilities where information falls to half its maximum.
pub fn fisher_half_max_points() -> (f64, f64) {
    // p(1 - p) = 1/8
    let half_width = 0.5_f64.sqrt() / 2.0;
    (0.5 - half_width, 0.5 + half_width)
}

fn normal_draws(seed: u64, stream: u64, mean: f64, std: f64, count: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, stream);
    let dist = Normal::new(mean, std).expect("validated std");
    (0..count).map(|_| dist.sample(&mut rng)).collect()
}

struct ItemParams {
    abilities: Vec<f64>,
    difficulties: Vec<f64>,
    discriminations: Vec<f64>,
}

fn draw_params(cfg: &IrtConfig) -> ItemParams {
    let abilities = normal_draws(
        cfg.seed,
        ABILITY_STREAM,
        cfg.ability_mean,
        cfg.ability_std,
        cfg.n_agents,
    );
    let difficulties = normal_draws(
        cfg.seed,
        DIFFICULTY_STREAM,
        cfg.difficulty_mean,
        cfg.difficulty_std,
        cfg.n_tasks,
    );
    let mut rng = rng::stream(cfg.seed, DISCRIMINATION_STREAM);
    let discriminations = (0..cfg.n_tasks)
        .map(|_| rng.random_range(cfg.discrimination_low..=cfg.discrimination_high))
        .collect();
    ItemParams {
        abilities,
        difficulties,
        discriminations,
    }
}

fn draw_cells(
    cfg: &IrtConfig,
    abilities: &[f64],
    difficulties: &[f64],
    discriminations: &[f64],
) -> Array2<f64> {
    let (n, m) = (abilities.len(), difficulties.len());
    let trials = f64::from(cfg.trials);
    let cells: Vec<f64> = (0..n * m)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / m, cell % m);
            let p = logistic(discriminations[j] * (abilities[i] - difficulties[j]));
            let mut rng = rng::stream(cfg.seed, CELL_STREAM_BASE + cell as u64);
            let successes = (0..cfg.trials).filter(|_| rng.random::<f64>() < p).count();
            successes as f64 / trials
        })
        .collect();
    Array2::from_shape_vec((n, m), cells).expect("n*m cells")
}

fn records(
    cfg: &IrtConfig,
    scaffold_label: impl Fn(usize) -> String,
) -> (Vec<AgentRecord>, Vec<TaskRecord>) {
    let day0 = NaiveDate::from_ymd_opt(2025, 10, 1).expect("valid date");
    let agents = (0..cfg.n_agents)
        .map(|i| {
            AgentRecord::new(
                format!("agent-{i:03}"),
                scaffold_label(i),
                format!("model-{i:03}"),
                day0 + chrono::Days::new(i as u64),
            )
        })
        .collect();
    let tasks = (0..cfg.n_tasks)
        .map(|j| TaskRecord {
            task_id: format!("task-{j:03}"),
        })
        .collect();
    (agents, tasks)
}

/// Draws a single-scaffold population.
pub fn generate_irt_matrix(cfg: &IrtConfig) -> Result<SyntheticDataset, SyntheticError> {
    simulate_with_labels(cfg, &[ShiftConfig::identity()], |_| "base".to_string())
}

/// Distorts a score vector by an affine map plus seeded Gaussian noise.
pub fn apply_affine_shift(y: &[f64], shift: &ShiftConfig) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(i, &v)| apply_affine_shift_at(v, shift, i))
        .collect()
}

/// Splits agents into contiguous scaffold blocks (earlier blocks submit first),
/// distorting each block's abilities by its shift.
pub fn simulate_scaffold_population(
    base: &IrtConfig,
    shifts: &[ShiftConfig],
) -> Result<SyntheticDataset, SyntheticError> {
    if shifts.is_empty() {
        return Err(SyntheticError::Config("need at least one shift".into()));
    }
    let blocks = scaffold_blocks(base.n_agents, shifts.len());
    simulate_with_labels(base, shifts, |i| format!("scaffold-{}", blocks[i]))
}

/// Block index per agent: sizes differ by at most one, larger blocks first.
pub fn scaffold_blocks(n: usize, groups: usize) -> Vec<usize> {
    let (size, extra) = (n / groups, n % groups);
    (0..groups)
        .flat_map(|g| std::iter::repeat_n(g, size + usize::from(g < extra)))
        .collect()
}

fn simulate_with_labels(
    cfg: &IrtConfig,
    shifts: &[ShiftConfig],
    label: impl Fn(usize) -> String,
) -> Result<SyntheticDataset, SyntheticError> {
    cfg.validate()?;
    for s in shifts {
        s.validate()?;
    }
    let params = draw_params(cfg);
    let scaffold_of = scaffold_blocks(cfg.n_agents, shifts.len());
    let abilities: Vec<f64> = params
        .abilities
        .iter()
        .enumerate()
        .map(|(i, &theta)| apply_affine_shift_at(theta, &shifts[scaffold_of[i]], i))
        .collect();
    let entries = draw_cells(
        cfg,
        &abilities,
        &params.difficulties,
        &params.discriminations,
    );
    let (agents, tasks) = records(cfg, label);
    let matrix = PerformanceMatrix::new(entries, agents, tasks, cfg.trials)?;
    Ok(SyntheticDataset {
        matrix,
        latent: LatentTruth {
            config: cfg.clone(),
            base_abilities: params.abilities,
            abilities,
            difficulties: params.difficulties,
            discriminations: params.discriminations,
            scaffold_of,
            shifts: shifts.to_vec(),
        },
    })
}

fn apply_affine_shift_at(value: f64, shift: &ShiftConfig, index: usize) -> f64 {
    let eps = if shift.noise_std > 0.0 {
        Normal::new(0.0, shift.noise_std)
            .expect("validated noise")
            .sample(&mut rng::stream(shift.seed, index as u64))
    } else {
        0.0
    };
    shift.scale * value + shift.offset + eps
}

/// The fixed-seed shifted population used by the end-to-end regression checks:
/// 60 agents, 120 tasks, three scaffold groups.
pub fn reference_population() -> (IrtConfig, Vec<ShiftConfig>) {
    let cfg = IrtConfig {
        n_agents: 60,
        n_tasks: 120,
        ability_mean: 0.0,
        ability_std: 0.6,
        difficulty_mean: 0.0,
        difficulty_std: 3.0,
        discrimination_low: 1.5,
        discrimination_high: 3.0,
        trials: 3,
        seed: 2,
    };
    let shift = |scale, offset, seed| ShiftConfig {
        scale,
        offset,
        noise_std: 0.1,
        seed,
    };
    (
        cfg,
        vec![
            shift(0.7, -0.3, 11),
            shift(1.0, 0.0, 12),
            shift(1.4, 0.3, 13),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{all_pass_rates, full_scores};
    use crate::metrics;

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_information(0.5), 0.25);
        assert_eq!(fisher_information(0.0), 0.0);
        assert_eq!(fisher_information(1.0), 0.0);
        let (lo, hi) = fisher_half_max_points();
        assert!((fisher_information(lo) - 0.125).abs() < 1e-15);
        assert!((lo - 0.146).abs() < 1e-3 && (hi - 0.854).abs() < 1e-3);
        for p in [0.0, 0.1, 0.25, 0.37, 0.5] {
            assert!((fisher_information(p) - fisher_information(1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_discrimination_gives_half_pass_rates() {
        let cfg = IrtConfig {
            n_agents: 400,
            n_tasks: 5,
            discrimination_low: 1e-9,
            discrimination_high: 1e-9,
            ..IrtConfig::default()
        };
        let ds = generate_irt_matrix(&cfg).unwrap();
        for r in all_pass_rates(&ds.matrix) {
            assert!((r - 0.5).abs() < 0.1, "{r}");
        }
    }

    #[test]
    fn saturated_ability_solves_everything() {
        let cfg = IrtConfig {
            n_agents: 3,
            n_tasks: 20,
            ability_mean: 50.0,
            ability_std: 0.0,
            ..IrtConfig::default()
        };
        let ds = generate_irt_matrix(&cfg).unwrap();
        assert!(ds.matrix.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = IrtConfig::default();
        let a = generate_irt_matrix(&cfg).unwrap();
        let b = generate_irt_matrix(&cfg).unwrap();
        assert_eq!(a.matrix, b.matrix);
        let c = generate_irt_matrix(&IrtConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn identity_shift_matches_plain_generation() {
        let cfg = IrtConfig::default();
        let plain = generate_irt_matrix(&cfg).unwrap();
        let shifted = simulate_scaffold_population(&cfg, &[ShiftConfig::identity()]).unwrap();
        assert_eq!(plain.matrix.entries(), shifted.matrix.entries());
        assert_eq!(shifted.matrix.agents()[0].scaffold, "scaffold-0");
    }

    #[test]
    fn affine_shift_examples() {
        let y = [0.2, 0.5, 0.1, 0.9, 0.4];
        assert_eq!(apply_affine_shift(&y, &ShiftConfig::identity()), y.to_vec());
        let s = ShiftConfig {
            scale: 2.0,
            offset: -0.3,
            noise_std: 0.0,
            seed: 0,
        };
        let out = apply_affine_shift(&y, &s);
        assert_eq!(metrics::spearman_rho(&out, &y).unwrap(), Some(1.0));
        assert!(metrics::r_squared(&out, &y).unwrap().unwrap() < 1.0);
    }

    #[test]
    fn scaffold_blocks_are_balanced() {
        assert_eq!(scaffold_blocks(7, 3), vec![0, 0, 0, 1, 1, 2, 2]);
        assert_eq!(
            scaffold_blocks(60, 3).iter().filter(|&&g| g == 2).count(),
            20
        );
    }

    #[test]
    fn monotone_shifts_keep_within_scaffold_order() {
        let (cfg, shifts) = reference_population();
        let ds = simulate_scaffold_population(&cfg, &shifts).unwrap();
        let lt = &ds.latent;
        for (g, shift) in shifts.iter().enumerate() {
            let members: Vec<usize> = (0..cfg.n_agents)
                .filter(|&i| lt.scaffold_of[i] == g)
                .collect();
            let noise_free: Vec<f64> = members
                .iter()
                .map(|&i| shift.scale * lt.base_abilities[i])
                .collect();
            let base: Vec<f64> = members.iter().map(|&i| lt.base_abilities[i]).collect();
            assert_eq!(
                metrics::spearman_rho(&noise_free, &base).unwrap(),
                Some(1.0)
            );
        }
        assert_eq!(full_scores(&ds.matrix).len(), 60);
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = IrtConfig {
            discrimination_low: 2.0,
            discrimination_high: 1.0,
            ..IrtConfig::default()
        };
        assert!(generate_irt_matrix(&bad).is_err());
        let zero = ShiftConfig {
            scale: 0.0,
            ..ShiftConfig::identity()
        };
        assert!(simulate_scaffold_population(&IrtConfig::default(), &[zero]).is_err());
    }
}
