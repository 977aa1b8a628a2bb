//! Default constants for every tunable in the pipeline.
//!
//! Bump [`DEFAULTS_VERSION`] whenever a value here changes; it is written into
//! every report.

use serde::Serialize;

use crate::selection::DifficultyBand;

pub const DEFAULTS_VERSION: &str = "1";

pub const BAND_LOWER: f64 = 0.30;
pub const BAND_UPPER: f64 = 0.70;
/// Bands tried in order when fewer than [`MIN_BAND_FRACTION`] of tasks qualify.
pub const WIDENING_LADDER: [(f64, f64); 3] = [(0.30, 0.70), (0.25, 0.75), (0.15, 0.85)];
pub const MIN_BAND_FRACTION: f64 = 0.10;
pub const SWEEP_LADDER: [(f64, f64); 8] = [
    (0.10, 0.90),
    (0.15, 0.85),
    (0.20, 0.80),
    (0.25, 0.75),
    (0.30, 0.70),
    (0.35, 0.65),
    (0.40, 0.60),
    (0.45, 0.55),
];

pub const RIDGE_ALPHA: f64 = 1.0;
pub const RANDOM_SEEDS: u64 = 100;
pub const RANDOM_SPLITS: u64 = 100;
pub const TEST_FRACTION: f64 = 0.20;
pub const SCAFFOLD_THRESHOLD: usize = 10;
pub const MIN_TRAIN_SIZE: usize = 10;
pub const STRATIFIED_SEED: u64 = 0;

pub const META_BOOTSTRAP_RESAMPLES: usize = 1000;
pub const META_BOOTSTRAP_THRESHOLD: f64 = 2e-5;
pub const META_BOOTSTRAP_SEED: u64 = 0;

pub const PREDICTION_BOOTSTRAP_RESAMPLES: usize = 200;
pub const PREDICTION_INTERVAL_LEVEL: f64 = 0.95;

pub const RESELECT_RHO: f64 = 0.75;
pub const REFIT_EVERY: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct Defaults {
    pub version: &'static str,
    pub band: DifficultyBand,
    pub widening_ladder: Vec<DifficultyBand>,
    pub min_band_fraction: f64,
    pub sweep_ladder: Vec<DifficultyBand>,
    pub ridge_alpha: f64,
    pub random_seeds: u64,
    pub random_splits: u64,
    pub test_fraction: f64,
    pub scaffold_threshold: usize,
    pub min_train_size: usize,
    pub stratified_seed: u64,
    pub meta_bootstrap_resamples: usize,
    pub meta_bootstrap_threshold: f64,
    pub prediction_bootstrap_resamples: usize,
    pub prediction_interval_level: f64,
    pub reselect_rho: f64,
    pub refit_every: usize,
    pub prng: &'static str,
}

fn bands(raw: &[(f64, f64)]) -> Vec<DifficultyBand> {
    raw.iter()
        .map(|&(l, u)| DifficultyBand::new(l, u).expect("valid default band"))
        .collect()
}

pub fn defaults() -> Defaults {
    Defaults {
        version: DEFAULTS_VERSION,
        band: DifficultyBand::default(),
        widening_ladder: bands(&WIDENING_LADDER),
        min_band_fraction: MIN_BAND_FRACTION,
        sweep_ladder: bands(&SWEEP_LADDER),
        ridge_alpha: RIDGE_ALPHA,
        random_seeds: RANDOM_SEEDS,
        random_splits: RANDOM_SPLITS,
        test_fraction: TEST_FRACTION,
        scaffold_threshold: SCAFFOLD_THRESHOLD,
        min_train_size: MIN_TRAIN_SIZE,
        stratified_seed: STRATIFIED_SEED,
        meta_bootstrap_resamples: META_BOOTSTRAP_RESAMPLES,
        meta_bootstrap_threshold: META_BOOTSTRAP_THRESHOLD,
        prediction_bootstrap_resamples: PREDICTION_BOOTSTRAP_RESAMPLES,
        prediction_interval_level: PREDICTION_INTERVAL_LEVEL,
        reselect_rho: RESELECT_RHO,
        refit_every: REFIT_EVERY,
        prng: crate::rng::PRNG_ALGORITHM,
    }
}

pub fn widening_ladder() -> Vec<DifficultyBand> {
    bands(&WIDENING_LADDER)
}

pub fn sweep_ladder() -> Vec<DifficultyBand> {
    bands(&SWEEP_LADDER)
}
