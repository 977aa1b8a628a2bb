use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use taskcut::defaults;
use taskcut::matrix::{load_flat_csv, IngestOptions, MissingPolicy, PerformanceMatrix};
use taskcut::protocols::{ProtocolParams, RankPredictor};
use taskcut::selection::{DifficultyBand, MidrangeRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MissingArg {
    Strict,
    DropAgent,
}

/// Where the performance matrix comes from.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Flat CSV: agent_id,task_id,outcome,scaffold,model,submitted_at.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Treat `outcome` as a raw reward; strictly positive counts as success.
    #[arg(long)]
    pub threshold_positive: bool,
    /// Agents missing any task: reject the file, or drop those agents.
    #[arg(long, value_enum, default_value = "strict")]
    pub missing: MissingArg,
}

pub fn ingest_options(threshold_positive: bool, missing: MissingArg) -> IngestOptions {
    IngestOptions {
        missing: match missing {
            MissingArg::Strict => MissingPolicy::Strict,
            MissingArg::DropAgent => MissingPolicy::DropAgent,
        },
        threshold_positive,
    }
}

impl DataArgs {
    pub fn options(&self) -> IngestOptions {
        ingest_options(self.threshold_positive, self.missing)
    }

    pub fn load(&self) -> anyhow::Result<PerformanceMatrix> {
        load(&self.input, self.options())
    }
}

pub fn load(path: &Path, options: IngestOptions) -> anyhow::Result<PerformanceMatrix> {
    load_flat_csv(path, options).with_context(|| format!("loading {}", path.display()))
}

/// Mid-range band and its widening fallback.
#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    /// Inclusive pass-rate band, as LOWER,UPPER.
    #[arg(long, default_value = "0.30,0.70")]
    pub band: DifficultyBand,
    /// Use only --band; never widen when it holds too few tasks.
    #[arg(long)]
    pub no_widen: bool,
    /// Minimum fraction of tasks a band must capture.
    #[arg(long, default_value_t = defaults::MIN_BAND_FRACTION)]
    pub min_fraction: f64,
}

impl BandArgs {
    pub fn rule(&self) -> anyhow::Result<MidrangeRule> {
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.min_fraction),
            "--min-fraction must be in [0, 1], got {}",
            self.min_fraction
        );
        let widen = if self.no_widen {
            Vec::new()
        } else {
            // The ladder is only climbed outward from the requested band.
            defaults::widening_ladder()
                .into_iter()
                .filter(|b| b.lower <= self.band.lower && b.upper >= self.band.upper)
                .collect()
        };
        Ok(MidrangeRule {
            band: self.band,
            widen,
            min_fraction: self.min_fraction,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Ridge,
    SubsetMean,
}

/// Everything that shapes a protocol run.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[command(flatten)]
    pub band: BandArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

impl ParamArgs {
    pub fn params(&self) -> anyhow::Result<ProtocolParams> {
        self.model.params(self.band.rule()?)
    }
}

/// Protocol settings other than the band.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Ridge penalty.
    #[arg(long, default_value_t = defaults::RIDGE_ALPHA)]
    pub alpha: f64,
    /// Fit an unpenalized intercept.
    #[arg(long)]
    pub intercept: bool,
    /// Rank agents by ridge predictions or by the plain subset mean.
    #[arg(long, value_enum, default_value = "ridge")]
    pub rank_predictor: PredictorArg,
    /// Random strategy runs seeds 0..N.
    #[arg(long, default_value_t = defaults::RANDOM_SEEDS)]
    pub seeds: u64,
    /// Random-split protocol draws this many splits.
    #[arg(long, default_value_t = defaults::RANDOM_SPLITS)]
    pub splits: u64,
    /// Held-out share of agents per random split.
    #[arg(long, default_value_t = defaults::TEST_FRACTION)]
    pub test_fraction: f64,
    /// Scaffolds with fewer agents are left out of within-scaffold LOAO.
    #[arg(long, default_value_t = defaults::SCAFFOLD_THRESHOLD)]
    pub scaffold_threshold: usize,
    /// Temporal folds need at least this many earlier agents.
    #[arg(long, default_value_t = defaults::MIN_TRAIN_SIZE)]
    pub min_train_size: usize,
    /// Seed for the stratified strategy.
    #[arg(long, default_value_t = defaults::STRATIFIED_SEED)]
    pub stratified_seed: u64,
}

impl ModelArgs {
    pub fn params(&self, rule: MidrangeRule) -> anyhow::Result<ProtocolParams> {
        anyhow::ensure!(self.alpha > 0.0, "--alpha must be positive");
        anyhow::ensure!(self.seeds > 0, "--seeds must be positive");
        anyhow::ensure!(self.splits > 0, "--splits must be positive");
        anyhow::ensure!(
            self.test_fraction > 0.0 && self.test_fraction < 1.0,
            "--test-fraction must be in (0, 1)"
        );
        Ok(ProtocolParams {
            rule,
            alpha: self.alpha,
            intercept: self.intercept,
            rank_predictor: match self.rank_predictor {
                PredictorArg::Ridge => RankPredictor::Ridge,
                PredictorArg::SubsetMean => RankPredictor::SubsetMean,
            },
            random_seeds: self.seeds,
            random_splits: self.splits,
            test_fraction: self.test_fraction,
            scaffold_threshold: self.scaffold_threshold,
            min_train_size: self.min_train_size,
            stratified_seed: self.stratified_seed,
        })
    }
}

/// `name` from `name=path`, else the file stem.
pub fn dataset_name(raw: &str) -> (String, PathBuf) {
    match raw.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(raw);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| raw.to_string());
            (name, path)
        }
    }
}
