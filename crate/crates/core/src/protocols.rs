//! Nested cross-validation protocols.
//!
//! Each fold recomputes pass rates, the matched budget, and the strategy's
//! selection from its training rows alone, fits ridge on the selected columns,
//! and predicts the held-out agents' full-benchmark scores. Predictions are
//! pooled across folds before metrics are computed.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;
use crate::matrix::{self, PerformanceMatrix};
use crate::metrics::{Metric, MetricError, MetricTriple};
use crate::ridge::{self, RidgeError};
use crate::rng;
use crate::selection::{self, Extreme, MidrangeRule, Selection, SelectionError, Strategy};

/// Random-split partitions draw from this substream of their split seed.
const SPLIT_STREAM: u64 = 1 << 32;
/// Meta-bootstrap draws from this substream.
const META_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Loao,
    WithinScaffoldLoao,
    RandomSplit,
    Loso,
    Temporal,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Loao,
        Protocol::WithinScaffoldLoao,
        Protocol::RandomSplit,
        Protocol::Loso,
        Protocol::Temporal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Loao => "loao",
            Protocol::WithinScaffoldLoao => "within_scaffold_loao",
            Protocol::RandomSplit => "random_split",
            Protocol::Loso => "loso",
            Protocol::Temporal => "temporal",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

/// What produces the scores that get ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPredictor {
    #[default]
    Ridge,
    SubsetMean,
}

impl FromStr for RankPredictor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ridge" => Ok(RankPredictor::Ridge),
            "subset_mean" | "subset-mean" => Ok(RankPredictor::SubsetMean),
            _ => Err(format!("unknown rank predictor {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub rule: MidrangeRule,
    pub alpha: f64,
    pub intercept: bool,
    pub rank_predictor: RankPredictor,
    /// Random strategy runs seeds `0..random_seeds`.
    pub random_seeds: u64,
    /// Random-split protocol uses split seeds `0..random_splits`.
    pub random_splits: u64,
    pub test_fraction: f64,
    pub scaffold_threshold: usize,
    pub min_train_size: usize,
    pub stratified_seed: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            rule: MidrangeRule::default(),
            alpha: defaults::RIDGE_ALPHA,
            intercept: false,
            rank_predictor: RankPredictor::Ridge,
            random_seeds: defaults::RANDOM_SEEDS,
            random_splits: defaults::RANDOM_SPLITS,
            test_fraction: defaults::TEST_FRACTION,
            scaffold_threshold: defaults::SCAFFOLD_THRESHOLD,
            min_train_size: defaults::MIN_TRAIN_SIZE,
            stratified_seed: defaults::STRATIFIED_SEED,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{protocol} is infeasible: {reason}")]
    Infeasible { protocol: Protocol, reason: String },
    #[error("all {folds} folds of {protocol}/{strategy} were skipped")]
    AllFoldsSkipped {
        protocol: Protocol,
        strategy: Strategy,
        folds: usize,
    },
    #[error(transparent)]
    Ridge(#[from] RidgeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub protocol: Protocol,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub train_agent_ids: Vec<String>,
    pub test_agent_ids: Vec<String>,
    pub seed: Option<u64>,
    pub fold_label: String,
}

impl FoldSpec {
    fn new(
        matrix: &PerformanceMatrix,
        protocol: Protocol,
        train: Vec<usize>,
        test: Vec<usize>,
        seed: Option<u64>,
        fold_label: String,
    ) -> Self {
        let ids = |v: &[usize]| {
            v.iter()
                .map(|&i| matrix.agents()[i].agent_id.clone())
                .collect()
        };
        Self {
            protocol,
            train_agent_ids: ids(&train),
            test_agent_ids: ids(&test),
            train,
            test,
            seed,
            fold_label,
        }
    }
}

fn infeasible(protocol: Protocol, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::Infeasible {
        protocol,
        reason: reason.into(),
    }
}

/// Test-set size for random splits: round half up, at least 1, at most n − 1.
pub fn random_split_test_size(n: usize, test_fraction: f64) -> usize {
    let raw = (test_fraction * n as f64 + 0.5).floor() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Builds the train/test folds for a protocol.
pub fn make_folds(
    matrix: &PerformanceMatrix,
    protocol: Protocol,
    params: &ProtocolParams,
) -> Result<Vec<FoldSpec>, ProtocolError> {
    let n = matrix.n_agents();
    if n < 2 {
        return Err(infeasible(protocol, "need at least two agents"));
    }
    let label = |i: usize| matrix.agents()[i].agent_id.clone();
    let folds = match protocol {
        Protocol::Loao => (0..n)
            .map(|i| {
                let train = (0..n).filter(|&t| t != i).collect();
                FoldSpec::new(matrix, protocol, train, vec![i], None, label(i))
            })
            .collect(),
        Protocol::WithinScaffoldLoao => {
            let mut folds = Vec::new();
            for (scaffold, members) in matrix.scaffold_groups() {
                if members.len() < params.scaffold_threshold {
                    continue;
                }
                for &i in &members {
                    let train = members.iter().copied().filter(|&t| t != i).collect();
                    folds.push(FoldSpec::new(
                        matrix,
                        protocol,
                        train,
                        vec![i],
                        None,
                        format!("{scaffold}/{}", label(i)),
                    ));
                }
            }
            if folds.is_empty() {
                return Err(infeasible(
                    protocol,
                    format!(
                        "no scaffold has at least {} agents",
                        params.scaffold_threshold
                    ),
                ));
            }
            folds
        }
        Protocol::RandomSplit => {
            let test_size = random_split_test_size(n, params.test_fraction);
            (0..params.random_splits)
                .map(|seed| {
                    let mut rng = rng::stream(seed, SPLIT_STREAM);
                    let mut test = index::sample(&mut rng, n, test_size).into_vec();
                    test.sort_unstable();
                    let train = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
                    FoldSpec::new(
                        matrix,
                        protocol,
                        train,
                        test,
                        Some(seed),
                        format!("split-{seed}"),
                    )
                })
                .collect()
        }
        Protocol::Loso => {
            let groups = matrix.scaffold_groups();
            if groups.len() < 2 {
                return Err(infeasible(protocol, "fewer than two scaffolds"));
            }
            if groups.iter().any(|(_, members)| members.len() >= n - 1) {
                return Err(infeasible(
                    protocol,
                    "all but one agent use a single scaffold",
                ));
            }
            groups
                .into_iter()
                .map(|(scaffold, members)| {
                    let train = (0..n).filter(|i| !members.contains(i)).collect();
                    FoldSpec::new(matrix, protocol, train, members, None, scaffold)
                })
                .collect()
        }
        Protocol::Temporal => {
            if params.min_train_size == 0 {
                return Err(infeasible(protocol, "min_train_size must be positive"));
            }
            if n < params.min_train_size + 1 {
                return Err(infeasible(
                    protocol,
                    format!(
                        "{n} agents, need more than min_train_size = {}",
                        params.min_train_size
                    ),
                ));
            }
            let order = matrix.submission_order();
            (params.min_train_size..n)
                .map(|p| {
                    let test = order[p];
                    let date = matrix.agents()[test].submitted_at;
                    FoldSpec::new(
                        matrix,
                        protocol,
                        order[..p].to_vec(),
                        vec![test],
                        None,
                        format!("{date}/{}", label(test)),
                    )
                })
                .collect()
        }
    };
    Ok(folds)
}

/// The selection a strategy makes on one fold, from training rows only.
///
/// `seed` is the random-strategy seed; `fold_index` picks the substream so
/// every fold draws independently.
pub fn fold_selection(
    matrix: &PerformanceMatrix,
    fold: &FoldSpec,
    strategy: Strategy,
    params: &ProtocolParams,
    seed: u64,
    fold_index: usize,
) -> Result<Selection, SelectionError> {
    let rates = matrix::pass_rates(matrix, &fold.train)
        .map_err(|e| SelectionError::Invalid(e.to_string()))?;
    let budget = selection::matched_budget(&rates, &params.rule)?;
    let k = budget.k();
    let stream = fold_index as u64;
    match strategy {
        Strategy::Midrange => Ok(budget),
        Strategy::Greedy => {
            let all: Vec<usize> = (0..matrix.n_tasks()).collect();
            let x = matrix.submatrix(&fold.train, &all);
            let y = matrix::row_means(x.view());
            Ok(selection::select_greedy(x.view(), &y, k, params.alpha)?.selection)
        }
        Strategy::Random => selection::select_random_stream(matrix.n_tasks(), k, seed, stream),
        Strategy::Easiest => selection::select_extreme(&rates, k, Extreme::Easiest),
        Strategy::Hardest => selection::select_extreme(&rates, k, Extreme::Hardest),
        Strategy::Stratified => {
            selection::select_stratified_stream(&rates, k, params.stratified_seed, stream)
        }
    }
}

/// Per-fold predictions for the held-out agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold_label: String,
    pub test_agent_ids: Vec<String>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub k_used: usize,
    /// Only for folds with at least three test agents.
    pub metrics: Option<MetricTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold_label: String,
    pub reason: String,
}

enum FoldOutcome {
    Done(FoldRecord),
    Skipped(SkippedFold),
}

fn evaluate_fold(
    matrix: &PerformanceMatrix,
    fold: &FoldSpec,
    strategy: Strategy,
    params: &ProtocolParams,
    seed: u64,
    fold_index: usize,
) -> Result<FoldOutcome, ProtocolError> {
    let sel = match fold_selection(matrix, fold, strategy, params, seed, fold_index) {
        Ok(sel) => sel,
        Err(e @ (SelectionError::InsufficientBand { .. } | SelectionError::Invalid(_))) => {
            return Ok(FoldOutcome::Skipped(SkippedFold {
                fold_label: fold.fold_label.clone(),
                reason: e.to_string(),
            }))
        }
        Err(e) => return Err(e.into()),
    };
    let all: Vec<usize> = (0..matrix.n_tasks()).collect();
    let actual = matrix::row_means(matrix.submatrix(&fold.test, &all).view());
    let x_test = matrix.submatrix(&fold.test, &sel.tasks);
    let predicted = match params.rank_predictor {
        RankPredictor::SubsetMean => matrix::row_means(x_test.view()),
        RankPredictor::Ridge => {
            let x_train = matrix.submatrix(&fold.train, &sel.tasks);
            let y_train = matrix::row_means(matrix.submatrix(&fold.train, &all).view());
            let fit = if params.intercept {
                ridge::fit_ridge_with_intercept(x_train.view(), &y_train, params.alpha)?
            } else {
                ridge::fit_ridge(x_train.view(), &y_train, params.alpha)?
            };
            ridge::predict(&fit, x_test.view())?
        }
    };
    let metrics = if fold.test.len() >= 3 {
        Some(MetricTriple::compute(&predicted, &actual)?)
    } else {
        None
    };
    Ok(FoldOutcome::Done(FoldRecord {
        fold_label: fold.fold_label.clone(),
        test_agent_ids: fold.test_agent_ids.clone(),
        predicted,
        actual,
        k_used: sel.k(),
        metrics,
    }))
}

struct SeedRun {
    pooled: MetricTriple,
    per_fold: Vec<FoldRecord>,
    skipped: Vec<SkippedFold>,
}

fn run_once(
    matrix: &PerformanceMatrix,
    folds: &[FoldSpec],
    strategy: Strategy,
    params: &ProtocolParams,
    seed: u64,
) -> Result<SeedRun, ProtocolError> {
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| evaluate_fold(matrix, fold, strategy, params, seed, i))
        .collect::<Result<_, _>>()?;
    let mut per_fold = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            FoldOutcome::Done(r) => per_fold.push(r),
            FoldOutcome::Skipped(s) => skipped.push(s),
        }
    }
    let predicted: Vec<f64> = per_fold
        .iter()
        .flat_map(|r| r.predicted.iter().copied())
        .collect();
    let actual: Vec<f64> = per_fold
        .iter()
        .flat_map(|r| r.actual.iter().copied())
        .collect();
    let pooled = MetricTriple::compute(&predicted, &actual)?;
    Ok(SeedRun {
        pooled,
        per_fold,
        skipped,
    })
}

/// mean / std / min / max of one metric across seeds; std is the population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n_defined: usize,
}

impl SeedStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n_defined: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricTriple>,
    pub spearman_rho: Option<SeedStats>,
    pub kendall_tau_b: Option<SeedStats>,
    pub r_squared: Option<SeedStats>,
}

impl SeedSummary {
    pub fn stats(&self, metric: Metric) -> Option<&SeedStats> {
        match metric {
            Metric::SpearmanRho => self.spearman_rho.as_ref(),
            Metric::KendallTauB => self.kendall_tau_b.as_ref(),
            Metric::RSquared => self.r_squared.as_ref(),
        }
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.per_seed.iter().filter_map(|t| t.get(metric)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub protocol: Protocol,
    pub strategy: Strategy,
    pub n_folds: usize,
    /// For the random strategy these are the folds of the first seed.
    pub per_fold: Vec<FoldRecord>,
    pub skipped: Vec<SkippedFold>,
    /// For the random strategy, the mean of each metric across seeds.
    pub pooled: MetricTriple,
    /// Multi-agent folds whose per-fold Spearman rho is undefined.
    pub undefined_fold_count: usize,
    pub seed_summary: Option<SeedSummary>,
}

impl ProtocolResult {
    /// Worst rho: the pooled value, or the minimum across seeds for random.
    pub fn worst(&self, metric: Metric) -> Option<f64> {
        match &self.seed_summary {
            Some(s) => s.stats(metric).map(|st| st.min),
            None => self.pooled.get(metric),
        }
    }
}

/// Runs one (protocol, strategy) cell end to end.
pub fn run_protocol(
    matrix: &PerformanceMatrix,
    protocol: Protocol,
    strategy: Strategy,
    params: &ProtocolParams,
) -> Result<ProtocolResult, ProtocolError> {
    let folds = make_folds(matrix, protocol, params)?;
    run_folds(matrix, protocol, &folds, strategy, params)
}

/// [`run_protocol`] on precomputed folds.
pub fn run_folds(
    matrix: &PerformanceMatrix,
    protocol: Protocol,
    folds: &[FoldSpec],
    strategy: Strategy,
    params: &ProtocolParams,
) -> Result<ProtocolResult, ProtocolError> {
    let all_skipped = |skipped: usize| {
        if skipped == folds.len() {
            Err(ProtocolError::AllFoldsSkipped {
                protocol,
                strategy,
                folds: folds.len(),
            })
        } else {
            Ok(())
        }
    };
    let undefined = |per_fold: &[FoldRecord]| {
        per_fold
            .iter()
            .filter(|r| r.metrics.is_some_and(|m| m.spearman_rho.is_none()))
            .count()
    };

    if strategy != Strategy::Random {
        let run = run_once(matrix, folds, strategy, params, 0)?;
        all_skipped(run.skipped.len())?;
        return Ok(ProtocolResult {
            protocol,
            strategy,
            n_folds: folds.len(),
            undefined_fold_count: undefined(&run.per_fold),
            per_fold: run.per_fold,
            skipped: run.skipped,
            pooled: run.pooled,
            seed_summary: None,
        });
    }

    let seeds: Vec<u64> = (0..params.random_seeds.max(1)).collect();
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&s| run_once(matrix, folds, strategy, params, s))
        .collect::<Result<_, _>>()?;
    let per_seed: Vec<MetricTriple> = runs.iter().map(|r| r.pooled).collect();
    let stats = |metric: Metric| {
        let values: Vec<f64> = per_seed.iter().filter_map(|t| t.get(metric)).collect();
        SeedStats::from_values(&values)
    };
    let summary = SeedSummary {
        seeds,
        spearman_rho: stats(Metric::SpearmanRho),
        kendall_tau_b: stats(Metric::KendallTauB),
        r_squared: stats(Metric::RSquared),
        per_seed,
    };
    let pooled = MetricTriple {
        spearman_rho: summary.spearman_rho.map(|s| s.mean),
        kendall_tau_b: summary.kendall_tau_b.map(|s| s.mean),
        r_squared: summary.r_squared.map(|s| s.mean),
    };
    // The budget does not depend on the seed, so every seed skips the same folds.
    let first = runs.into_iter().next().expect("at least one seed");
    all_skipped(first.skipped.len())?;
    Ok(ProtocolResult {
        protocol,
        strategy,
        n_folds: folds.len(),
        undefined_fold_count: undefined(&first.per_fold),
        per_fold: first.per_fold,
        skipped: first.skipped,
        pooled,
        seed_summary: Some(summary),
    })
}

/// Variance of the bootstrapped mean and of the bootstrapped std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaBootstrap {
    pub var_of_mean: f64,
    pub var_of_std: f64,
}

impl MetaBootstrap {
    pub fn passes(&self, threshold: f64) -> bool {
        self.var_of_mean < threshold && self.var_of_std < threshold
    }
}

/// Bootstraps over per-seed metric values.
pub fn meta_bootstrap(
    values: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<MetaBootstrap, ProtocolError> {
    if values.len() < 2 {
        return Err(ProtocolError::Selection(SelectionError::Invalid(
            "meta-bootstrap needs at least two seed values".into(),
        )));
    }
    if resamples < 2 {
        return Err(ProtocolError::Selection(SelectionError::Invalid(
            "meta-bootstrap needs at least two resamples".into(),
        )));
    }
    use rand::Rng;
    let mut rng = rng::stream(seed, META_STREAM);
    let n = values.len();
    let mut means = Vec::with_capacity(resamples);
    let mut stds = Vec::with_capacity(resamples);
    let mut draw = vec![0.0; n];
    // centring on the first value leaves both variances unchanged and makes constant input exact
    let origin = values[0];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = values[rng.random_range(0..n)] - origin;
        }
        let st = SeedStats::from_values(&draw).expect("non-empty");
        means.push(st.mean);
        stds.push(st.std);
    }
    let var = |v: &[f64]| SeedStats::from_values(v).map_or(0.0, |s| s.std * s.std);
    Ok(MetaBootstrap {
        var_of_mean: var(&means),
        var_of_std: var(&stds),
    })
}

/// A result tagged with the benchmark it came from.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkCell<'a> {
    pub benchmark: &'a str,
    pub result: &'a ProtocolResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Best strategy within each benchmark, then averaged over benchmarks.
    PerBenchmark,
    /// Strategies averaged over benchmarks first, then the best one.
    AcrossBenchmarks,
}

impl Grouping {
    pub fn name(self) -> &'static str {
        match self {
            Grouping::PerBenchmark => "per_benchmark",
            Grouping::AcrossBenchmarks => "across_benchmarks",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub grouping: Grouping,
    pub protocol: Protocol,
    pub metric: Metric,
    pub best: Option<f64>,
    pub avg: Option<f64>,
    pub n_benchmarks: usize,
    pub n_cells: usize,
    pub n_undefined: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn max(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::max)
}

/// Best-over-strategies and mean-over-strategies per protocol and metric.
/// Each metric's best is taken independently.
pub fn divergence_summary(cells: &[BenchmarkCell<'_>]) -> Vec<DivergenceRow> {
    let mut protocols: Vec<Protocol> = cells.iter().map(|c| c.result.protocol).collect();
    protocols.sort();
    protocols.dedup();
    let mut benchmarks: Vec<&str> = Vec::new();
    for c in cells {
        if !benchmarks.contains(&c.benchmark) {
            benchmarks.push(c.benchmark);
        }
    }
    let mut rows = Vec::new();
    for grouping in [Grouping::PerBenchmark, Grouping::AcrossBenchmarks] {
        for &protocol in &protocols {
            for metric in Metric::ALL {
                let in_protocol: Vec<&BenchmarkCell> = cells
                    .iter()
                    .filter(|c| c.result.protocol == protocol)
                    .collect();
                let n_undefined = in_protocol
                    .iter()
                    .filter(|c| c.result.pooled.get(metric).is_none())
                    .count();
                let value = |c: &&BenchmarkCell| c.result.pooled.get(metric);
                let (best, avg, n_bench) = match grouping {
                    Grouping::PerBenchmark => {
                        let mut bests = Vec::new();
                        let mut avgs = Vec::new();
                        for b in &benchmarks {
                            let vals: Vec<f64> = in_protocol
                                .iter()
                                .filter(|c| c.benchmark == *b)
                                .filter_map(value)
                                .collect();
                            if let (Some(bm), Some(am)) = (max(&vals), mean(&vals)) {
                                bests.push(bm);
                                avgs.push(am);
                            }
                        }
                        (mean(&bests), mean(&avgs), bests.len())
                    }
                    Grouping::AcrossBenchmarks => {
                        let mut strategies: Vec<Strategy> =
                            in_protocol.iter().map(|c| c.result.strategy).collect();
                        strategies.sort();
                        strategies.dedup();
                        let per_strategy: Vec<f64> = strategies
                            .iter()
                            .filter_map(|s| {
                                let vals: Vec<f64> = in_protocol
                                    .iter()
                                    .filter(|c| c.result.strategy == *s)
                                    .filter_map(value)
                                    .collect();
                                mean(&vals)
                            })
                            .collect();
                        let n_bench = benchmarks
                            .iter()
                            .filter(|b| {
                                in_protocol
                                    .iter()
                                    .any(|c| c.benchmark == **b && value(c).is_some())
                            })
                            .count();
                        (max(&per_strategy), mean(&per_strategy), n_bench)
                    }
                };
                rows.push(DivergenceRow {
                    grouping,
                    protocol,
                    metric,
                    best,
                    avg,
                    n_benchmarks: n_bench,
                    n_cells: in_protocol.len(),
                    n_undefined,
                });
            }
        }
    }
    rows
}

/// Mean, best, and worst rho of one strategy across protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub mean_rho: Option<f64>,
    pub best_rho: Option<f64>,
    /// For random, the worst single seed across protocols.
    pub worst_rho: Option<f64>,
    pub n_protocols: usize,
}

pub fn strategy_summary(results: &[&ProtocolResult]) -> Vec<StrategyRow> {
    let mut strategies: Vec<Strategy> = results.iter().map(|r| r.strategy).collect();
    strategies.sort();
    strategies.dedup();
    strategies
        .into_iter()
        .map(|s| {
            let rows: Vec<&&ProtocolResult> = results.iter().filter(|r| r.strategy == s).collect();
            let means: Vec<f64> = rows.iter().filter_map(|r| r.pooled.spearman_rho).collect();
            let worsts: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.worst(Metric::SpearmanRho))
                .collect();
            let bests: Vec<f64> = rows
                .iter()
                .filter_map(|r| match &r.seed_summary {
                    Some(ss) => ss.spearman_rho.map(|st| st.max),
                    None => r.pooled.spearman_rho,
                })
                .collect();
            StrategyRow {
                strategy: s,
                mean_rho: mean(&means),
                best_rho: max(&bests),
                worst_rho: worsts.iter().copied().reduce(f64::min),
                n_protocols: means.len(),
            }
        })
        .collect()
}

/// One cell of the protocol × strategy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GridCell {
    Done(Box<ProtocolResult>),
    Infeasible {
        protocol: Protocol,
        strategy: Strategy,
        reason: String,
    },
}

impl GridCell {
    pub fn protocol(&self) -> Protocol {
        match self {
            GridCell::Done(r) => r.protocol,
            GridCell::Infeasible { protocol, .. } => *protocol,
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            GridCell::Done(r) => r.strategy,
            GridCell::Infeasible { strategy, .. } => *strategy,
        }
    }

    pub fn result(&self) -> Option<&ProtocolResult> {
        match self {
            GridCell::Done(r) => Some(r),
            GridCell::Infeasible { .. } => None,
        }
    }
}

/// Runs every (protocol, strategy) pair, in the given order. Infeasible
/// protocols and fully skipped cells become [`GridCell::Infeasible`].
pub fn run_grid(
    matrix: &PerformanceMatrix,
    protocols: &[Protocol],
    strategies: &[Strategy],
    params: &ProtocolParams,
) -> Result<Vec<GridCell>, ProtocolError> {
    let mut cells = Vec::with_capacity(protocols.len() * strategies.len());
    for &protocol in protocols {
        let folds = match make_folds(matrix, protocol, params) {
            Ok(f) => f,
            Err(ProtocolError::Infeasible { reason, .. }) => {
                cells.extend(strategies.iter().map(|&strategy| GridCell::Infeasible {
                    protocol,
                    strategy,
                    reason: reason.clone(),
                }));
                continue;
            }
            Err(e) => return Err(e),
        };
        for &strategy in strategies {
            cells.push(
                match run_folds(matrix, protocol, &folds, strategy, params) {
                    Ok(r) => GridCell::Done(Box::new(r)),
                    Err(e @ ProtocolError::AllFoldsSkipped { .. }) => GridCell::Infeasible {
                        protocol,
                        strategy,
                        reason: e.to_string(),
                    },
                    Err(e) => return Err(e),
                },
            );
        }
    }
    Ok(cells)
}

pub const RESULT_HEADER: [&str; 7] = [
    "protocol",
    "strategy",
    "metric",
    "value",
    "n_folds",
    "n_skipped",
    "seed_stat",
];
pub const INFEASIBLE_MARK: &str = "---";
pub const UNDEFINED_MARK: &str = "NA";

pub fn format_value(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED_MARK.to_string(), |x| format!("{x:.6}"))
}

/// Flat result table; random-strategy cells get one row per seed statistic.
pub fn write_results_csv<W: std::io::Write>(cells: &[GridCell], writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RESULT_HEADER)?;
    for cell in cells {
        let (p, s) = (cell.protocol().name(), cell.strategy().name());
        match cell {
            GridCell::Infeasible { .. } => {
                for metric in Metric::ALL {
                    wtr.write_record([
                        p,
                        s,
                        metric.name(),
                        INFEASIBLE_MARK,
                        "0",
                        "0",
                        INFEASIBLE_MARK,
                    ])?;
                }
            }
            GridCell::Done(r) => {
                let (n_folds, n_skipped) = (r.n_folds.to_string(), r.skipped.len().to_string());
                for metric in Metric::ALL {
                    let mut row = |value: String, stat: &str| {
                        wtr.write_record([p, s, metric.name(), &value, &n_folds, &n_skipped, stat])
                    };
                    match &r.seed_summary {
                        None => row(format_value(r.pooled.get(metric)), "pooled")?,
                        Some(summary) => {
                            let st = summary.stats(metric);
                            row(format_value(st.map(|x| x.mean)), "mean")?;
                            row(format_value(st.map(|x| x.std)), "std")?;
                            row(format_value(st.map(|x| x.min)), "min")?;
                            row(format_value(st.map(|x| x.max)), "max")?;
                        }
                    }
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use ndarray::Array2;

    use crate::matrix::{AgentRecord, TaskRecord};

    fn matrix_with_scaffolds(scaffolds: &[&str]) -> PerformanceMatrix {
        let n = scaffolds.len();
        let m = 4;
        let entries =
            Array2::from_shape_fn((n, m), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { 0.0 });
        let day0 = NaiveDate::from_ymd_opt(2025, 10, 1).unwrap();
        let agents = scaffolds
            .iter()
            .enumerate()
            .map(|(i, s)| {
                AgentRecord::new(
                    format!("a{i}"),
                    *s,
                    "m",
                    day0 + chrono::Days::new(i as u64 / 2),
                )
            })
            .collect();
        let tasks = (0..m)
            .map(|j| TaskRecord {
                task_id: format!("t{j}"),
            })
            .collect();
        PerformanceMatrix::new(entries, agents, tasks, 1).unwrap()
    }

    #[test]
    fn loao_folds() {
        let m = matrix_with_scaffolds(&["s"; 5]);
        let folds = make_folds(&m, Protocol::Loao, &ProtocolParams::default()).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds
            .iter()
            .all(|f| f.train.len() == 4 && f.test.len() == 1));
    }

    #[test]
    fn loso_folds() {
        let m = matrix_with_scaffolds(&["x", "x", "x", "y", "y"]);
        let folds = make_folds(&m, Protocol::Loso, &ProtocolParams::default()).unwrap();
        let sizes: Vec<(usize, usize)> = folds
            .iter()
            .map(|f| (f.train.len(), f.test.len()))
            .collect();
        assert_eq!(sizes, vec![(2, 3), (3, 2)]);
    }

    #[test]
    fn loso_infeasible_when_one_scaffold_dominates() {
        let m = matrix_with_scaffolds(&["x", "x", "x", "x", "y"]);
        match make_folds(&m, Protocol::Loso, &ProtocolParams::default()) {
            Err(ProtocolError::Infeasible { reason, .. }) => {
                assert!(reason.contains("all but one agent"))
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let one = matrix_with_scaffolds(&["x"; 4]);
        assert!(make_folds(&one, Protocol::Loso, &ProtocolParams::default()).is_err());
    }

    #[test]
    fn within_scaffold_discards_small_groups() {
        let mut labels = vec!["big"; 10];
        labels.extend(["small"; 3]);
        let m = matrix_with_scaffolds(&labels);
        let folds =
            make_folds(&m, Protocol::WithinScaffoldLoao, &ProtocolParams::default()).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds
            .iter()
            .all(|f| f.train.len() == 9 && f.train.iter().all(|&i| i < 10)));
        let params = ProtocolParams {
            scaffold_threshold: 11,
            ..ProtocolParams::default()
        };
        assert!(make_folds(&m, Protocol::WithinScaffoldLoao, &params).is_err());
    }

    #[test]
    fn temporal_expanding_window() {
        let m = matrix_with_scaffolds(&["s"; 8]);
        let params = ProtocolParams {
            min_train_size: 5,
            ..ProtocolParams::default()
        };
        let folds = make_folds(&m, Protocol::Temporal, &params).unwrap();
        assert_eq!(folds.len(), 3);
        for f in &folds {
            let test = &m.agents()[f.test[0]];
            for &t in &f.train {
                let a = &m.agents()[t];
                assert!((a.submitted_at, &a.agent_id) < (test.submitted_at, &test.agent_id));
            }
        }
        let too_small = ProtocolParams {
            min_train_size: 8,
            ..ProtocolParams::default()
        };
        assert!(make_folds(&m, Protocol::Temporal, &too_small).is_err());
    }

    #[test]
    fn random_split_sizes() {
        assert_eq!(random_split_test_size(5, 0.2), 1);
        assert_eq!(random_split_test_size(12, 0.2), 2);
        assert_eq!(random_split_test_size(13, 0.2), 3);
        assert_eq!(random_split_test_size(2, 0.2), 1);
        let m = matrix_with_scaffolds(&["s"; 10]);
        let folds = make_folds(&m, Protocol::RandomSplit, &ProtocolParams::default()).unwrap();
        assert_eq!(folds.len(), 100);
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.train.len(), 8);
            assert!(f.train.iter().all(|i| !f.test.contains(i)));
        }
    }

    #[test]
    fn meta_bootstrap_examples() {
        let same = vec![0.8; 100];
        let mb = meta_bootstrap(&same, 1000, 0).unwrap();
        assert_eq!((mb.var_of_mean, mb.var_of_std), (0.0, 0.0));
        let mut two = vec![0.0; 50];
        two.extend(vec![1.0; 50]);
        let mb = meta_bootstrap(&two, 4000, 1).unwrap();
        assert!(
            (mb.var_of_mean - 0.0025).abs() < 0.0004,
            "{}",
            mb.var_of_mean
        );
        assert!(meta_bootstrap(&[0.5], 10, 0).is_err());
    }

    fn fake_result(protocol: Protocol, strategy: Strategy, rho: f64) -> ProtocolResult {
        ProtocolResult {
            protocol,
            strategy,
            n_folds: 1,
            per_fold: Vec::new(),
            skipped: Vec::new(),
            pooled: MetricTriple {
                spearman_rho: Some(rho),
                kendall_tau_b: Some(rho - 0.1),
                r_squared: None,
            },
            undefined_fold_count: 0,
            seed_summary: None,
        }
    }

    #[test]
    fn divergence_best_and_avg() {
        let a = fake_result(Protocol::Loao, Strategy::Midrange, 0.9);
        let b = fake_result(Protocol::Loao, Strategy::Greedy, 0.8);
        let cells = [
            BenchmarkCell {
                benchmark: "x",
                result: &a,
            },
            BenchmarkCell {
                benchmark: "x",
                result: &b,
            },
        ];
        let rows = divergence_summary(&cells);
        let rho = rows
            .iter()
            .find(|r| r.grouping == Grouping::PerBenchmark && r.metric == Metric::SpearmanRho)
            .unwrap();
        assert_eq!(rho.best, Some(0.9));
        assert!((rho.avg.unwrap() - 0.85).abs() < 1e-15);
        let r2 = rows.iter().find(|r| r.metric == Metric::RSquared).unwrap();
        assert_eq!((r2.best, r2.n_undefined), (None, 2));

        let single = [BenchmarkCell {
            benchmark: "x",
            result: &a,
        }];
        for row in divergence_summary(&single)
            .iter()
            .filter(|r| r.metric == Metric::SpearmanRho)
        {
            assert_eq!(row.best, row.avg);
        }
    }
}
