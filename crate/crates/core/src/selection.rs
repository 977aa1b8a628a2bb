//! Task-selection strategies.
//!
//! Every strategy works on task indices. [`SelectionResult`] attaches the task
//! and agent ids for serialization.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;
use crate::matrix::PerformanceMatrix;
use crate::ridge::{KernelLoo, RidgeError};
use crate::rng;

/// Slack for inclusive band endpoints, absorbs rounding in fractional pass rates.
const BAND_EPS: f64 = 1e-12;
/// Decile edges 0.1, 0.2, ..., 0.9.
const DECILE_EDGES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Midrange,
    Greedy,
    Random,
    Easiest,
    Hardest,
    Stratified,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Midrange,
        Strategy::Greedy,
        Strategy::Random,
        Strategy::Easiest,
        Strategy::Hardest,
        Strategy::Stratified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Midrange => "midrange",
            Strategy::Greedy => "greedy",
            Strategy::Random => "random",
            Strategy::Easiest => "easiest",
            Strategy::Hardest => "hardest",
            Strategy::Stratified => "stratified",
        }
    }

    pub fn is_seeded(self) -> bool {
        matches!(self, Strategy::Random | Strategy::Stratified)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("fewer than {:.0}% of {n_tasks} tasks fall in any band: {}", min_fraction * 100.0, format_attempts(.attempts))]
    InsufficientBand {
        attempts: Vec<BandAttempt>,
        n_tasks: usize,
        min_fraction: f64,
    },
    #[error("budget {k} exceeds the {m} available tasks")]
    BudgetExceedsTasks { k: usize, m: usize },
    #[error("invalid band [{lower}, {upper}]")]
    InvalidBand { lower: f64, upper: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
}

fn format_attempts(attempts: &[BandAttempt]) -> String {
    attempts
        .iter()
        .map(|a| format!("{} -> {}", a.band, a.selected))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Inclusive pass-rate interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBand {
    pub lower: f64,
    pub upper: f64,
}

impl DifficultyBand {
    pub fn new(lower: f64, upper: f64) -> Result<Self, SelectionError> {
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower >= upper {
            return Err(SelectionError::InvalidBand { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, rate: f64) -> bool {
        rate >= self.lower - BAND_EPS && rate <= self.upper + BAND_EPS
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl Default for DifficultyBand {
    fn default() -> Self {
        Self {
            lower: defaults::BAND_LOWER,
            upper: defaults::BAND_UPPER,
        }
    }
}

impl fmt::Display for DifficultyBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.2}, {:.2}]", self.lower, self.upper)
    }
}

impl FromStr for DifficultyBand {
    type Err = String;

    /// Parses `lower,upper` or `lower:upper`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (l, u) = s
            .split_once([',', ':'])
            .ok_or_else(|| format!("band {s:?} must look like 0.30,0.70"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("band {s:?}: {e}"))
        };
        DifficultyBand::new(parse(l)?, parse(u)?).map_err(|e| e.to_string())
    }
}

/// Outcome of trying one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandAttempt {
    pub band: DifficultyBand,
    pub selected: usize,
}

/// Mid-range filter configuration: primary band, fallbacks, and the minimum
/// fraction of tasks a band must capture to be accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidrangeRule {
    pub band: DifficultyBand,
    pub widen: Vec<DifficultyBand>,
    pub min_fraction: f64,
}

impl Default for MidrangeRule {
    fn default() -> Self {
        Self {
            band: DifficultyBand::default(),
            widen: defaults::widening_ladder(),
            min_fraction: defaults::MIN_BAND_FRACTION,
        }
    }
}

impl MidrangeRule {
    /// A single band with no fallback that accepts any non-empty selection.
    pub fn fixed(band: DifficultyBand) -> Self {
        Self {
            band,
            widen: Vec::new(),
            min_fraction: 0.0,
        }
    }
}

/// Indices chosen by a strategy plus how they were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub strategy: Strategy,
    pub tasks: Vec<usize>,
    pub band_used: Option<DifficultyBand>,
    pub seed: Option<u64>,
    /// Bands tried by the mid-range filter, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trail: Vec<BandAttempt>,
}

impl Selection {
    pub fn k(&self) -> usize {
        self.tasks.len()
    }

    fn plain(strategy: Strategy, tasks: Vec<usize>, seed: Option<u64>) -> Self {
        Self {
            strategy,
            tasks,
            band_used: None,
            seed,
            trail: Vec::new(),
        }
    }
}

fn check_budget(k: usize, m: usize) -> Result<(), SelectionError> {
    if k > m {
        return Err(SelectionError::BudgetExceedsTasks { k, m });
    }
    if k == 0 {
        return Err(SelectionError::Invalid("budget must be positive".into()));
    }
    Ok(())
}

/// Every task whose rate lies in the band, no fallback.
pub fn select_band(rates: &[f64], band: DifficultyBand) -> Vec<usize> {
    rates
        .iter()
        .enumerate()
        .filter(|(_, &r)| band.contains(r))
        .map(|(j, _)| j)
        .collect()
}

/// Mid-range filter with the default 10% acceptance rule.
pub fn select_midrange(
    rates: &[f64],
    band: DifficultyBand,
    widen_policy: &[DifficultyBand],
) -> Result<Selection, SelectionError> {
    select_midrange_with(
        rates,
        &MidrangeRule {
            band,
            widen: widen_policy.to_vec(),
            min_fraction: defaults::MIN_BAND_FRACTION,
        },
    )
}

pub fn select_midrange_with(
    rates: &[f64],
    rule: &MidrangeRule,
) -> Result<Selection, SelectionError> {
    let m = rates.len();
    if m == 0 {
        return Err(SelectionError::Invalid("no tasks".into()));
    }
    let mut attempts = Vec::new();
    let candidates =
        std::iter::once(rule.band).chain(rule.widen.iter().copied().filter(|b| *b != rule.band));
    for band in candidates {
        let tasks = select_band(rates, band);
        attempts.push(BandAttempt {
            band,
            selected: tasks.len(),
        });
        let enough = tasks.len() as f64 >= rule.min_fraction * m as f64 - 1e-9;
        if !tasks.is_empty() && enough {
            return Ok(Selection {
                strategy: Strategy::Midrange,
                tasks,
                band_used: Some(band),
                seed: None,
                trail: attempts,
            });
        }
    }
    Err(SelectionError::InsufficientBand {
        attempts,
        n_tasks: m,
        min_fraction: rule.min_fraction,
    })
}

/// The fold budget: size of the mid-range selection on training pass rates.
pub fn matched_budget(
    train_rates: &[f64],
    rule: &MidrangeRule,
) -> Result<Selection, SelectionError> {
    select_midrange_with(train_rates, rule)
}

/// [`matched_budget`] computed directly from a training matrix.
pub fn matched_budget_for(
    train: &PerformanceMatrix,
    rule: &MidrangeRule,
) -> Result<usize, SelectionError> {
    if train.n_agents() == 0 {
        return Err(SelectionError::Invalid("no training agents".into()));
    }
    Ok(matched_budget(&crate::matrix::all_pass_rates(train), rule)?.k())
}

/// Greedy selection together with the LOO R² after each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub selection: Selection,
    pub objective_trace: Vec<Option<f64>>,
}

/// Forward selection maximizing leave-one-agent-out ridge R².
pub fn select_greedy(
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    k: usize,
    alpha: f64,
) -> Result<GreedyOutcome, SelectionError> {
    let (n, m) = x_train.dim();
    check_budget(k, m)?;
    if n != y_train.len() {
        return Err(SelectionError::Invalid(format!(
            "{n} rows vs {} targets",
            y_train.len()
        )));
    }
    if n < 3 {
        return Err(SelectionError::Invalid(format!(
            "greedy needs at least 3 agents, got {n}"
        )));
    }
    let mut state = KernelLoo::new(y_train, alpha)?;
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut chosen = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let pool = x_train.select(Axis(1), &remaining);
        let scores = state.candidate_objectives(pool.view());
        let mut best = 0;
        for (pos, s) in scores.iter().enumerate().skip(1) {
            if better(*s, scores[best]) {
                best = pos;
            }
        }
        let task = remaining.remove(best);
        state.add(x_train.column(task))?;
        chosen.push(task);
        trace.push(scores[best]);
    }
    Ok(GreedyOutcome {
        selection: Selection::plain(Strategy::Greedy, chosen, None),
        objective_trace: trace,
    })
}

/// Strictly greater, with undefined ranked below everything.
fn better(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x > y,
        (Some(_), None) => true,
        _ => false,
    }
}

/// Uniform sample of k distinct tasks, sorted ascending.
pub fn select_random(m: usize, k: usize, seed: u64) -> Result<Selection, SelectionError> {
    select_random_stream(m, k, seed, 0)
}

/// [`select_random`] on an explicit substream, for per-fold draws.
pub fn select_random_stream(
    m: usize,
    k: usize,
    seed: u64,
    stream: u64,
) -> Result<Selection, SelectionError> {
    check_budget(k, m)?;
    let mut rng = rng::stream(seed, stream);
    let mut tasks = index::sample(&mut rng, m, k).into_vec();
    tasks.sort_unstable();
    Ok(Selection::plain(Strategy::Random, tasks, Some(seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extreme {
    Easiest,
    Hardest,
}

/// The k easiest (highest rate) or hardest (lowest rate) tasks; ties by index.
pub fn select_extreme(
    rates: &[f64],
    k: usize,
    which: Extreme,
) -> Result<Selection, SelectionError> {
    check_budget(k, rates.len())?;
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| {
        let by_rate = match which {
            Extreme::Easiest => rates[b].total_cmp(&rates[a]),
            Extreme::Hardest => rates[a].total_cmp(&rates[b]),
        };
        by_rate.then(a.cmp(&b))
    });
    order.truncate(k);
    let strategy = match which {
        Extreme::Easiest => Strategy::Easiest,
        Extreme::Hardest => Strategy::Hardest,
    };
    Ok(Selection::plain(strategy, order, None))
}

/// Decile of a pass rate: [0, 0.1) -> 0, ..., [0.9, 1.0] -> 9.
pub fn decile(rate: f64) -> usize {
    DECILE_EDGES.iter().filter(|&&edge| rate >= edge).count()
}

/// Per-decile quota: ⌊k/10⌋ for each non-empty decile (capped at its size),
/// then the rest one at a time round-robin from the lowest non-empty decile,
/// skipping deciles already exhausted.
pub fn stratified_quota(decile_sizes: &[usize; 10], k: usize) -> [usize; 10] {
    let mut quota = [0usize; 10];
    let base = k / 10;
    for d in 0..10 {
        if decile_sizes[d] > 0 {
            quota[d] = base.min(decile_sizes[d]);
        }
    }
    let total: usize = decile_sizes.iter().sum();
    let mut left = k.min(total) - quota.iter().sum::<usize>();
    while left > 0 {
        for d in 0..10 {
            if left == 0 {
                break;
            }
            if quota[d] < decile_sizes[d] {
                quota[d] += 1;
                left -= 1;
            }
        }
    }
    quota
}

pub fn select_stratified(rates: &[f64], k: usize, seed: u64) -> Result<Selection, SelectionError> {
    select_stratified_stream(rates, k, seed, 0)
}

pub fn select_stratified_stream(
    rates: &[f64],
    k: usize,
    seed: u64,
    stream: u64,
) -> Result<Selection, SelectionError> {
    check_budget(k, rates.len())?;
    let mut members: [Vec<usize>; 10] = Default::default();
    for (j, &r) in rates.iter().enumerate() {
        members[decile(r)].push(j);
    }
    let sizes: [usize; 10] = std::array::from_fn(|d| members[d].len());
    let quota = stratified_quota(&sizes, k);
    let mut rng = rng::stream(seed, stream);
    let mut tasks = Vec::with_capacity(k);
    for d in 0..10 {
        if quota[d] == 0 {
            continue;
        }
        let picks = index::sample(&mut rng, members[d].len(), quota[d]);
        tasks.extend(picks.iter().map(|p| members[d][p]));
    }
    tasks.sort_unstable();
    Ok(Selection::plain(Strategy::Stratified, tasks, Some(seed)))
}

/// Two readings of set overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub intersection: usize,
    /// |A ∩ B| / |A ∪ B|
    pub jaccard: f64,
    /// |A ∩ B| / min(|A|, |B|)
    pub min_normalized: f64,
}

pub fn overlap_fraction(a: &[usize], b: &[usize]) -> Overlap {
    let sa: BTreeSet<usize> = a.iter().copied().collect();
    let sb: BTreeSet<usize> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    let smaller = sa.len().min(sb.len());
    Overlap {
        intersection: inter,
        jaccard: if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        },
        min_normalized: if smaller == 0 {
            0.0
        } else {
            inter as f64 / smaller as f64
        },
    }
}

/// Serializable selection with task and agent ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub strategy: Strategy,
    pub task_ids: Vec<String>,
    pub budget_k: usize,
    pub band_used: Option<DifficultyBand>,
    pub seed: Option<u64>,
    pub train_agent_ids: Vec<String>,
}

impl SelectionResult {
    pub fn from_selection(
        selection: &Selection,
        matrix: &PerformanceMatrix,
        train_agents: &[usize],
    ) -> Self {
        Self {
            strategy: selection.strategy,
            task_ids: selection
                .tasks
                .iter()
                .map(|&j| matrix.tasks()[j].task_id.clone())
                .collect(),
            budget_k: selection.k(),
            band_used: selection.band_used,
            seed: selection.seed,
            train_agent_ids: train_agents
                .iter()
                .map(|&i| matrix.agents()[i].agent_id.clone())
                .collect(),
        }
    }

    /// Resolves the task ids against a matrix, failing on unknown ids.
    pub fn task_indices(&self, matrix: &PerformanceMatrix) -> Result<Vec<usize>, SelectionError> {
        self.task_ids
            .iter()
            .map(|id| {
                matrix.task_index(id).ok_or_else(|| {
                    SelectionError::Invalid(format!("task {id:?} is not in the dataset"))
                })
            })
            .collect()
    }

    /// Checks size, uniqueness, and the band/strategy pairing.
    pub fn validate(&self) -> Result<(), SelectionError> {
        let unique: BTreeSet<&String> = self.task_ids.iter().collect();
        if unique.len() != self.task_ids.len() {
            return Err(SelectionError::Invalid("duplicate task ids".into()));
        }
        if self.task_ids.len() != self.budget_k {
            return Err(SelectionError::Invalid(format!(
                "budget_k {} but {} task ids",
                self.budget_k,
                self.task_ids.len()
            )));
        }
        if self.band_used.is_some() != (self.strategy == Strategy::Midrange) {
            return Err(SelectionError::Invalid(
                "band_used must be set exactly for midrange".into(),
            ));
        }
        Ok(())
    }
}

/// JSON document written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    #[serde(flatten)]
    pub result: SelectionResult,
    pub tool_version: String,
    pub prng: String,
    #[serde(default)]
    pub band_trail: Vec<BandAttempt>,
}

impl SelectionReport {
    pub fn new(result: SelectionResult, trail: Vec<BandAttempt>) -> Self {
        Self {
            result,
            tool_version: crate::VERSION.to_string(),
            prng: rng::PRNG_ALGORITHM.to_string(),
            band_trail: trail,
        }
    }
}
