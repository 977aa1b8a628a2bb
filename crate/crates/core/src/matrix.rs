//! Per-task performance data: the agent × task outcome matrix, its flat-file
//! representation, and the summary statistics derived from it.
//!
//! The flat CSV schema is one row per (agent, task) trial:
//!
//! ```text
//! agent_id,task_id,outcome,scaffold,model,submitted_at
//! ```
//!
//! Repeated rows for the same (agent, task) pair are treated as independent
//! trials and averaged into a fractional cell.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;

/// Exact header of the flat performance file.
pub const FLAT_HEADER: [&str; 6] = [
    "agent_id",
    "task_id",
    "outcome",
    "scaffold",
    "model",
    "submitted_at",
];

/// Scaffold label used when the source leaves the column blank.
pub const UNKNOWN_SCAFFOLD: &str = "unknown";

const SCORE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("missing cell: agent {agent_id:?} has no outcome for task {task_id:?}")]
    MissingCell { agent_id: String, task_id: String },
    #[error("outcome {value} outside [0, 1] at {context}")]
    Range { value: f64, context: String },
    #[error("non-finite value at {context}")]
    NonFinite { context: String },
    #[error("cannot parse date {value:?} for agent {agent_id:?} (expected YYYY-MM-DD)")]
    DateParse { value: String, agent_id: String },
    #[error("empty subset")]
    EmptySubset,
    #[error("degenerate matrix: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// One evaluated (model, scaffold) configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent_id: String,
    pub scaffold: String,
    pub model: String,
    pub submitted_at: NaiveDate,
}

impl AgentRecord {
    pub fn new(
        agent_id: impl Into<String>,
        scaffold: impl Into<String>,
        model: impl Into<String>,
        submitted_at: NaiveDate,
    ) -> Self {
        Self {
            agent_id: agent_id.into(),
            scaffold: normalize_scaffold(&scaffold.into()),
            model: model.into(),
            submitted_at,
        }
    }
}

/// Scaffold labels compare case-sensitively after trimming; blanks become `unknown`.
pub fn normalize_scaffold(raw: &str) -> String {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        UNKNOWN_SCAFFOLD.to_string()
    } else {
        trimmed.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
}

/// What to do with agents that do not cover every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Reject the file.
    #[default]
    Strict,
    /// Remove any agent with incomplete coverage.
    DropAgent,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub missing: MissingPolicy,
    /// Interpret `outcome` as a raw reward and map it to 1 when strictly positive.
    pub threshold_positive: bool,
}

/// Dense n × m matrix of outcomes in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMatrix {
    entries: Array2<f64>,
    agents: Vec<AgentRecord>,
    tasks: Vec<TaskRecord>,
    trials_per_cell: u32,
}

impl PerformanceMatrix {
    /// Builds a matrix and checks every structural invariant.
    pub fn new(
        entries: Array2<f64>,
        agents: Vec<AgentRecord>,
        tasks: Vec<TaskRecord>,
        trials_per_cell: u32,
    ) -> Result<Self, MatrixError> {
        let (n, m) = entries.dim();
        if n != agents.len() || m != tasks.len() {
            return Err(MatrixError::Dimension(format!(
                "entries are {n}x{m} but {} agents and {} tasks were given",
                agents.len(),
                tasks.len()
            )));
        }
        if trials_per_cell == 0 {
            return Err(MatrixError::Schema(
                "trials_per_cell must be positive".into(),
            ));
        }
        check_unique(agents.iter().map(|a| a.agent_id.as_str()), "agent_id")?;
        check_unique(tasks.iter().map(|t| t.task_id.as_str()), "task_id")?;
        for a in &agents {
            if a.scaffold.is_empty() {
                return Err(MatrixError::Schema(format!(
                    "agent {:?} has an empty scaffold",
                    a.agent_id
                )));
            }
        }
        for ((i, j), &v) in entries.indexed_iter() {
            if !v.is_finite() {
                return Err(MatrixError::NonFinite {
                    context: format!("cell ({}, {})", agents[i].agent_id, tasks[j].task_id),
                });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(MatrixError::Range {
                    value: v,
                    context: format!("cell ({}, {})", agents[i].agent_id, tasks[j].task_id),
                });
            }
            if trials_per_cell == 1 && v != 0.0 && v != 1.0 {
                return Err(MatrixError::Range {
                    value: v,
                    context: format!(
                        "cell ({}, {}) is fractional but each cell holds a single trial",
                        agents[i].agent_id, tasks[j].task_id
                    ),
                });
            }
        }
        Ok(Self {
            entries,
            agents,
            tasks,
            trials_per_cell,
        })
    }

    /// Binary matrix with generated ids; mostly useful for fixtures.
    pub fn from_binary_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(MatrixError::Dimension("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let entries = Array2::from_shape_vec((n, m), flat)
            .map_err(|e| MatrixError::Dimension(e.to_string()))?;
        let epoch = NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date");
        let agents = (0..n)
            .map(|i| {
                AgentRecord::new(
                    format!("a{i}"),
                    UNKNOWN_SCAFFOLD,
                    format!("m{i}"),
                    epoch + chrono::Days::new(i as u64),
                )
            })
            .collect();
        let tasks = (0..m)
            .map(|j| TaskRecord {
                task_id: format!("t{j}"),
            })
            .collect();
        Self::new(entries, agents, tasks, 1)
    }

    pub fn n_agents(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_tasks(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn agents(&self) -> &[AgentRecord] {
        &self.agents
    }

    pub fn tasks(&self) -> &[TaskRecord] {
        &self.tasks
    }

    pub fn trials_per_cell(&self) -> u32 {
        self.trials_per_cell
    }

    pub fn get(&self, agent: usize, task: usize) -> f64 {
        self.entries[[agent, task]]
    }

    pub fn row(&self, agent: usize) -> ArrayView1<'_, f64> {
        self.entries.row(agent)
    }

    pub fn column(&self, task: usize) -> ArrayView1<'_, f64> {
        self.entries.column(task)
    }

    pub fn agent_index(&self, agent_id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.agent_id == agent_id)
    }

    pub fn task_index(&self, task_id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.task_id == task_id)
    }

    /// Sub-matrix over the given agent rows and task columns, in the given order.
    pub fn submatrix(&self, agents: &[usize], tasks: &[usize]) -> Array2<f64> {
        self.entries.select(Axis(0), agents).select(Axis(1), tasks)
    }

    /// New matrix restricted to a subset of agents (all tasks kept).
    pub fn select_agents(&self, agents: &[usize]) -> Result<Self, MatrixError> {
        let entries = self.entries.select(Axis(0), agents);
        let records = agents.iter().map(|&i| self.agents[i].clone()).collect();
        Self::new(entries, records, self.tasks.clone(), self.trials_per_cell)
    }

    /// Agent indices ordered by (submitted_at, agent_id).
    pub fn submission_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_agents()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&self.agents[a], &self.agents[b]);
            ra.submitted_at
                .cmp(&rb.submitted_at)
                .then_with(|| ra.agent_id.cmp(&rb.agent_id))
        });
        order
    }

    /// Distinct scaffolds in order of first appearance, with member agent indices.
    pub fn scaffold_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            match groups.iter_mut().find(|(s, _)| *s == a.scaffold) {
                Some((_, members)) => members.push(i),
                None => groups.push((a.scaffold.clone(), vec![i])),
            }
        }
        groups
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<(), MatrixError> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(MatrixError::Schema(format!("duplicate {what} {id:?}")));
        }
    }
    Ok(())
}

/// Full-benchmark score per agent, aligned to agent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks the row-mean invariant against the source matrix.
    pub fn is_consistent_with(&self, matrix: &PerformanceMatrix) -> bool {
        let fresh = full_scores(matrix);
        self.len() == fresh.len()
            && self
                .0
                .iter()
                .zip(&fresh.0)
                .all(|(a, b)| (a - b).abs() <= SCORE_TOLERANCE)
    }
}

/// Mean outcome across all tasks for every agent.
pub fn full_scores(matrix: &PerformanceMatrix) -> ScoreVector {
    ScoreVector(row_means(matrix.entries.view()))
}

/// Row means of an arbitrary view; an empty column set yields zeros.
pub fn row_means(view: ArrayView2<'_, f64>) -> Vec<f64> {
    let m = view.ncols();
    view.rows()
        .into_iter()
        .map(|r| if m == 0 { 0.0 } else { r.sum() / m as f64 })
        .collect()
}

/// Per-task pass rate restricted to a subset of agents.
pub fn pass_rates(
    matrix: &PerformanceMatrix,
    agent_subset: &[usize],
) -> Result<Vec<f64>, MatrixError> {
    if agent_subset.is_empty() {
        return Err(MatrixError::EmptySubset);
    }
    if let Some(&bad) = agent_subset.iter().find(|&&i| i >= matrix.n_agents()) {
        return Err(MatrixError::Dimension(format!(
            "agent index {bad} out of range"
        )));
    }
    let denom = agent_subset.len() as f64;
    Ok((0..matrix.n_tasks())
        .map(|j| agent_subset.iter().map(|&i| matrix.get(i, j)).sum::<f64>() / denom)
        .collect())
}

/// Pass rates over every agent in the matrix.
pub fn all_pass_rates(matrix: &PerformanceMatrix) -> Vec<f64> {
    let all: Vec<usize> = (0..matrix.n_agents()).collect();
    pass_rates(matrix, &all).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgTaskRho {
    pub mean_rho: f64,
    /// Number of task pairs averaged.
    pub pairs: usize,
    /// Zero-variance columns left out of the pairing.
    pub excluded_constant: usize,
}

/// Mean pairwise Spearman correlation between task outcome columns.
pub fn avg_task_rho(matrix: &PerformanceMatrix) -> Result<AvgTaskRho, MatrixError> {
    if matrix.n_agents() < 3 {
        return Err(MatrixError::Degenerate("need at least 3 agents".into()));
    }
    let columns: Vec<Vec<f64>> = (0..matrix.n_tasks())
        .map(|j| matrix.column(j).to_vec())
        .filter(|c| c.iter().any(|&v| v != c[0]))
        .collect();
    let excluded_constant = matrix.n_tasks() - columns.len();
    if columns.len() < 2 {
        return Err(MatrixError::Degenerate(format!(
            "only {} non-constant task columns",
            columns.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..columns.len() {
        for b in (a + 1)..columns.len() {
            // Non-constant columns always have defined rank variance.
            let rho = metrics::spearman_rho(&columns[a], &columns[b])
                .ok()
                .flatten()
                .ok_or_else(|| MatrixError::Degenerate("undefined task correlation".into()))?;
            sum += rho;
            pairs += 1;
        }
    }
    Ok(AvgTaskRho {
        mean_rho: sum / pairs as f64,
        pairs,
        excluded_constant,
    })
}

/// Maps raw rewards to binary success: 1 where the reward is strictly positive.
pub fn threshold_rewards(raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MatrixError> {
    raw.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if v.is_finite() {
                        Ok(threshold_reward(v))
                    } else {
                        Err(MatrixError::NonFinite {
                            context: format!("raw[{i}][{j}]"),
                        })
                    }
                })
                .collect()
        })
        .collect()
}

pub fn threshold_reward(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Deserialize)]
struct FlatRow {
    agent_id: String,
    task_id: String,
    outcome: String,
    scaffold: String,
    model: String,
    submitted_at: String,
}

#[derive(Default)]
struct Cell {
    sum: f64,
    count: u32,
}

pub fn load_flat_csv(
    path: impl AsRef<Path>,
    options: IngestOptions,
) -> Result<PerformanceMatrix, MatrixError> {
    let file = File::open(path.as_ref())?;
    read_flat_csv(file, options)
}

/// Parses the flat one-row-per-trial format into a dense matrix.
pub fn read_flat_csv<R: Read>(
    reader: R,
    options: IngestOptions,
) -> Result<PerformanceMatrix, MatrixError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != FLAT_HEADER {
        return Err(MatrixError::Schema(format!(
            "expected header {:?}, found {:?}",
            FLAT_HEADER.join(","),
            got.join(",")
        )));
    }

    let mut agents: Vec<AgentRecord> = Vec::new();
    let mut agent_pos: HashMap<String, usize> = HashMap::new();
    let mut tasks: Vec<TaskRecord> = Vec::new();
    let mut task_pos: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), Cell> = HashMap::new();

    for (line, record) in rdr.deserialize::<FlatRow>().enumerate() {
        let row = record.map_err(|e| MatrixError::Schema(format!("row {}: {e}", line + 2)))?;
        let agent_id = row.agent_id.trim().to_string();
        let task_id = row.task_id.trim().to_string();
        if agent_id.is_empty() || task_id.is_empty() {
            return Err(MatrixError::Schema(format!(
                "row {}: empty agent_id or task_id",
                line + 2
            )));
        }
        let context = format!("row {} ({agent_id}, {task_id})", line + 2);
        let raw: f64 = row.outcome.trim().parse().map_err(|_| {
            MatrixError::Schema(format!(
                "{context}: outcome {:?} is not a number",
                row.outcome
            ))
        })?;
        if !raw.is_finite() {
            return Err(MatrixError::NonFinite { context });
        }
        let outcome = if options.threshold_positive {
            threshold_reward(raw)
        } else {
            raw
        };
        if !(0.0..=1.0).contains(&outcome) {
            return Err(MatrixError::Range {
                value: outcome,
                context,
            });
        }
        let date =
            NaiveDate::parse_from_str(row.submitted_at.trim(), "%Y-%m-%d").map_err(|_| {
                MatrixError::DateParse {
                    value: row.submitted_at.clone(),
                    agent_id: agent_id.clone(),
                }
            })?;
        let candidate = AgentRecord::new(agent_id.clone(), row.scaffold, row.model.trim(), date);

        let ai = match agent_pos.get(&agent_id) {
            Some(&ai) => {
                if agents[ai] != candidate {
                    return Err(MatrixError::Schema(format!(
                        "{context}: scaffold/model/submitted_at disagree with an earlier row for this agent"
                    )));
                }
                ai
            }
            None => {
                agent_pos.insert(agent_id, agents.len());
                agents.push(candidate);
                agents.len() - 1
            }
        };
        let ti = *task_pos.entry(task_id.clone()).or_insert_with(|| {
            tasks.push(TaskRecord { task_id });
            tasks.len() - 1
        });
        let cell = cells.entry((ai, ti)).or_default();
        cell.sum += outcome;
        cell.count += 1;
    }

    if agents.is_empty() || tasks.is_empty() {
        return Err(MatrixError::Schema("file contains no data rows".into()));
    }

    let mut keep: Vec<usize> = Vec::with_capacity(agents.len());
    for (ai, agent) in agents.iter().enumerate() {
        let missing = (0..tasks.len()).find(|&ti| !cells.contains_key(&(ai, ti)));
        match (missing, options.missing) {
            (None, _) => keep.push(ai),
            (Some(ti), MissingPolicy::Strict) => {
                return Err(MatrixError::MissingCell {
                    agent_id: agent.agent_id.clone(),
                    task_id: tasks[ti].task_id.clone(),
                })
            }
            (Some(_), MissingPolicy::DropAgent) => {}
        }
    }
    if keep.is_empty() {
        return Err(MatrixError::Degenerate(
            "every agent has incomplete task coverage".into(),
        ));
    }

    let trials = keep
        .iter()
        .flat_map(|&ai| (0..tasks.len()).map(move |ti| (ai, ti)))
        .map(|key| cells[&key].count)
        .max()
        .unwrap_or(1);
    let mut entries = Array2::zeros((keep.len(), tasks.len()));
    for (row, &ai) in keep.iter().enumerate() {
        for ti in 0..tasks.len() {
            let cell = &cells[&(ai, ti)];
            entries[[row, ti]] = cell.sum / f64::from(cell.count);
        }
    }
    let kept_agents = keep.iter().map(|&ai| agents[ai].clone()).collect();
    PerformanceMatrix::new(entries, kept_agents, tasks, trials)
}

/// Serializes to the flat schema. Cells that are an exact multiple of
/// `1 / trials_per_cell` are expanded into per-trial rows so that reading the
/// file back reproduces the matrix bit for bit.
pub fn write_flat_csv<W: Write>(matrix: &PerformanceMatrix, writer: W) -> Result<(), MatrixError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(FLAT_HEADER)?;
    let trials = matrix.trials_per_cell;
    for (i, agent) in matrix.agents.iter().enumerate() {
        let date = agent.submitted_at.format("%Y-%m-%d").to_string();
        for (j, task) in matrix.tasks.iter().enumerate() {
            let v = matrix.get(i, j);
            let mut emit = |outcome: String| {
                wtr.write_record([
                    agent.agent_id.as_str(),
                    task.task_id.as_str(),
                    outcome.as_str(),
                    agent.scaffold.as_str(),
                    agent.model.as_str(),
                    date.as_str(),
                ])
            };
            match expand_trials(v, trials) {
                Some(successes) => {
                    for t in 0..trials {
                        emit(if t < successes {
                            "1".into()
                        } else {
                            "0".into()
                        })?;
                    }
                }
                None => emit(format!("{v}"))?,
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

fn expand_trials(v: f64, trials: u32) -> Option<u32> {
    let successes = (v * f64::from(trials)).round();
    if successes < 0.0 || successes > f64::from(trials) {
        return None;
    }
    let successes = successes as u32;
    (f64::from(successes) / f64::from(trials) == v).then_some(successes)
}

pub fn save_flat_csv(
    matrix: &PerformanceMatrix,
    path: impl AsRef<Path>,
) -> Result<(), MatrixError> {
    let file = File::create(path.as_ref())?;
    write_flat_csv(matrix, std::io::BufWriter::new(file))
}
