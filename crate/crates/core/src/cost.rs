//! Per-run savings from running k of N tasks, assuming cost scales linearly
//! with task count. Money is held in integer cents; the only rounding is
//! half-up to the cent when a saving is computed.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("budget k={k} is outside 1..={n}")]
    BudgetExceedsTasks { k: usize, n: usize },
    #[error("invalid cost model for {benchmark}: {reason}")]
    Invalid { benchmark: String, reason: String },
    #[error("cannot parse amount {0:?}")]
    Amount(String),
    #[error("unknown benchmark {0:?}")]
    UnknownBenchmark(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Whole cents.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub fn from_dollars(dollars: i64) -> Self {
        Cents(dollars * 100)
    }

    pub fn as_dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// `self · num / den`, rounded half-up to the cent.
    pub fn scale(self, num: u64, den: u64) -> Cents {
        assert!(den > 0 && self.0 >= 0);
        let product = self.0 as u128 * num as u128;
        let (q, r) = (product / den as u128, product % den as u128);
        let rounded = if 2 * r >= den as u128 { q + 1 } else { q };
        Cents(rounded as i64)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", self.0.abs() / 100, self.0.abs() % 100)
    }
}

impl FromStr for Cents {
    type Err = CostError;

    /// Accepts `140`, `140.5`, `$1,600.00`; more than two decimals is an error.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CostError::Amount(s.to_string());
        let clean: String = s
            .trim()
            .trim_start_matches('$')
            .chars()
            .filter(|&c| c != ',')
            .collect();
        let (whole, frac) = clean.split_once('.').unwrap_or((&clean, ""));
        if whole.is_empty() || frac.len() > 2 || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = whole.parse().map_err(|_| bad())?;
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        whole
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac_cents))
            .map(Cents)
            .ok_or_else(bad)
    }
}

/// Per-run cost of the full benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub benchmark: String,
    pub n_tasks_full: usize,
    pub median_cost_per_run: Cents,
    pub cost_per_run_range: (Cents, Cents),
}

impl CostModel {
    pub fn new(
        benchmark: impl Into<String>,
        n_tasks_full: usize,
        median: Cents,
        min: Cents,
        max: Cents,
    ) -> Result<Self, CostError> {
        let benchmark = benchmark.into();
        let invalid = |reason: &str| CostError::Invalid {
            benchmark: benchmark.clone(),
            reason: reason.to_string(),
        };
        if n_tasks_full == 0 {
            return Err(invalid("n_tasks must be positive"));
        }
        if min.0 < 0 || !(min <= median && median <= max) {
            return Err(invalid("need 0 <= min <= median <= max"));
        }
        Ok(Self {
            benchmark,
            n_tasks_full,
            median_cost_per_run: median,
            cost_per_run_range: (min, max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub benchmark: String,
    pub k: usize,
    pub n_tasks: usize,
    pub reduction: f64,
    pub median: Cents,
    pub range: (Cents, Cents),
}

/// `cost · (1 − k/N)` for the median and both range ends.
pub fn estimate_savings(model: &CostModel, k_selected: usize) -> Result<Savings, CostError> {
    let n = model.n_tasks_full;
    if k_selected == 0 || k_selected > n {
        return Err(CostError::BudgetExceedsTasks { k: k_selected, n });
    }
    let (kept, total) = ((n - k_selected) as u64, n as u64);
    let (lo, hi) = model.cost_per_run_range;
    Ok(Savings {
        benchmark: model.benchmark.clone(),
        k: k_selected,
        n_tasks: n,
        reduction: kept as f64 / total as f64,
        median: model.median_cost_per_run.scale(kept, total),
        range: (lo.scale(kept, total), hi.scale(kept, total)),
    })
}

pub const COST_HEADER: [&str; 5] = [
    "benchmark",
    "n_tasks",
    "median_cost",
    "min_cost",
    "max_cost",
];

/// Published per-run costs. The low end of each range is the cheapest
/// per-task cost times the task count, since only per-task minima are listed.
pub const BUILTIN_COSTS: &str = "\
benchmark,n_tasks,median_cost,min_cost,max_cost
swebench,50,163,4.00,1600
corebench,45,66,2.25,510
gaia,165,140,8.25,2829
mind2web,300,276,6.00,1610
scicode,65,67,0.00,625
taubench,50,22,0.50,180
usaco,307,56,0.00,276
";

pub fn read_cost_csv<R: Read>(reader: R) -> Result<Vec<CostModel>, CostError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != COST_HEADER {
        return Err(CostError::Invalid {
            benchmark: "<header>".into(),
            reason: format!("expected {}", COST_HEADER.join(",")),
        });
    }
    let mut models = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let n: usize = rec[1]
            .parse()
            .map_err(|_| CostError::Amount(rec[1].to_string()))?;
        models.push(CostModel::new(
            &rec[0],
            n,
            rec[2].parse()?,
            rec[3].parse()?,
            rec[4].parse()?,
        )?);
    }
    Ok(models)
}

pub fn load_cost_csv(path: impl AsRef<Path>) -> Result<Vec<CostModel>, CostError> {
    read_cost_csv(std::fs::File::open(path)?)
}

pub fn builtin_cost_models() -> Vec<CostModel> {
    read_cost_csv(BUILTIN_COSTS.as_bytes()).expect("built-in table parses")
}

pub fn find_model<'a>(
    models: &'a [CostModel],
    benchmark: &str,
) -> Result<&'a CostModel, CostError> {
    models
        .iter()
        .find(|m| m.benchmark.eq_ignore_ascii_case(benchmark))
        .ok_or_else(|| CostError::UnknownBenchmark(benchmark.to_string()))
}

pub const SAVINGS_HEADER: [&str; 7] = [
    "benchmark",
    "n_tasks",
    "k",
    "reduction",
    "median_savings",
    "min_savings",
    "max_savings",
];

pub fn write_savings_csv<W: Write>(rows: &[Savings], writer: W) -> Result<(), CostError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SAVINGS_HEADER)?;
    for s in rows {
        wtr.write_record([
            s.benchmark.clone(),
            s.n_tasks.to_string(),
            s.k.to_string(),
            format!("{:.4}", s.reduction),
            s.median.to_string(),
            s.range.0.to_string(),
            s.range.1.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaia() -> CostModel {
        builtin_cost_models()
            .into_iter()
            .find(|m| m.benchmark == "gaia")
            .unwrap()
    }

    #[test]
    fn parses_amounts() {
        assert_eq!("140".parse::<Cents>().unwrap(), Cents(14000));
        assert_eq!("$1,600.5".parse::<Cents>().unwrap(), Cents(160050));
        assert_eq!("0.08".parse::<Cents>().unwrap(), Cents(8));
        assert!("1.005".parse::<Cents>().is_err());
        assert!("-3".parse::<Cents>().is_err());
        assert_eq!(Cents(968).to_string(), "9.68");
    }

    #[test]
    fn half_up_rounding() {
        // 0.05 * 1/2 = 0.025 -> 0.03
        assert_eq!(Cents(5).scale(1, 2), Cents(3));
        assert_eq!(Cents(5).scale(1, 3), Cents(2));
    }

    #[test]
    fn savings_examples() {
        let g = gaia();
        assert_eq!(estimate_savings(&g, 165).unwrap().median, Cents(0));
        // 140 * 83 / 165 = 70.4242...
        let s = estimate_savings(&g, 82).unwrap();
        assert_eq!(s.median, Cents(7042));
        assert!((s.median.as_dollars() - 70.3).abs() < 0.5);
        let tau = find_model(&builtin_cost_models(), "taubench")
            .unwrap()
            .clone();
        assert_eq!(estimate_savings(&tau, 28).unwrap().median, Cents(968));
        assert!(matches!(
            estimate_savings(&g, 0),
            Err(CostError::BudgetExceedsTasks { .. })
        ));
        assert!(matches!(
            estimate_savings(&g, 166),
            Err(CostError::BudgetExceedsTasks { .. })
        ));
    }

    #[test]
    fn savings_decrease_in_k() {
        let g = gaia();
        let med: Vec<Cents> = (1..=165)
            .map(|k| estimate_savings(&g, k).unwrap().median)
            .collect();
        assert!(med.windows(2).all(|w| w[0] >= w[1]));
        // k = 1 approaches the full cost
        assert!(Cents(14000).0 - med[0].0 <= 85);
    }

    #[test]
    fn rejects_inconsistent_model() {
        assert!(CostModel::new("x", 10, Cents(100), Cents(200), Cents(300)).is_err());
        let bad = "benchmark,n_tasks,median_cost,min_cost,max_cost\nx,0,1,1,1\n";
        assert!(read_cost_csv(bad.as_bytes()).is_err());
    }
}
