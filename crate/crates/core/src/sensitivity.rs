//! Fixed-band sweep: how rank fidelity and task reduction trade off as the
//! mid-range band narrows.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrix::{all_pass_rates, PerformanceMatrix};
use crate::protocols::{run_protocol, Protocol, ProtocolError, ProtocolParams};
use crate::selection::{select_band, DifficultyBand, MidrangeRule, Strategy};

/// One band aggregated over datasets. Stds are population stds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSweepRow {
    pub band: DifficultyBand,
    pub mean_rho: Option<f64>,
    pub rho_std: Option<f64>,
    pub mean_reduction: f64,
    pub reduction_std: f64,
    /// Datasets with a defined rho for this band.
    pub n_benchmarks: usize,
    /// Datasets whose run failed or whose rho was undefined.
    pub n_skipped: usize,
    pub per_dataset: Vec<DatasetPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPoint {
    pub k: usize,
    pub m: usize,
    pub reduction: f64,
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub protocol: Protocol,
    pub rows: Vec<BandSweepRow>,
}

/// Fraction of tasks the band removes on all-agent pass rates.
pub fn reduction(matrix: &PerformanceMatrix, band: DifficultyBand) -> (usize, f64) {
    let k = select_band(&all_pass_rates(matrix), band).len();
    (k, 1.0 - k as f64 / matrix.n_tasks() as f64)
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

fn point(
    matrix: &PerformanceMatrix,
    band: DifficultyBand,
    protocol: Protocol,
    params: &ProtocolParams,
) -> DatasetPoint {
    let (k, reduction) = reduction(matrix, band);
    let params = ProtocolParams {
        rule: MidrangeRule::fixed(band),
        ..params.clone()
    };
    let (rho, skip_reason) = match run_protocol(matrix, protocol, Strategy::Midrange, &params) {
        Ok(r) => match r.pooled.spearman_rho {
            Some(rho) => (Some(rho), None),
            None => (None, Some("pooled rho undefined".to_string())),
        },
        Err(e) => (None, Some(e.to_string())),
    };
    DatasetPoint {
        k,
        m: matrix.n_tasks(),
        reduction,
        rho,
        skip_reason,
    }
}

/// Bands are reported widest first; the widening fallback is off for every band.
pub fn band_sweep(
    datasets: &[PerformanceMatrix],
    bands: &[DifficultyBand],
    protocol: Protocol,
    params: &ProtocolParams,
) -> Result<SweepReport, ProtocolError> {
    if datasets.is_empty() {
        return Err(ProtocolError::Infeasible {
            protocol,
            reason: "band sweep needs at least one dataset".into(),
        });
    }
    let mut ordered = bands.to_vec();
    // stable, so equal widths keep caller order
    ordered.sort_by(|a, b| b.width().total_cmp(&a.width()));

    let grid: Vec<(usize, usize)> = (0..ordered.len())
        .flat_map(|b| (0..datasets.len()).map(move |d| (b, d)))
        .collect();
    let points: Vec<DatasetPoint> = grid
        .par_iter()
        .map(|&(b, d)| point(&datasets[d], ordered[b], protocol, params))
        .collect();

    let rows = ordered
        .iter()
        .zip(points.chunks(datasets.len()))
        .map(|(&band, pts)| {
            let rhos: Vec<f64> = pts.iter().filter_map(|p| p.rho).collect();
            let reductions: Vec<f64> = pts.iter().map(|p| p.reduction).collect();
            let (mean_reduction, reduction_std) =
                mean_std(&reductions).expect("non-empty datasets");
            let rho = mean_std(&rhos);
            BandSweepRow {
                band,
                mean_rho: rho.map(|r| r.0),
                rho_std: rho.map(|r| r.1),
                mean_reduction,
                reduction_std,
                n_benchmarks: rhos.len(),
                n_skipped: pts.len() - rhos.len(),
                per_dataset: pts.to_vec(),
            }
        })
        .collect();
    Ok(SweepReport { protocol, rows })
}

pub const SWEEP_HEADER: [&str; 6] = [
    "band_lower",
    "band_upper",
    "mean_rho",
    "rho_std",
    "mean_reduction",
    "reduction_std",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn write_sweep_csv<W: Write>(rows: &[BandSweepRow], writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SWEEP_HEADER)?;
    for r in rows {
        wtr.write_record([
            format!("{:.2}", r.band.lower),
            format!("{:.2}", r.band.upper),
            fmt_opt(r.mean_rho),
            fmt_opt(r.rho_std),
            format!("{:.6}", r.mean_reduction),
            format!("{:.6}", r.reduction_std),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
