//! Ridge regression on selected task columns.
//!
//! Fits are `ŷ = X_S β` with no intercept unless explicitly requested, solved
//! through a Cholesky factorization of the k × k normal equations.
//!
//! Leave-one-agent-out residuals use the hat-matrix identity
//! `e_i = (y_i − ŷ_i) / (1 − H_ii)`. Greedy selection needs the same quantity
//! for many candidate columns at once, so [`KernelLoo`] tracks it in the
//! n × n dual form `A = X_S X_Sᵀ + αI`, where `H = I − α A⁻¹` and the residual
//! reduces to `(A⁻¹y)_i / (A⁻¹)_ii`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::rng;

/// Pivots below this fraction of the largest diagonal entry count as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;
/// Largest leverage the LOO shortcut accepts.
const MAX_LEVERAGE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RidgeError {
    #[error("normal equations are singular (alpha = {alpha})")]
    SingularSystem { alpha: f64 },
    #[error("leverage of agent {index} is {leverage}, LOO shortcut undefined")]
    LeverageOne { index: usize, leverage: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub alpha: f64,
    /// Task column indices the coefficients refer to, in order.
    pub selected_tasks: Vec<usize>,
    /// Only present for fits made with [`fit_ridge_with_intercept`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
}

impl RidgeFit {
    pub fn with_tasks(mut self, tasks: Vec<usize>) -> Self {
        self.selected_tasks = tasks;
        self
    }
}

/// In-place lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &mut Array2<f64>, alpha: f64) -> Result<(), RidgeError> {
    let k = a.nrows();
    let scale = (0..k)
        .map(|i| a[[i, i]].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for j in 0..k {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= a[[j, p]] * a[[j, p]];
        }
        if d <= PIVOT_TOLERANCE * scale {
            return Err(RidgeError::SingularSystem { alpha });
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..k {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= a[[i, p]] * a[[j, p]];
            }
            a[[i, j]] = s / d;
        }
        for i in 0..j {
            a[[i, j]] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the lower factor.
fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let k = l.nrows();
    let mut z = b.to_owned();
    for i in 0..k {
        let mut s = z[i];
        for p in 0..i {
            s -= l[[i, p]] * z[p];
        }
        z[i] = s / l[[i, i]];
    }
    for i in (0..k).rev() {
        let mut s = z[i];
        for p in (i + 1)..k {
            s -= l[[p, i]] * z[p];
        }
        z[i] = s / l[[i, i]];
    }
    z
}

fn check_shapes(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<(), RidgeError> {
    if x.nrows() != y.len() {
        return Err(RidgeError::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(RidgeError::Invalid("no columns selected".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(RidgeError::Invalid(format!(
            "alpha must be a nonnegative number, got {alpha}"
        )));
    }
    Ok(())
}

fn gram_factor(x: ArrayView2<'_, f64>, alpha: f64) -> Result<Array2<f64>, RidgeError> {
    let mut g = x.t().dot(&x);
    for i in 0..g.nrows() {
        g[[i, i]] += alpha;
    }
    cholesky(&mut g, alpha)?;
    Ok(g)
}

/// Ridge fit without intercept.
pub fn fit_ridge(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<RidgeFit, RidgeError> {
    check_shapes(x, y, alpha)?;
    let l = gram_factor(x, alpha)?;
    let xty = x.t().dot(&ArrayView1::from(y));
    let beta = cholesky_solve(&l, xty.view());
    Ok(RidgeFit {
        coefficients: beta.to_vec(),
        alpha,
        selected_tasks: (0..x.ncols()).collect(),
        intercept: None,
    })
}

/// Ridge fit on centered columns with an unpenalized intercept.
pub fn fit_ridge_with_intercept(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    alpha: f64,
) -> Result<RidgeFit, RidgeError> {
    check_shapes(x, y, alpha)?;
    let col_means = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let xc = &x - &col_means;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut fit = fit_ridge(xc.view(), &yc, alpha)?;
    let shift: f64 = col_means
        .iter()
        .zip(&fit.coefficients)
        .map(|(m, b)| m * b)
        .sum();
    fit.intercept = Some(y_mean - shift);
    Ok(fit)
}

/// Raw (unclamped) predictions for new rows.
pub fn predict(fit: &RidgeFit, x_new: ArrayView2<'_, f64>) -> Result<Vec<f64>, RidgeError> {
    if x_new.ncols() != fit.coefficients.len() {
        return Err(RidgeError::DimensionMismatch(format!(
            "fit has {} coefficients, input has {} columns",
            fit.coefficients.len(),
            x_new.ncols()
        )));
    }
    let beta = ArrayView1::from(&fit.coefficients[..]);
    let offset = fit.intercept.unwrap_or(0.0);
    Ok(x_new.dot(&beta).iter().map(|v| v + offset).collect())
}

/// Leave-one-out predictions through the hat-matrix diagonal.
pub fn loo_predictions(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    alpha: f64,
) -> Result<Vec<f64>, RidgeError> {
    check_shapes(x, y, alpha)?;
    let l = gram_factor(x, alpha)?;
    let yv = ArrayView1::from(y);
    let beta = cholesky_solve(&l, x.t().dot(&yv).view());
    let fitted = x.dot(&beta);
    let mut out = Vec::with_capacity(y.len());
    for (i, row) in x.rows().into_iter().enumerate() {
        let z = cholesky_solve(&l, row);
        let h = row.dot(&z);
        if h >= MAX_LEVERAGE {
            return Err(RidgeError::LeverageOne {
                index: i,
                leverage: h,
            });
        }
        let resid = (y[i] - fitted[i]) / (1.0 - h);
        out.push(y[i] - resid);
    }
    Ok(out)
}

/// R² of leave-one-agent-out predictions; `None` when `y` is constant.
pub fn loao_r2(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<Option<f64>, RidgeError> {
    if y.len() < 3 {
        return Err(RidgeError::Invalid(format!(
            "need at least 3 agents, got {}",
            y.len()
        )));
    }
    let preds = loo_predictions(x, y, alpha)?;
    Ok(metrics::r_squared(&preds, y).expect("validated lengths"))
}

/// Incremental leave-one-out R² for forward selection, in dual form.
#[derive(Debug, Clone)]
pub struct KernelLoo {
    alpha: f64,
    y: Array1<f64>,
    ss_tot: f64,
    kernel: Array2<f64>,
    /// (K + αI)⁻¹
    inverse: Array2<f64>,
    /// inverse · y
    inv_y: Array1<f64>,
    columns: usize,
}

impl KernelLoo {
    pub fn new(y: &[f64], alpha: f64) -> Result<Self, RidgeError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(RidgeError::Invalid(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let n = y.len();
        let y = Array1::from(y.to_vec());
        let mean = y.sum() / n as f64;
        let ss_tot = y.iter().map(|v| (v - mean).powi(2)).sum();
        let inverse = Array2::eye(n) / alpha;
        let inv_y = &y / alpha;
        Ok(Self {
            alpha,
            y,
            ss_tot,
            kernel: Array2::zeros((n, n)),
            inverse,
            inv_y,
            columns: 0,
        })
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    fn r2_from(&self, residual_sq: f64) -> Option<f64> {
        (self.ss_tot > 0.0).then(|| 1.0 - residual_sq / self.ss_tot)
    }

    /// LOO R² of the current column set (zero columns means predicting 0).
    pub fn objective(&self) -> Option<f64> {
        let ss: f64 = (0..self.y.len())
            .map(|i| (self.inv_y[i] / self.inverse[[i, i]]).powi(2))
            .sum();
        self.r2_from(ss)
    }

    /// LOO R² for each candidate column if it were added next.
    pub fn candidate_objectives(&self, candidates: ArrayView2<'_, f64>) -> Vec<Option<f64>> {
        let u = self.inverse.dot(&candidates);
        let n = self.y.len();
        (0..candidates.ncols())
            .map(|c| {
                let uc = u.column(c);
                let s = 1.0 + candidates.column(c).dot(&uc);
                let uy = uc.dot(&self.y);
                let ss: f64 = (0..n)
                    .map(|i| {
                        let num = self.inv_y[i] - uc[i] * uy / s;
                        let den = self.inverse[[i, i]] - uc[i] * uc[i] / s;
                        (num / den).powi(2)
                    })
                    .sum();
                self.r2_from(ss)
            })
            .collect()
    }

    /// Adds a column and refactorizes the n × n system from scratch.
    pub fn add(&mut self, column: ArrayView1<'_, f64>) -> Result<(), RidgeError> {
        let n = self.y.len();
        if column.len() != n {
            return Err(RidgeError::DimensionMismatch(format!(
                "column has {} rows, expected {n}",
                column.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                self.kernel[[i, j]] += column[i] * column[j];
            }
        }
        let mut a = self.kernel.clone();
        for i in 0..n {
            a[[i, i]] += self.alpha;
        }
        cholesky(&mut a, self.alpha)?;
        let mut inverse = Array2::zeros((n, n));
        for j in 0..n {
            let mut e = Array1::zeros(n);
            e[j] = 1.0;
            inverse.column_mut(j).assign(&cholesky_solve(&a, e.view()));
        }
        self.inv_y = inverse.dot(&self.y);
        self.inverse = inverse;
        self.columns += 1;
        Ok(())
    }
}

/// Percentile bootstrap interval of ridge predictions, resampling training agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn bootstrap_intervals(
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    x_new: ArrayView2<'_, f64>,
    alpha: f64,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<PredictionInterval>, RidgeError> {
    if !(0.0 < level && level < 1.0) {
        return Err(RidgeError::Invalid(format!(
            "interval level must be in (0, 1), got {level}"
        )));
    }
    if resamples == 0 {
        return Err(RidgeError::Invalid("resamples must be positive".into()));
    }
    let point = predict(&fit_ridge(x_train, y_train, alpha)?, x_new)?;
    let n = y_train.len();
    let mut rng = rng::stream(seed, 0);
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); x_new.nrows()];
    for _ in 0..resamples {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let xs = x_train.select(Axis(0), &idx);
        let ys: Vec<f64> = idx.iter().map(|&i| y_train[i]).collect();
        // alpha > 0 keeps every resample solvable.
        let fit = fit_ridge(xs.view(), &ys, alpha)?;
        for (slot, p) in draws.iter_mut().zip(predict(&fit, x_new)?) {
            slot.push(p);
        }
    }
    let tail = (1.0 - level) / 2.0;
    Ok(draws
        .into_iter()
        .zip(point)
        .map(|(mut d, point)| {
            d.sort_by(f64::total_cmp);
            PredictionInterval {
                point,
                lower: quantile_sorted(&d, tail),
                upper: quantile_sorted(&d, 1.0 - tail),
            }
        })
        .collect())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_design_interpolates() {
        let x = Array2::<f64>::eye(3);
        let fit = fit_ridge(x.view(), &[1.0, 2.0, 3.0], 1e-12).unwrap();
        for (b, want) in fit.coefficients.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - want).abs() < 1e-9);
        }
        let back = predict(&fit, x.view()).unwrap();
        assert!((back[2] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_column_scalar_closed_form() {
        let y = [0.2, 0.4, 0.6, 0.9];
        let x = Array2::from_shape_vec((4, 1), y.to_vec()).unwrap();
        let fit = fit_ridge(x.view(), &y, 1.0).unwrap();
        let yty: f64 = y.iter().map(|v| v * v).sum();
        assert!((fit.coefficients[0] - yty / (yty + 1.0)).abs() < 1e-14);
        assert!(fit.coefficients[0] < 1.0);
    }

    #[test]
    fn zero_alpha_rank_deficient_is_singular() {
        let x = array![[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(
            fit_ridge(x.view(), &[1.0, 0.0, 1.0], 0.0),
            Err(RidgeError::SingularSystem { .. })
        ));
    }

    #[test]
    fn predict_shapes() {
        let fit = RidgeFit {
            coefficients: vec![0.5, 0.25],
            alpha: 1.0,
            selected_tasks: vec![3, 7],
            intercept: None,
        };
        assert_eq!(
            predict(&fit, Array2::zeros((2, 2)).view()).unwrap(),
            vec![0.0, 0.0]
        );
        // 1*0.5 + 1*0.25 and 0*0.5 + 1*0.25 by hand
        assert_eq!(
            predict(&fit, array![[1.0, 1.0], [0.0, 1.0]].view()).unwrap(),
            vec![0.75, 0.25]
        );
        assert!(matches!(
            predict(&fit, Array2::zeros((1, 3)).view()),
            Err(RidgeError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn duplicated_row_keeps_leverage_below_one() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = [0.5, 0.5, 0.2, 0.9];
        let r2 = loao_r2(x.view(), &y, 1e-3).unwrap();
        assert!(r2.unwrap().is_finite());
    }

    #[test]
    fn constant_target_is_undefined() {
        let x = array![[1.0], [0.0], [1.0]];
        assert_eq!(loao_r2(x.view(), &[0.4, 0.4, 0.4], 1.0).unwrap(), None);
    }

    #[test]
    fn kernel_form_matches_primal_shortcut() {
        let x = array![
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0]
        ];
        let y = [0.7, 0.5, 0.6, 0.2, 0.9];
        let mut k = KernelLoo::new(&y, 1.0).unwrap();
        let preview = k.candidate_objectives(x.slice(ndarray::s![.., 0..1]));
        k.add(x.column(0)).unwrap();
        let primal = loao_r2(x.slice(ndarray::s![.., 0..1]), &y, 1.0)
            .unwrap()
            .unwrap();
        assert!((k.objective().unwrap() - primal).abs() < 1e-12);
        assert!((preview[0].unwrap() - primal).abs() < 1e-12);
        let next = k.candidate_objectives(x.slice(ndarray::s![.., 1..3]));
        let primal2 = loao_r2(x.slice(ndarray::s![.., 0..3;2]), &y, 1.0)
            .unwrap()
            .unwrap();
        assert!((next[1].unwrap() - primal2).abs() < 1e-12);
    }

    #[test]
    fn intercept_fit_recovers_offset() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = fit_ridge_with_intercept(x.view(), &y, 1e-10).unwrap();
        assert!((fit.intercept.unwrap() - 1.0).abs() < 1e-8);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn bootstrap_interval_brackets_point() {
        let x = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0]
        ];
        let y = [0.6, 0.4, 0.9, 0.1, 0.5, 0.8];
        let new = array![[1.0, 1.0]];
        let iv = bootstrap_intervals(x.view(), &y, new.view(), 1.0, 200, 0.95, 7).unwrap();
        assert!(iv[0].lower <= iv[0].upper);
        assert!(iv[0].lower <= iv[0].point + 0.2 && iv[0].point - 0.2 <= iv[0].upper);
        let again = bootstrap_intervals(x.view(), &y, new.view(), 1.0, 200, 0.95, 7).unwrap();
        assert_eq!(iv, again);
    }
}
