mod common;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use taskcut::metrics::r_squared;
use taskcut::ridge::{fit_ridge, loao_r2, loo_predictions, predict, KernelLoo};
use taskcut::selection::select_greedy;

/// LOO by refitting n times with one row held out.
fn explicit_loo(x: &Array2<f64>, y: &[f64], alpha: f64) -> Vec<f64> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let xt = x.select(Axis(0), &keep);
            let yt: Vec<f64> = keep.iter().map(|&r| y[r]).collect();
            let fit = fit_ridge(xt.view(), &yt, alpha).unwrap();
            predict(&fit, x.select(Axis(0), &[i]).view()).unwrap()[0]
        })
        .collect()
}

fn explicit_loo_r2(x: &Array2<f64>, y: &[f64], alpha: f64) -> Option<f64> {
    r_squared(&explicit_loo(x, y, alpha), y).unwrap()
}

#[test]
fn hat_shortcut_matches_explicit_refits() {
    let mut rng = common::rng(11);
    for case in 0..100 {
        let n = rng.random_range(5..=30);
        let k = rng.random_range(1..=10);
        let alpha = [0.1, 1.0, 10.0][case % 3];
        let x = common::gaussian_matrix(&mut rng, n, k);
        let y = common::continuous_vector(&mut rng, n);
        let fast = loo_predictions(x.view(), &y, alpha).unwrap();
        let slow = explicit_loo(&x, &y, alpha);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-8, "case {case}: {a} vs {b}");
        }
        let (r_fast, r_slow) = (
            loao_r2(x.view(), &y, alpha).unwrap().unwrap(),
            explicit_loo_r2(&x, &y, alpha).unwrap(),
        );
        assert!(
            (r_fast - r_slow).abs() < 1e-8,
            "case {case}: {r_fast} vs {r_slow}"
        );

        let mut kernel = KernelLoo::new(&y, alpha).unwrap();
        for c in 0..k {
            kernel.add(x.column(c)).unwrap();
        }
        assert!(
            (kernel.objective().unwrap() - r_fast).abs() < 1e-8,
            "case {case}"
        );
    }
}

#[test]
fn candidate_scores_match_refits() {
    let mut rng = common::rng(12);
    let (x, y) = (
        common::gaussian_matrix(&mut rng, 12, 5),
        common::continuous_vector(&mut rng, 12),
    );
    let mut kernel = KernelLoo::new(&y, 1.0).unwrap();
    kernel.add(x.column(0)).unwrap();
    let scores = kernel.candidate_objectives(x.select(Axis(1), &[1, 2, 3, 4]).view());
    for (pos, c) in [1, 2, 3, 4].into_iter().enumerate() {
        let expect = explicit_loo_r2(&x.select(Axis(1), &[0, c]), &y, 1.0).unwrap();
        assert!((scores[pos].unwrap() - expect).abs() < 1e-10);
    }
}

/// Brute-force frontier: at each step, refit LOO for every remaining column.
#[test]
fn greedy_matches_brute_force_frontier() {
    let m = common::binary_matrix(5, 8, 6);
    let x = m.entries().to_owned();
    let y = taskcut::matrix::row_means(x.view());
    let out = select_greedy(x.view(), &y, 4, 1.0).unwrap();
    let mut chosen: Vec<usize> = Vec::new();
    for step in 0..4 {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..6).filter(|c| !chosen.contains(c)) {
            let mut cols = chosen.clone();
            cols.push(c);
            let score =
                explicit_loo_r2(&x.select(Axis(1), &cols), &y, 1.0).unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(_, s)| score > s + 1e-12) {
                best = Some((c, score));
            }
        }
        let (c, score) = best.unwrap();
        assert_eq!(out.selection.tasks[step], c, "step {step}");
        assert!((out.objective_trace[step].unwrap() - score).abs() < 1e-9);
        chosen.push(c);
    }
}

#[test]
fn greedy_returns_exact_budget_without_duplicates() {
    let m = common::binary_matrix(6, 15, 20);
    let x = m.entries().to_owned();
    let y = taskcut::matrix::row_means(x.view());
    for k in [1, 5, 20] {
        let out = select_greedy(x.view(), &y, k, 1.0).unwrap();
        let mut t = out.selection.tasks.clone();
        t.sort_unstable();
        t.dedup();
        assert_eq!(t.len(), k);
    }
    assert!(select_greedy(x.view(), &y, 21, 1.0).is_err());
}

proptest! {
    #![proptest_config(common::proptest_config(64))]

    #[test]
    fn coefficient_norm_shrinks_with_alpha(seed in 0u64..10_000, n in 4usize..20, k in 1usize..6) {
        let mut rng = common::rng(seed);
        let x = common::gaussian_matrix(&mut rng, n, k);
        let y = common::continuous_vector(&mut rng, n);
        let norm = |alpha: f64| {
            fit_ridge(x.view(), &y, alpha).unwrap().coefficients.iter().map(|b| b * b).sum::<f64>()
        };
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0].iter().map(|&a| norm(a)).collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)));
    }
}
