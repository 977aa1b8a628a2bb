#![allow(dead_code)]

use ndarray::Array2;
use proptest::test_runner::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskcut::matrix::PerformanceMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values drawn from a small pool so ties are common.
pub fn tied_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| f64::from(rng.random_range(0..4u8)))
        .collect()
}

pub fn continuous_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * 2.0 - 1.0)
}

/// Binary matrix whose rows have graded ability, so pass rates spread out.
pub fn binary_matrix(seed: u64, n: usize, m: usize) -> PerformanceMatrix {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let ability = (i as f64 + 0.5) / n as f64;
            (0..m)
                .map(|j| {
                    let easiness = (j as f64 + 0.5) / m as f64;
                    let p = (ability + easiness) / 2.0;
                    f64::from(u8::from(r.random::<f64>() < p))
                })
                .collect()
        })
        .collect();
    PerformanceMatrix::from_binary_rows(&rows).unwrap()
}

pub fn proptest_config(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}
