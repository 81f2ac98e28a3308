#![allow(dead_code)]

use frodo_core::{LayerId, PooledFeature};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A·Aᵀ/d + ridge·I` for a standard normal `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * ridge
}

pub fn gaussian_draws(rng: &mut ChaCha8Rng, mean: &DVector<f64>, cov: &DMatrix<f64>, n: usize) -> Vec<Vec<f64>> {
    let l = cov.clone().cholesky().expect("SPD covariance").l();
    (0..n)
        .map(|_| {
            let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            (mean + &l * z).iter().copied().collect()
        })
        .collect()
}

pub fn features(layer: LayerId, rows: &[Vec<f64>]) -> Vec<PooledFeature<f64>> {
    rows.iter().map(|r| PooledFeature::new(layer, r.clone()).unwrap()).collect()
}

/// Mean first, then the centred outer products; divisor n − 1.
pub fn two_pass_covariance(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    (mean, cov / (n - 1) as f64)
}

/// `(x − μ)ᵀ M⁻¹ (x − μ)` with an explicit inverse.
pub fn explicit_inverse_distance(x: &[f64], mean: &[f64], m: &DMatrix<f64>) -> f64 {
    let inv = m.clone().try_inverse().expect("invertible");
    let diff = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
    (diff.transpose() * inv * &diff)[(0, 0)]
}

/// `(1 − λ)·Σ + (λ·tr Σ/d + jitter)·I`
pub fn shrink(cov: &DMatrix<f64>, lambda: f64, jitter: f64) -> DMatrix<f64> {
    let d = cov.nrows();
    cov * (1.0 - lambda) + DMatrix::identity(d, d) * (lambda * cov.trace() / d as f64 + jitter)
}

pub fn to_nalgebra(m: &frodo_core::SquareMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
