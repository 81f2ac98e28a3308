//! Per-layer Gaussian models of pooled activations and squared
//! Mahalanobis distances against them.

mod bundle;

use std::borrow::Borrow;

pub use bundle::{
    load_bundle, read_bundle_meta, save_bundle, BundleMeta, LayerMeta, StatsBundle, BUNDLE_FORMAT_VERSION,
};

use crate::error::{FrodoError, Result};
use crate::layer::LayerId;
use crate::linalg::{cholesky, forward_substitute, SquareMatrix};
use crate::scalar::Scalar;
use crate::tensor_io::FeatureTensor;

pub const DEFAULT_LAMBDA: f64 = 0.01;

/// First jitter tried after a failed factorisation, relative to the mean
/// diagonal of the shrunk covariance.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-2;

/// Channel vector of one sample at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature<T> {
    pub layer: LayerId,
    pub values: Vec<T>,
}

impl<T: Scalar> PooledFeature<T> {
    pub fn new(layer: LayerId, values: Vec<T>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FrodoError::NonFiniteData { index });
        }
        Ok(PooledFeature { layer, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Global average pooling over the spatial axes.
pub fn pool_spatial<T: Scalar>(tensor: &FeatureTensor, layer: LayerId) -> Result<PooledFeature<T>> {
    let channels = tensor.channels();
    if channels != layer.expected_channels() {
        return Err(FrodoError::Shape(format!(
            "layer {layer} expects {} channels, tensor has {channels}",
            layer.expected_channels()
        )));
    }
    let mut acc = vec![T::zero(); channels];
    for pixel in tensor.data().chunks_exact(channels) {
        for (a, &v) in acc.iter_mut().zip(pixel) {
            *a += T::lit(v as f64);
        }
    }
    let area = T::from_count(tensor.height() * tensor.width());
    for a in &mut acc {
        *a /= area;
    }
    Ok(PooledFeature { layer, values: acc })
}

/// Single-pass mean and co-moment accumulator (Welford update, Chan
/// merge). Only the lower triangle of the co-moment matrix is maintained.
#[derive(Debug, Clone)]
pub struct MomentAccumulator<T> {
    layer: LayerId,
    count: u64,
    mean: Vec<T>,
    comoment: SquareMatrix<T>,
}

impl<T: Scalar> MomentAccumulator<T> {
    pub fn new(layer: LayerId, dim: usize) -> Self {
        MomentAccumulator {
            layer,
            count: 0,
            mean: vec![T::zero(); dim],
            comoment: SquareMatrix::zeros(dim),
        }
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn push(&mut self, sample: &PooledFeature<T>) -> Result<()> {
        if sample.layer != self.layer || sample.dim() != self.dim() {
            return Err(FrodoError::Shape(format!(
                "expected {} sample of dimension {}, got {} of dimension {}",
                self.layer,
                self.dim(),
                sample.layer,
                sample.dim()
            )));
        }
        if let Some(index) = sample.values.iter().position(|v| !v.is_finite()) {
            return Err(FrodoError::NonFiniteData { index });
        }

        self.count += 1;
        let n = T::lit(self.count as f64);
        let delta: Vec<T> = sample.values.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        for (m, &dx) in self.mean.iter_mut().zip(&delta) {
            *m += dx / n;
        }
        for (i, &di) in delta.iter().enumerate() {
            for j in 0..=i {
                // (x_i − old mean_i)(x_j − new mean_j)
                let after = sample.values[j] - self.mean[j];
                self.comoment[(i, j)] += di * after;
            }
        }
        Ok(())
    }

    /// Folds another shard's moments into this one.
    pub fn merge(&mut self, other: &MomentAccumulator<T>) -> Result<()> {
        if other.layer != self.layer || other.dim() != self.dim() {
            return Err(FrodoError::Shape("cannot merge accumulators of different layers".into()));
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let na = T::lit(self.count as f64);
        let nb = T::lit(other.count as f64);
        let n = na + nb;
        let delta: Vec<T> = other.mean.iter().zip(&self.mean).map(|(&b, &a)| b - a).collect();
        let weight = na * nb / n;
        for i in 0..self.dim() {
            for j in 0..=i {
                self.comoment[(i, j)] += other.comoment[(i, j)] + delta[i] * delta[j] * weight;
            }
        }
        for (m, &dx) in self.mean.iter_mut().zip(&delta) {
            *m += dx * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    /// Unbiased sample covariance (divisor n − 1), fully symmetric.
    pub fn covariance(&self) -> Result<SquareMatrix<T>> {
        if self.count < 2 {
            return Err(FrodoError::InsufficientSamples(self.count));
        }
        let denom = T::lit((self.count - 1) as f64);
        let d = self.dim();
        let mut cov = SquareMatrix::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let v = self.comoment[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(cov)
    }

    pub fn finish(self, lambda: f64) -> Result<LayerStats<T>> {
        let cov = self.covariance()?;
        LayerStats::from_covariance(self.layer, self.count, self.mean, cov, lambda)
    }
}

/// Fits one Gaussian over a stream of pooled features of a single layer.
pub fn fit_stats<T, I>(samples: I, lambda: f64) -> Result<LayerStats<T>>
where
    T: Scalar,
    I: IntoIterator,
    I::Item: Borrow<PooledFeature<T>>,
{
    check_lambda(lambda)?;
    let mut acc: Option<MomentAccumulator<T>> = None;
    for sample in samples {
        let sample = sample.borrow();
        acc.get_or_insert_with(|| MomentAccumulator::new(sample.layer, sample.dim()))
            .push(sample)?;
    }
    match acc {
        Some(acc) => acc.finish(lambda),
        None => Err(FrodoError::InsufficientSamples(0)),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(FrodoError::InvalidArgument(format!("lambda {lambda} outside [0, 1]")))
    }
}

/// `(1 − λ)·Σ + λ·(tr Σ / d)·I`
pub fn shrink_covariance<T: Scalar>(cov: &SquareMatrix<T>, lambda: f64) -> SquareMatrix<T> {
    let lambda = T::lit(lambda);
    let target = cov.trace() / T::from_count(cov.dim().max(1));
    let mut out = cov.map(|v| (T::one() - lambda) * v);
    out.add_diagonal(lambda * target);
    out
}

/// Fitted Gaussian for one layer. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats<T> {
    layer: LayerId,
    count: u64,
    mean: Vec<T>,
    covariance: SquareMatrix<T>,
    lambda: f64,
    chol: SquareMatrix<T>,
    jitter_used: T,
}

impl<T: Scalar> LayerStats<T> {
    /// Shrinks `covariance`, then factors it. If plain factorisation fails,
    /// diagonal jitter starting at `JITTER_START · tr(Σλ)/d` is doubled
    /// until it succeeds or passes `JITTER_MAX · tr(Σλ)/d`.
    pub fn from_covariance(
        layer: LayerId,
        count: u64,
        mean: Vec<T>,
        covariance: SquareMatrix<T>,
        lambda: f64,
    ) -> Result<Self> {
        Self::check_parts(count, &mean, &covariance, lambda)?;
        let shrunk = shrink_covariance(&covariance, lambda);
        let (chol, jitter_used) = factor_with_jitter(&shrunk).ok_or_else(|| {
            let scale = (shrunk.trace() / T::from_count(shrunk.dim())).to_f64_lossy();
            FrodoError::SingularCovariance {
                layer,
                max_jitter: JITTER_MAX * scale,
            }
        })?;
        Ok(LayerStats {
            layer,
            count,
            mean,
            covariance,
            lambda,
            chol,
            jitter_used,
        })
    }

    /// Rebuilds stats with a known jitter, as recorded in a saved bundle.
    pub fn from_parts(
        layer: LayerId,
        count: u64,
        mean: Vec<T>,
        covariance: SquareMatrix<T>,
        lambda: f64,
        jitter_used: T,
    ) -> Result<Self> {
        Self::check_parts(count, &mean, &covariance, lambda)?;
        if !(jitter_used >= T::zero()) || !jitter_used.is_finite() {
            return Err(FrodoError::InvalidArgument(format!("bad jitter {jitter_used}")));
        }
        let mut shrunk = shrink_covariance(&covariance, lambda);
        shrunk.add_diagonal(jitter_used);
        let chol = cholesky(&shrunk).ok_or(FrodoError::SingularCovariance {
            layer,
            max_jitter: jitter_used.to_f64_lossy(),
        })?;
        Ok(LayerStats {
            layer,
            count,
            mean,
            covariance,
            lambda,
            chol,
            jitter_used,
        })
    }

    fn check_parts(count: u64, mean: &[T], covariance: &SquareMatrix<T>, lambda: f64) -> Result<()> {
        if count < 2 {
            return Err(FrodoError::InsufficientSamples(count));
        }
        check_lambda(lambda)?;
        if mean.is_empty() || mean.len() != covariance.dim() {
            return Err(FrodoError::Shape(format!(
                "mean of length {} with {}×{} covariance",
                mean.len(),
                covariance.dim(),
                covariance.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || !covariance.is_finite() {
            return Err(FrodoError::NonFiniteData { index: 0 });
        }
        Ok(())
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// The unregularised sample covariance.
    pub fn covariance(&self) -> &SquareMatrix<T> {
        &self.covariance
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    pub fn cholesky_factor(&self) -> &SquareMatrix<T> {
        &self.chol
    }

    /// `Σλ + jitter·I`, the matrix the Cholesky factor reproduces.
    pub fn regularized_covariance(&self) -> SquareMatrix<T> {
        let mut m = shrink_covariance(&self.covariance, self.lambda);
        m.add_diagonal(self.jitter_used);
        m
    }

    /// `(x − μ)ᵀ Σλ⁻¹ (x − μ)` via `L z = x − μ`, returning `‖z‖²`.
    pub fn mahalanobis_sq(&self, x: &PooledFeature<T>) -> Result<T> {
        if x.layer != self.layer {
            return Err(FrodoError::Shape(format!(
                "feature from {} scored against {} statistics",
                x.layer, self.layer
            )));
        }
        self.mahalanobis_sq_values(&x.values)
    }

    pub fn mahalanobis_sq_values(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(FrodoError::Shape(format!(
                "feature of dimension {} scored against {}-dimensional statistics",
                x.len(),
                self.dim()
            )));
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(FrodoError::NonFiniteData { index });
        }
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        let z = forward_substitute(&self.chol, &centered);
        Ok(z.iter().map(|&v| v * v).sum())
    }
}

pub fn mahalanobis_sq<T: Scalar>(stats: &LayerStats<T>, x: &PooledFeature<T>) -> Result<T> {
    stats.mahalanobis_sq(x)
}

fn factor_with_jitter<T: Scalar>(shrunk: &SquareMatrix<T>) -> Option<(SquareMatrix<T>, T)> {
    if let Some(l) = cholesky(shrunk) {
        return Some((l, T::zero()));
    }
    let scale = shrunk.trace() / T::from_count(shrunk.dim());
    if !(scale > T::zero()) || !scale.is_finite() {
        return None;
    }
    let max = T::lit(JITTER_MAX) * scale;
    let mut jitter = T::lit(JITTER_START) * scale;
    while jitter <= max {
        let mut m = shrunk.clone();
        m.add_diagonal(jitter);
        if let Some(l) = cholesky(&m) {
            return Some((l, jitter));
        }
        jitter = jitter + jitter;
    }
    None
}
