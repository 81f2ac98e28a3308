//! Stats bundle directories: `meta.json` plus `<layer>_mean.ften` (rank 1)
//! and `<layer>_cov.ften` (rank 2, unregularised Σ) per fitted layer.
//!
//! Mean and covariance are stored as f32, so the factor written to the
//! meta checksum is computed from the rounded values. Loading repeats the
//! exact same factorisation and compares the first diagonal entries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LayerStats;
use crate::error::{FrodoError, Result};
use crate::layer::LayerId;
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;
use crate::tensor_io::{read_ften, write_ften, Ften};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const CHECKSUM_LEN: usize = 8;
const CHECKSUM_TOLERANCE: f64 = 1e-6;

pub type StatsBundle<T> = BTreeMap<LayerId, LayerStats<T>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub layer: LayerId,
    pub d: usize,
    pub n: u64,
    pub lambda: f64,
    pub jitter_used: f64,
    pub chol_diag_checksum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format_version: u32,
    pub layers: Vec<LayerMeta>,
}

fn mean_file(layer: LayerId) -> String {
    format!("{layer}_mean.ften")
}

fn cov_file(layer: LayerId) -> String {
    format!("{layer}_cov.ften")
}

fn to_f32<T: Scalar>(values: &[T]) -> Result<Vec<f32>> {
    values
        .iter()
        .enumerate()
        .map(|(index, v)| {
            v.to_f32()
                .filter(|x| x.is_finite())
                .ok_or(FrodoError::NonFiniteData { index })
        })
        .collect()
}

fn from_f32<T: Scalar>(values: &[f32]) -> Vec<T> {
    values.iter().map(|&v| T::lit(v as f64)).collect()
}

fn checksum<T: Scalar>(stats: &LayerStats<T>) -> Vec<f64> {
    stats
        .cholesky_factor()
        .diagonal()
        .into_iter()
        .take(CHECKSUM_LEN)
        .map(Scalar::to_f64_lossy)
        .collect()
}

/// Persists every layer and returns the metadata that was written. The
/// bundle is reproducible: identical stats always give identical bytes.
pub fn save_bundle<T: Scalar>(bundle: &StatsBundle<T>, dir: impl AsRef<Path>) -> Result<BundleMeta> {
    let dir = dir.as_ref();
    if bundle.is_empty() {
        return Err(FrodoError::InvalidArgument("refusing to save an empty bundle".into()));
    }
    fs::create_dir_all(dir).map_err(|e| FrodoError::io(dir, e))?;

    let mut layers = Vec::with_capacity(bundle.len());
    for (&layer, stats) in bundle {
        let d = stats.dim();
        let mean = Ften::vector(to_f32(stats.mean())?)?;
        let cov = Ften::new(vec![d, d], to_f32(stats.covariance().as_slice())?)?;

        let stored = LayerStats::from_covariance(
            layer,
            stats.count(),
            from_f32::<T>(mean.data()),
            SquareMatrix::from_row_major(d, from_f32(cov.data())).expect("d×d payload"),
            stats.lambda(),
        )
        .map_err(|e| e.context(format!("refactoring stored {layer} covariance")))?;

        write_ften(&mean, dir.join(mean_file(layer)))?;
        write_ften(&cov, dir.join(cov_file(layer)))?;
        layers.push(LayerMeta {
            layer,
            d,
            n: stats.count(),
            lambda: stats.lambda(),
            jitter_used: stored.jitter_used().to_f64_lossy(),
            chol_diag_checksum: checksum(&stored),
        });
    }

    let meta = BundleMeta {
        format_version: BUNDLE_FORMAT_VERSION,
        layers,
    };
    let meta_path = dir.join(META_FILE);
    let mut json = serde_json::to_string_pretty(&meta).map_err(|source| FrodoError::Json {
        path: meta_path.clone(),
        source,
    })?;
    json.push('\n');
    fs::write(&meta_path, json).map_err(|e| FrodoError::io(&meta_path, e))?;
    Ok(meta)
}

pub fn read_bundle_meta(dir: impl AsRef<Path>) -> Result<BundleMeta> {
    let meta_path = dir.as_ref().join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| FrodoError::io(&meta_path, e))?;
    let meta: BundleMeta = serde_json::from_str(&text).map_err(|source| FrodoError::Json {
        path: meta_path.clone(),
        source,
    })?;
    if meta.format_version != BUNDLE_FORMAT_VERSION {
        return Err(FrodoError::InvalidBundle(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }
    Ok(meta)
}

pub fn load_bundle<T: Scalar>(dir: impl AsRef<Path>) -> Result<StatsBundle<T>> {
    let dir = dir.as_ref();
    let meta = read_bundle_meta(dir)?;
    let mut bundle = StatsBundle::new();
    for lm in &meta.layers {
        let layer = lm.layer;
        let mean = read_ften(dir.join(mean_file(layer)))?;
        let cov = read_ften(dir.join(cov_file(layer)))?;
        if mean.dims() != [lm.d] || cov.dims() != [lm.d, lm.d] {
            return Err(FrodoError::InvalidBundle(format!(
                "{layer}: mean dims {:?} / cov dims {:?} disagree with d = {}",
                mean.dims(),
                cov.dims(),
                lm.d
            )));
        }
        let stats = LayerStats::from_parts(
            layer,
            lm.n,
            from_f32(mean.data()),
            SquareMatrix::from_row_major(lm.d, from_f32(cov.data())).expect("d×d payload"),
            lm.lambda,
            T::lit(lm.jitter_used),
        )?;
        let diag = checksum(&stats);
        let expected_len = lm.d.min(CHECKSUM_LEN);
        let matches = diag.len() == expected_len
            && lm.chol_diag_checksum.len() == expected_len
            && diag
                .iter()
                .zip(&lm.chol_diag_checksum)
                .all(|(&a, &b)| (a - b).abs() <= CHECKSUM_TOLERANCE * b.abs());
        if !matches {
            return Err(FrodoError::InvalidBundle(format!(
                "{layer}: Cholesky diagonal {diag:?} does not match recorded {:?}",
                lm.chol_diag_checksum
            )));
        }
        if bundle.insert(layer, stats).is_some() {
            return Err(FrodoError::InvalidBundle(format!("{layer} listed twice")));
        }
    }
    Ok(bundle)
}
