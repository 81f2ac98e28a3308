//! Per-sample FRODO scores, layer fusion and the max-softmax baseline.
//!
//! Every score here is oriented so that larger means more likely
//! out-of-distribution.

mod scores_csv;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use scores_csv::{
    read_scores_csv, read_sidecar, sidecar_path, write_scores_csv, write_sidecar, ScoreRow, ScoresSidecar,
    SCORES_HEADER,
};

use crate::error::{FrodoError, Result};
use crate::gaussian_stats::{PooledFeature, StatsBundle};
use crate::layer::LayerId;
use crate::scalar::Scalar;

/// Tolerance on `Σ p = 1` for a softmax vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionRule {
    /// Use one layer's distance as is.
    Single(LayerId),
    /// Sum of raw squared distances over all scored layers.
    SumRaw,
    /// Sum of per-layer robust z-scores, `(d − median) / MAD`.
    SumZ,
}

impl Default for FusionRule {
    fn default() -> Self {
        FusionRule::Single(LayerId::L3)
    }
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionRule::Single(l) => write!(f, "single:{l}"),
            FusionRule::SumRaw => f.write_str("sum_raw"),
            FusionRule::SumZ => f.write_str("sum_z"),
        }
    }
}

impl FromStr for FusionRule {
    type Err = FrodoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_raw" => Ok(FusionRule::SumRaw),
            "sum_z" => Ok(FusionRule::SumZ),
            _ => match s.strip_prefix("single:") {
                Some(layer) => Ok(FusionRule::Single(layer.parse()?)),
                None => Err(FrodoError::InvalidArgument(format!(
                    "unknown fusion rule {s:?} (expected single:<layer>, sum_raw or sum_z)"
                ))),
            },
        }
    }
}

impl Serialize for FusionRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FusionRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustScale<T> {
    pub location: T,
    pub scale: T,
}

/// Median / MAD of in-distribution distances per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats<T> {
    pub per_layer: BTreeMap<LayerId, RobustScale<T>>,
}

impl<T: Scalar> CalibrationStats<T> {
    pub fn from_distances(distances: &BTreeMap<LayerId, Vec<T>>) -> Result<Self> {
        let mut per_layer = BTreeMap::new();
        for (&layer, values) in distances {
            if values.is_empty() {
                return Err(FrodoError::InvalidArgument(format!("no calibration distances for {layer}")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FrodoError::NonFiniteData { index: 0 });
            }
            let location = median(values);
            let deviations: Vec<T> = values.iter().map(|&v| (v - location).abs()).collect();
            let scale = median(&deviations);
            if !(scale > T::zero()) {
                return Err(FrodoError::InvalidArgument(format!(
                    "{layer}: calibration distances have zero median absolute deviation"
                )));
            }
            per_layer.insert(layer, RobustScale { location, scale });
        }
        Ok(CalibrationStats { per_layer })
    }

    pub fn get(&self, layer: LayerId) -> Option<&RobustScale<T>> {
        self.per_layer.get(&layer)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self).map_err(|source| FrodoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        json.push('\n');
        fs::write(path, json).map_err(|e| FrodoError::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FrodoError::io(path, e))?;
        let calib: Self = serde_json::from_str(&text).map_err(|source| FrodoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some((layer, _)) = calib.per_layer.iter().find(|(_, s)| !(s.scale > T::zero())) {
            return Err(FrodoError::InvalidArgument(format!("{layer}: calibration scale must be positive")));
        }
        Ok(calib)
    }
}

/// Median of a non-empty slice; the mean of the two middle values for an
/// even count.
fn median<T: Scalar>(values: &[T]) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / T::lit(2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrodoScore<T> {
    pub sample_id: String,
    /// Squared Mahalanobis distance per scored layer.
    pub per_layer: BTreeMap<LayerId, T>,
    pub fused: Option<T>,
    pub fusion_rule: Option<FusionRule>,
}

/// Fuses per-layer squared distances into one score.
pub fn fuse<T: Scalar>(
    per_layer: &BTreeMap<LayerId, T>,
    rule: FusionRule,
    calib: Option<&CalibrationStats<T>>,
) -> Result<T> {
    match rule {
        FusionRule::Single(layer) => per_layer.get(&layer).copied().ok_or(FrodoError::MissingFeature(layer)),
        FusionRule::SumRaw => Ok(per_layer.values().copied().sum()),
        FusionRule::SumZ => per_layer
            .iter()
            .map(|(&layer, &d)| {
                let s = calib
                    .and_then(|c| c.get(layer))
                    .ok_or(FrodoError::MissingCalibration(layer))?;
                Ok((d - s.location) / s.scale)
            })
            .sum(),
    }
}

pub fn score_sample<T: Scalar>(
    sample_id: &str,
    stats: &StatsBundle<T>,
    features: &BTreeMap<LayerId, PooledFeature<T>>,
    rule: FusionRule,
    calib: Option<&CalibrationStats<T>>,
) -> Result<FrodoScore<T>> {
    if features.is_empty() {
        return Err(FrodoError::InvalidArgument(format!("sample {sample_id}: no features")));
    }
    let per_layer = features
        .iter()
        .map(|(&layer, feature)| {
            let layer_stats = stats.get(&layer).ok_or(FrodoError::MissingStats(layer))?;
            Ok((layer, layer_stats.mahalanobis_sq(feature)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let fused = fuse(&per_layer, rule, calib)?;
    Ok(FrodoScore {
        sample_id: sample_id.to_string(),
        per_layer,
        fused: Some(fused),
        fusion_rule: Some(rule),
    })
}

/// Max-softmax baseline oriented like FRODO: `1 − max p`.
pub fn baseline_msp<T: Scalar>(probs: &[T]) -> Result<T> {
    if probs.len() < 2 {
        return Err(FrodoError::Shape(format!(
            "probability vector needs at least 2 entries, got {}",
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return Err(FrodoError::NotAProbabilityVector(format!("entry {p} outside [0, 1]")));
    }
    let total: T = probs.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(PROBABILITY_SUM_TOLERANCE) {
        return Err(FrodoError::NotAProbabilityVector(format!("entries sum to {total}")));
    }
    let max = probs.iter().copied().fold(T::zero(), T::max);
    Ok(T::one() - max)
}
