//! ROC curves, tie-corrected AUC and operating points. OOD is the positive
//! class throughout and a sample is flagged when `score ≥ threshold`.

mod report;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use report::{emit_report, read_report, write_report, MethodSummary, OperatingPoint, Report};

use crate::error::{FrodoError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    In,
    Ood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore<T> {
    pub sample_id: String,
    pub score: T,
    pub label: Label,
}

impl<T> LabeledScore<T> {
    pub fn new(sample_id: impl Into<String>, score: T, label: Label) -> Self {
        LabeledScore {
            sample_id: sample_id.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint<T> {
    pub fpr: T,
    pub tpr: T,
    /// Scores `≥ threshold` are flagged; `+∞` for the origin.
    pub threshold: T,
    pub false_positives: usize,
    pub true_positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult<T> {
    /// One point per distinct score, preceded by the origin.
    pub points: Vec<RocPoint<T>>,
    pub auc: T,
    pub n_in: usize,
    pub n_ood: usize,
}

impl<T: Scalar> RocResult<T> {
    /// Trapezoidal area under the tie-collapsed curve, in exact integer
    /// arithmetic until the final division.
    pub fn curve_area(&self) -> T {
        let twice: u128 = self
            .points
            .windows(2)
            .map(|w| {
                let dx = (w[1].false_positives - w[0].false_positives) as u128;
                dx * (w[1].true_positives + w[0].true_positives) as u128
            })
            .sum();
        ratio(twice, 2 * self.n_in as u128 * self.n_ood as u128)
    }
}

fn ratio<T: Scalar>(num: u128, den: u128) -> T {
    T::lit(num as f64 / den as f64)
}

fn check_scores<T: Scalar>(scores: impl Iterator<Item = T>) -> Result<()> {
    for (index, s) in scores.enumerate() {
        if !s.is_finite() {
            return Err(FrodoError::NonFiniteData { index });
        }
    }
    Ok(())
}

fn class_counts<T>(scores: &[LabeledScore<T>]) -> (usize, usize) {
    let n_ood = scores.iter().filter(|s| s.label == Label::Ood).count();
    (scores.len() - n_ood, n_ood)
}

/// Mann–Whitney AUC, `P(ood > in) + ½·P(ood = in)`, from tie groups of the
/// ascending sort. O(n log n).
pub fn rank_statistic_auc<T: Scalar>(scores: &[LabeledScore<T>]) -> Result<T> {
    check_scores(scores.iter().map(|s| s.score))?;
    let (n_in, n_ood) = class_counts(scores);
    if n_in == 0 || n_ood == 0 {
        return Err(FrodoError::DegenerateLabels(format!("{n_in} in and {n_ood} ood samples")));
    }
    let mut order: Vec<&LabeledScore<T>> = scores.iter().collect();
    order.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal));

    // 2U = Σ over tie groups of ood_g · (2·in_below + in_g)
    let mut twice_u: u128 = 0;
    let mut in_below: u128 = 0;
    for group in order.chunk_by(|a, b| a.score == b.score) {
        let ood_g = group.iter().filter(|s| s.label == Label::Ood).count() as u128;
        let in_g = group.len() as u128 - ood_g;
        twice_u += ood_g * (2 * in_below + in_g);
        in_below += in_g;
    }
    Ok(ratio(twice_u, 2 * n_in as u128 * n_ood as u128))
}

pub fn roc_auc<T: Scalar>(scores: &[LabeledScore<T>]) -> Result<RocResult<T>> {
    let auc = rank_statistic_auc(scores)?;
    let (n_in, n_ood) = class_counts(scores);

    let mut order: Vec<&LabeledScore<T>> = scores.iter().collect();
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push(RocPoint {
        fpr: T::zero(),
        tpr: T::zero(),
        threshold: T::infinity(),
        false_positives: 0,
        true_positives: 0,
    });
    let (mut fp, mut tp) = (0usize, 0usize);
    for group in order.chunk_by(|a, b| a.score == b.score) {
        let ood_g = group.iter().filter(|s| s.label == Label::Ood).count();
        tp += ood_g;
        fp += group.len() - ood_g;
        points.push(RocPoint {
            fpr: ratio(fp as u128, n_in as u128),
            tpr: ratio(tp as u128, n_ood as u128),
            threshold: group[0].score,
            false_positives: fp,
            true_positives: tp,
        });
    }
    Ok(RocResult {
        points,
        auc,
        n_in,
        n_ood,
    })
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target <= 1.0 {
        Ok(())
    } else {
        Err(FrodoError::InvalidArgument(format!("sensitivity target {target} outside (0, 1]")))
    }
}

/// Largest observed score `t` with `|{s ≥ t}| / n ≥ target`.
pub fn threshold_at_sensitivity<T: Scalar>(ood_scores: &[T], target: f64) -> Result<T> {
    check_target(target)?;
    if ood_scores.is_empty() {
        return Err(FrodoError::DegenerateLabels("no ood scores to calibrate on".into()));
    }
    check_scores(ood_scores.iter().copied())?;
    let mut sorted = ood_scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let n = sorted.len() as f64;
    let mut captured = 0usize;
    for group in sorted.chunk_by(|a, b| a == b) {
        captured += group.len();
        if captured as f64 / n >= target {
            return Ok(group[0]);
        }
    }
    // captured == n at the minimum, and n / n = 1 ≥ target
    unreachable!("minimum score always reaches the target")
}

/// Fraction of `ood_scores` at or above `threshold`.
pub fn recall_at<T: Scalar>(ood_scores: &[T], threshold: T) -> f64 {
    if ood_scores.is_empty() {
        return 0.0;
    }
    ood_scores.iter().filter(|&&s| s >= threshold).count() as f64 / ood_scores.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion_at<T: Scalar>(scores: &[LabeledScore<T>], threshold: T) -> Result<Confusion> {
    if !threshold.is_finite() {
        return Err(FrodoError::InvalidArgument(format!("threshold {threshold} is not finite")));
    }
    check_scores(scores.iter().map(|s| s.score))?;
    let mut c = Confusion::default();
    for s in scores {
        match (s.label, s.score >= threshold) {
            (Label::Ood, true) => c.tp += 1,
            (Label::Ood, false) => c.fn_ += 1,
            (Label::In, true) => c.fp += 1,
            (Label::In, false) => c.tn += 1,
        }
    }
    Ok(c)
}
