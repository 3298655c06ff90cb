//! Classification metrics on pooled score/outcome pairs: confusion counts,
//! sensitivity/specificity, the ROC curve, AUC, and the Peirce index.
//!
//! Sensitivity and specificity are step functions of the threshold, so every
//! sweep here is exact: it visits the distinct observed scores plus the
//! trivial all-positive/all-negative classifiers instead of a gamma grid.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no score/outcome pairs")]
    EmptyInput,
    #[error("need at least one event and one non-event")]
    OneClassOnly,
}

/// One prediction event: predicted probability and observed outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub score: f64,
    pub outcome: u8,
    pub time_index: u64,
    pub individual_id: String,
}

impl ScoredPair {
    pub fn new(score: f64, outcome: u8, time_index: u64, individual_id: impl Into<String>) -> Self {
        debug_assert!(score.is_finite() && (0.0..=1.0).contains(&score));
        debug_assert!(outcome <= 1);
        Self { score, outcome, time_index, individual_id: individual_id.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

/// Sensitivity/specificity with degenerate-denominator flags. An empty
/// denominator yields 0 and sets the flag instead of erroring, so early
/// longitudinal steps with one-class pools keep running.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensSpec {
    pub sensitivity: f64,
    pub specificity: f64,
    pub sens_degenerate: bool,
    pub spec_degenerate: bool,
}

/// ROC curve vertices from the all-negative corner (0,0) to the all-positive
/// corner (1,1), one vertex per distinct score plus the two sentinels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Decision thresholds, descending; `+inf` and `-inf` sentinels included.
    pub thresholds: Vec<f64>,
    /// Matching (false positive rate, true positive rate) vertices.
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// CSV with columns `threshold,fpr,tpr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for (t, (fpr, tpr)) in self.thresholds.iter().zip(&self.points) {
            writeln!(w, "{t},{fpr},{tpr}")?;
        }
        Ok(())
    }
}

/// Peirce index (Youden's J maximized over thresholds) and the smallest
/// threshold achieving it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeirceResult {
    pub peirce: f64,
    pub gamma_star: f64,
}

/// Confusion counts at threshold `gamma` under the `score >= gamma` rule.
pub fn confusion(pairs: &[ScoredPair], gamma: f64) -> Result<ConfusionCounts, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = ConfusionCounts { true_pos: 0, false_pos: 0, true_neg: 0, false_neg: 0 };
    for p in pairs {
        let predicted = p.score >= gamma;
        match (p.outcome == 1, predicted) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_neg += 1,
            (false, true) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

pub fn sens_spec(counts: &ConfusionCounts) -> SensSpec {
    let pos = counts.true_pos + counts.false_neg;
    let neg = counts.true_neg + counts.false_pos;
    let (sensitivity, sens_degenerate) = if pos == 0 {
        (0.0, true)
    } else {
        (counts.true_pos as f64 / pos as f64, false)
    };
    let (specificity, spec_degenerate) = if neg == 0 {
        (0.0, true)
    } else {
        (counts.true_neg as f64 / neg as f64, false)
    };
    SensSpec { sensitivity, specificity, sens_degenerate, spec_degenerate }
}

/// Distinct scores in descending order with cumulative TP/FP counts at the
/// threshold equal to each score, plus the class totals.
fn cumulative_groups(pairs: &[ScoredPair]) -> Result<(Vec<(f64, u64, u64)>, u64, u64), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sorted: Vec<(f64, u8)> = pairs.iter().map(|p| (p.score, p.outcome)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores must not be NaN"));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (score, outcome) in sorted {
        if u64::from(outcome) == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        match groups.last_mut() {
            Some(last) if last.0 == score => {
                last.1 = tp;
                last.2 = fp;
            }
            _ => groups.push((score, tp, fp)),
        }
    }
    let pos = tp;
    let neg = fp;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::OneClassOnly);
    }
    Ok((groups, pos, neg))
}

/// ROC curve over all distinct scores plus sentinel thresholds.
pub fn roc(pairs: &[ScoredPair]) -> Result<RocCurve, MetricsError> {
    let (groups, pos, neg) = cumulative_groups(pairs)?;
    let mut thresholds = Vec::with_capacity(groups.len() + 2);
    let mut points = Vec::with_capacity(groups.len() + 2);
    thresholds.push(f64::INFINITY);
    points.push((0.0, 0.0));
    for (score, tp, fp) in &groups {
        thresholds.push(*score);
        points.push((*fp as f64 / neg as f64, *tp as f64 / pos as f64));
    }
    thresholds.push(f64::NEG_INFINITY);
    points.push((1.0, 1.0));
    Ok(RocCurve { thresholds, points })
}

/// Area under the ROC curve by the trapezoidal rule.
///
/// Evaluated in integer count space before the one final division, so the
/// result coincides exactly with the Mann-Whitney concordance statistic
/// `P(score_event > score_nonevent) + P(equal)/2`.
pub fn auc(pairs: &[ScoredPair]) -> Result<f64, MetricsError> {
    let (groups, pos, neg) = cumulative_groups(pairs)?;
    let mut twice_area = 0u64; // in units of 1/(P*N), times 2
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for (_, tp, fp) in groups {
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(twice_area as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Peirce index `max_gamma {sensitivity + specificity - 1}`.
///
/// The sweep covers gamma = 0 (the all-positive classifier, equivalent to the
/// low sentinel because scores live in [0,1]) and every distinct score, in
/// ascending order; ties on the maximum resolve to the smallest gamma. The
/// trivial classifiers pin the maximum at >= 0.
pub fn peirce(pairs: &[ScoredPair]) -> Result<PeirceResult, MetricsError> {
    let (groups, pos, neg) = cumulative_groups(pairs)?;
    let mut best = PeirceResult { peirce: 0.0, gamma_star: 0.0 };
    // Ascending score order; groups are descending.
    for (score, tp, fp) in groups.iter().rev() {
        let sens = *tp as f64 / pos as f64;
        let spec = 1.0 - (*fp as f64 / neg as f64);
        let j = sens + spec - 1.0;
        if j > best.peirce {
            best = PeirceResult { peirce: j, gamma_star: *score };
        }
    }
    Ok(best)
}
