//! Weighted logistic regression fit by iteratively reweighted least squares.
//!
//! The score and information of the weighted log-likelihood
//! `sum_{y=1} w ln(pi) + sum_{y=0} w ln(1-pi)` are
//! `X' (w .* (y - pi))` and `X' diag(w pi (1-pi)) X`; each IRLS step is a
//! Newton step obtained from one symmetric solve. The reported covariance is
//! the inverse of the weighted information at the returned coefficients.

mod solve;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DesignMatrix;
pub use solve::{ldlt, Ldlt};

/// Relative pivot tolerance for singularity detection in normal-equation
/// solves.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Probabilities are clamped to `[CLAMP, 1-CLAMP]` inside likelihood
/// evaluations so the log stays finite.
pub const PROB_CLAMP: f64 = 1e-12;

/// A deviance this close to zero means every observation is fit exactly in
/// the limit, i.e. the classes are separated and the MLE is not finite.
const SEPARATION_DEVIANCE_EPS: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("dimension mismatch: beta has {beta} entries, feature vector has {x}")]
    DimensionMismatch { beta: usize, x: usize },
    #[error("information matrix is singular (collinear columns or degenerate weights)")]
    SingularInformation,
    #[error("all positively-weighted rows belong to one class")]
    AllOneClass,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitControl {
    pub max_iterations: usize,
    /// Convergence threshold on `|dev - dev_old| / (|dev| + 0.1)`.
    pub tolerance: f64,
    /// A coefficient magnitude beyond this bound flags separation.
    pub divergence_bound: f64,
}

impl Default for FitControl {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-10, divergence_bound: 1e4 }
    }
}

/// Result of a logistic fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedLogistic {
    pub beta: Array1<f64>,
    /// Inverse weighted information at `beta`; zeros when the fit separated
    /// and the information was not invertible.
    pub covariance: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_deviance: f64,
    pub separation_flag: bool,
}

impl FittedLogistic {
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<f64, GlmError> {
        predict_probability(self.beta.view(), x)
    }
}

/// Numerically stable logistic function, clamped to the open interval (0, 1).
pub fn sigmoid(t: f64) -> f64 {
    let p = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Predicted event probability `1 / (1 + exp(-x'beta))`.
pub fn predict_probability(
    beta: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> Result<f64, GlmError> {
    if beta.len() != x.len() {
        return Err(GlmError::DimensionMismatch { beta: beta.len(), x: x.len() });
    }
    Ok(sigmoid(beta.dot(&x)))
}

/// Weighted log-likelihood at `beta`, with probability clamping.
pub fn weighted_log_likelihood(beta: ArrayView1<'_, f64>, design: &DesignMatrix) -> f64 {
    let eta = design.rows().dot(&beta);
    let mut ll = 0.0;
    for ((&e, &y), &w) in eta.iter().zip(design.response()).zip(design.weights()) {
        let p = sigmoid(e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        ll += w * if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
    }
    ll
}

/// Weighted score vector `X' (w .* (y - pi))` at `beta`.
pub fn score_vector(beta: ArrayView1<'_, f64>, design: &DesignMatrix) -> Array1<f64> {
    let eta = design.rows().dot(&beta);
    let mut resid = Array1::zeros(eta.len());
    for (i, &e) in eta.iter().enumerate() {
        resid[i] = design.weights()[i] * (design.response()[i] - sigmoid(e));
    }
    design.rows().t().dot(&resid)
}

fn deviance(beta: ArrayView1<'_, f64>, design: &DesignMatrix) -> f64 {
    -2.0 * weighted_log_likelihood(beta, design)
}

/// Weighted information `X' diag(w pi (1-pi)) X` at `beta`.
fn information(beta: ArrayView1<'_, f64>, design: &DesignMatrix) -> Array2<f64> {
    let eta = design.rows().dot(&beta);
    let mut wdiag = Array1::zeros(eta.len());
    for (i, &e) in eta.iter().enumerate() {
        let p = sigmoid(e);
        wdiag[i] = design.weights()[i] * p * (1.0 - p);
    }
    let scaled = &design.rows() * &wdiag.view().insert_axis(Axis(1));
    design.rows().t().dot(&scaled)
}

/// Asymptotic covariance: inverse of the weighted information at `beta`.
pub fn variance(beta: ArrayView1<'_, f64>, design: &DesignMatrix) -> Result<Array2<f64>, GlmError> {
    let info = information(beta, design);
    let fact = ldlt(info.view(), PIVOT_REL_TOL).map_err(|_| GlmError::SingularInformation)?;
    Ok(fact.inverse())
}

/// Fit a weighted logistic regression by IRLS.
///
/// Separation (a coefficient walking past `divergence_bound`, or the deviance
/// vanishing) is flagged on the returned fit rather than reported as an
/// error, so ensemble callers can keep degenerate replicates.
pub fn fit(design: &DesignMatrix, control: &FitControl) -> Result<FittedLogistic, GlmError> {
    let mut has_event = false;
    let mut has_nonevent = false;
    for (&y, &w) in design.response().iter().zip(design.weights()) {
        if w > 0.0 {
            if y == 1.0 {
                has_event = true;
            } else {
                has_nonevent = true;
            }
        }
    }
    if !(has_event && has_nonevent) {
        return Err(GlmError::AllOneClass);
    }

    let p = design.n_cols();
    let mut beta = Array1::zeros(p);
    let mut dev = deviance(beta.view(), design);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    for iter in 1..=control.max_iterations {
        iterations = iter;
        let score = score_vector(beta.view(), design);
        let info = information(beta.view(), design);
        let fact = match ldlt(info.view(), PIVOT_REL_TOL) {
            Ok(f) => f,
            // At beta = 0 the weights are w/4, so a singular information
            // means genuinely collinear columns. Later on it means the
            // fitted probabilities saturated, which is the separation
            // pathway: keep the last iterate and flag it.
            Err(_) if iter > 1 => {
                separated = true;
                break;
            }
            Err(_) => return Err(GlmError::SingularInformation),
        };
        let delta = fact.solve(score.view());
        beta += &delta;
        let new_dev = deviance(beta.view(), design);
        let rel = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        dev = new_dev;
        if beta.iter().any(|b| b.abs() > control.divergence_bound) {
            separated = true;
            break;
        }
        if rel <= control.tolerance {
            converged = true;
            break;
        }
    }

    if dev <= SEPARATION_DEVIANCE_EPS {
        separated = true;
    }
    if !converged && !separated {
        return Err(GlmError::NoConvergence(iterations));
    }

    // A singular information at the returned optimum means the likelihood is
    // flat in some direction there (e.g. a dummy level with no events whose
    // coefficient walks to -inf): quasi-separation. Flag it and zero the
    // covariance; the iterate itself is still a usable predictor.
    let covariance = match variance(beta.view(), design) {
        Ok(cov) => cov,
        Err(_) => {
            separated = true;
            Array2::zeros((p, p))
        }
    };

    Ok(FittedLogistic {
        beta,
        covariance,
        converged,
        iterations,
        final_deviance: dev,
        separation_flag: separated,
    })
}
