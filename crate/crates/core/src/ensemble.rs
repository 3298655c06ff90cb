//! Resample-fit-aggregate ensembles: K logistic replicates trained on K
//! independent resamples of one training design, predictions averaged on the
//! probability scale.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DesignMatrix;
use crate::glm::{fit, FitControl, FittedLogistic, GlmError};
use crate::resample::{
    apply_chain, materialize_weighted, LabeledSet, Provenance, ResampleError, SamplerSpec,
};
use crate::rng::{derive_seed, domain};

/// Retries with fresh seeds when a resampled replicate turns out one-class.
const MAX_RETRIES: u64 = 10;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("all {requested} replicates failed; last error: {last}")]
    AllReplicatesFailed { requested: usize, last: String },
    #[error("ensemble holds no replicates")]
    NoReplicates,
    #[error(transparent)]
    Glm(#[from] GlmError),
}

/// One trained replicate with the resampling provenance that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub fit: FittedLogistic,
    pub provenance: Provenance,
    /// How many seeds were tried before the fit succeeded (0 = first try).
    pub retries: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleDiagnostics {
    /// Replicates whose fit carries the separation flag (kept in the mean).
    pub separated: usize,
    /// Replicates that errored and were dropped from the mean.
    pub failed: usize,
    /// Replicates that needed at least one fresh-seed retry.
    pub retried: usize,
}

/// K-replicate ensemble over one encoded training subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    /// Successful replicates in ascending replicate order.
    pub replicates: Vec<Replicate>,
    pub k_requested: usize,
    pub base_seed: u64,
    pub spec: SamplerSpec,
    pub diagnostics: EnsembleDiagnostics,
}

enum ReplicateError {
    Resample(ResampleError),
    Fit(GlmError),
}

impl std::fmt::Display for ReplicateError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReplicateError::Resample(e) => write!(f, "{e}"),
            ReplicateError::Fit(e) => write!(f, "{e}"),
        }
    }
}

fn train_replicate(
    design: &DesignMatrix,
    set: &LabeledSet<'_>,
    spec: &SamplerSpec,
    base_seed: u64,
    index: usize,
    control: &FitControl,
) -> Result<Replicate, ReplicateError> {
    let mut last = None;
    for attempt in 0..=MAX_RETRIES {
        let seed = if attempt == 0 {
            derive_seed(base_seed, &[domain::REPLICATE, index as u64])
        } else {
            derive_seed(base_seed, &[domain::REPLICATE, index as u64, domain::RETRY, attempt])
        };
        let resampled = match apply_chain(set, spec, seed) {
            Ok(rs) => rs,
            Err(e) => return Err(ReplicateError::Resample(e)),
        };
        let materialized = materialize_weighted(design, &resampled);
        match fit(&materialized, control) {
            Ok(fitted) => {
                return Ok(Replicate {
                    index,
                    fit: fitted,
                    provenance: resampled.provenance,
                    retries: attempt,
                })
            }
            // A degenerate resample (one-class, or rank collapse because an
            // undersample emptied some dummy column) gets a fresh seed;
            // anything else fails the replicate.
            Err(e @ (GlmError::AllOneClass | GlmError::SingularInformation)) => {
                last = Some(ReplicateError::Fit(e))
            }
            Err(e) => return Err(ReplicateError::Fit(e)),
        }
    }
    Err(last.expect("at least one attempt ran"))
}

/// Train `k` replicates: replicate `i` resamples with the stream derived from
/// `(seed, REPLICATE, i)`, is materialized with duplicates as weights and
/// synthetic rows appended, and is fit by IRLS. Separated replicates are
/// retained; errored replicates are dropped and counted.
///
/// Replicates are trained in parallel; results are identical to sequential
/// execution because every replicate depends only on its derived seed.
pub fn train_ensemble(
    design: &DesignMatrix,
    set: &LabeledSet<'_>,
    spec: &SamplerSpec,
    k: usize,
    seed: u64,
    control: &FitControl,
) -> Result<EnsembleModel, EnsembleError> {
    assert!(k >= 1, "ensemble size must be at least 1");
    let results: Vec<Result<Replicate, ReplicateError>> = (0..k)
        .into_par_iter()
        .map(|i| train_replicate(design, set, spec, seed, i, control))
        .collect();

    let mut replicates = Vec::with_capacity(k);
    let mut diagnostics = EnsembleDiagnostics::default();
    let mut last_error = String::new();
    for result in results {
        match result {
            Ok(rep) => {
                diagnostics.separated += usize::from(rep.fit.separation_flag);
                diagnostics.retried += usize::from(rep.retries > 0);
                replicates.push(rep);
            }
            Err(e) => {
                diagnostics.failed += 1;
                last_error = e.to_string();
            }
        }
    }
    if replicates.is_empty() {
        return Err(EnsembleError::AllReplicatesFailed { requested: k, last: last_error });
    }
    Ok(EnsembleModel {
        replicates,
        k_requested: k,
        base_seed: seed,
        spec: spec.clone(),
        diagnostics,
    })
}

/// Aggregate prediction: the arithmetic mean of the replicate probabilities,
/// summed in replicate order.
pub fn predict_aggregate(
    model: &EnsembleModel,
    x: ArrayView1<'_, f64>,
) -> Result<f64, EnsembleError> {
    if model.replicates.is_empty() {
        return Err(EnsembleError::NoReplicates);
    }
    let mut sum = 0.0;
    for rep in &model.replicates {
        sum += rep.fit.predict(x)?;
    }
    Ok(sum / model.replicates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::predict_probability;
    use ndarray::{array, Array1, Array2};

    /// Imbalanced 1-covariate design with a mild signal.
    fn toy_design(n_maj: usize, n_min: usize) -> DesignMatrix {
        let n = n_maj + n_min;
        let mut rows = Array2::ones((n, 2));
        let mut y = Array1::zeros(n);
        for i in 0..n_maj {
            rows[[i, 1]] = -1.0 + 0.11 * (i % 13) as f64;
        }
        for j in 0..n_min {
            rows[[n_maj + j, 1]] = 0.4 + 0.3 * (j % 5) as f64;
            y[n_maj + j] = 1.0;
        }
        DesignMatrix::raw(rows, y)
    }

    #[test]
    fn single_identity_replicate_equals_plain_fit() {
        let design = toy_design(30, 5);
        let set = LabeledSet::from_design(&design);
        let model = train_ensemble(
            &design,
            &set,
            &SamplerSpec::identity(),
            1,
            99,
            &FitControl::default(),
        )
        .unwrap();
        let plain = fit(&design, &FitControl::default()).unwrap();
        assert_eq!(model.replicates.len(), 1);
        assert_eq!(model.replicates[0].fit.beta, plain.beta);
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let design = toy_design(40, 6);
        let set = LabeledSet::from_design(&design);
        let spec = SamplerSpec::parse("under(0.4)").unwrap();
        let control = FitControl::default();
        let a = train_ensemble(&design, &set, &spec, 2, 7, &control).unwrap();
        let b = train_ensemble(&design, &set, &spec, 2, 7, &control).unwrap();
        let betas_a: Vec<Vec<u64>> = a
            .replicates
            .iter()
            .map(|r| r.fit.beta.iter().map(|v| v.to_bits()).collect())
            .collect();
        let betas_b: Vec<Vec<u64>> = b
            .replicates
            .iter()
            .map(|r| r.fit.beta.iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(betas_a, betas_b);
    }

    #[test]
    fn resampled_replicates_differ_from_each_other() {
        let design = toy_design(60, 8);
        let set = LabeledSet::from_design(&design);
        let spec = SamplerSpec::parse("under(0.3)").unwrap();
        let model = train_ensemble(&design, &set, &spec, 8, 3, &FitControl::default()).unwrap();
        let first = &model.replicates[0].fit.beta;
        assert!(
            model.replicates.iter().any(|r| r.fit.beta != *first),
            "resampling must induce replicate-to-replicate variation"
        );
    }

    #[test]
    fn aggregate_is_mean_of_replicate_probabilities() {
        let design = toy_design(20, 4);
        let set = LabeledSet::from_design(&design);
        let spec = SamplerSpec::parse("boot(strat)").unwrap();
        let model = train_ensemble(&design, &set, &spec, 3, 11, &FitControl::default()).unwrap();
        let x = array![1.0, 0.2];
        let probs: Vec<f64> = model
            .replicates
            .iter()
            .map(|r| predict_probability(r.fit.beta.view(), x.view()).unwrap())
            .collect();
        let want = probs.iter().sum::<f64>() / probs.len() as f64;
        let got = predict_aggregate(&model, x.view()).unwrap();
        assert_eq!(got, want);
        let lo = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(got >= lo && got <= hi);
    }

    #[test]
    fn all_replicates_failing_is_an_error() {
        let design = toy_design(10, 2);
        let set = LabeledSet::from_design(&design);
        // k exceeds the available minority neighbors, so every replicate fails.
        let spec = SamplerSpec::parse("smote(k=5,m=1)").unwrap();
        let err =
            train_ensemble(&design, &set, &spec, 4, 1, &FitControl::default()).unwrap_err();
        assert!(matches!(err, EnsembleError::AllReplicatesFailed { requested: 4, .. }));
    }

    #[test]
    fn dimension_mismatch_propagates() {
        let design = toy_design(20, 4);
        let set = LabeledSet::from_design(&design);
        let model = train_ensemble(
            &design,
            &set,
            &SamplerSpec::identity(),
            1,
            1,
            &FitControl::default(),
        )
        .unwrap();
        let bad = array![1.0, 0.0, 3.0];
        assert!(predict_aggregate(&model, bad.view()).is_err());
    }
}
