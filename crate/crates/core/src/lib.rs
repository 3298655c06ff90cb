//! Rare-event prediction for longitudinal follow-up studies.
//!
//! The crate trains logistic regressions on imbalanced longitudinal panels,
//! rebalanced by resampling (random over/under sampling, case-control rates,
//! SMOTE, Tomek-link cleaning, bootstrap variants and hybrid chains) and
//! aggregated over ensembles of resampled replicates. Models are scored under
//! rolling-origin (longitudinal) validation as well as leave-one-out and
//! fixed-split protocols, with ROC/AUC/Peirce-index metrics, plus a seeded
//! synthetic panel generator for experiments.

pub mod data;
pub mod glm;
pub mod ensemble;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod synth;
pub mod validate;

pub use data::{
    emit_csv, encode, ingest_csv, DataError, DesignMatrix, EncodeOptions, Encoding,
    ObservationRecord, Panel, ReferencePolicy, SchemaConfig,
};
pub use glm::{fit, predict_probability, variance, FitControl, FittedLogistic, GlmError};
pub use metrics::{
    auc, confusion, peirce, roc, sens_spec, ConfusionCounts, MetricsError, PeirceResult, RocCurve,
    ScoredPair, SensSpec,
};
pub use rng::{derive_seed, SeedStream};
