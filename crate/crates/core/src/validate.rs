//! Evaluation protocols: rolling-origin (longitudinal) validation,
//! leave-one-out cross-validation, and a fixed train/test split, plus the
//! repeated rate sweep used by the experiment tables.
//!
//! The longitudinal protocol is the structural guarantee of the crate: the
//! model scoring horizon `t` is trained on records with `time_index < t` and
//! nothing else, so no future information can leak into a prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{encode, DataError, DesignMatrix, EncodeOptions, Panel};
use crate::ensemble::{predict_aggregate, train_ensemble, EnsembleError, EnsembleModel};
use crate::glm::FitControl;
use crate::metrics::{auc, confusion, peirce, sens_spec, MetricsError, ScoredPair};
use crate::resample::{LabeledSet, SamplerSpec};
use crate::rng::{derive_seed, domain};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("panel has no horizon boundaries")]
    NoHorizons,
    #[error("seed history before the first horizon lacks one of the classes")]
    NoSeedHistory,
    #[error("training data contains a single class")]
    OneClassOnly,
    #[error("{side} side of the split at time {boundary} is empty")]
    EmptySide { side: &'static str, boundary: u64 },
    #[error("LOOCV needs at least 2 prediction records, found {0}")]
    TooFewPredictionRecords(usize),
    #[error("rate sweep needs at least 2 repeats, got {0}")]
    TooFewRepeats(usize),
    #[error("rate sweep grid is empty")]
    EmptyGrid,
    #[error("ensemble size {0} outside 1..=1000")]
    InvalidEnsembleSize(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Glm(#[from] crate::glm::GlmError),
    #[error(transparent)]
    Metrics(MetricsError),
}

impl From<MetricsError> for ValidationError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::OneClassOnly => ValidationError::OneClassOnly,
            other => ValidationError::Metrics(other),
        }
    }
}

/// Everything needed to train one model: sampler, ensemble size, seed, fit
/// control and encoding options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelRecipe {
    pub spec: SamplerSpec,
    pub k: usize,
    pub seed: u64,
    pub fit: FitControl,
    pub encode: EncodeOptions,
    /// Compute SMOTE/Tomek distances over every encoded column instead of
    /// the numeric covariates only.
    pub smote_distance_all_columns: bool,
}

impl Default for ModelRecipe {
    fn default() -> Self {
        Self {
            spec: SamplerSpec::identity(),
            k: 20,
            seed: 0,
            fit: FitControl::default(),
            encode: EncodeOptions::default(),
            smote_distance_all_columns: false,
        }
    }
}

impl ModelRecipe {
    fn check(&self) -> Result<(), ValidationError> {
        if !(1..=1000).contains(&self.k) {
            return Err(ValidationError::InvalidEnsembleSize(self.k));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Protocol {
    Longitudinal,
    Loocv,
    Split { boundary: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub time_index: u64,
    pub n_train: usize,
    pub n_events_train: usize,
    pub n_predicted: usize,
}

/// Pooled prediction pairs and the metrics derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub pairs: Vec<ScoredPair>,
    pub auc: f64,
    pub peirce: f64,
    pub gamma_star: f64,
    pub sens_at_star: f64,
    pub spec_at_star: f64,
    pub per_step: Vec<StepDiagnostics>,
    /// Scored rows whose individual was unseen at training time.
    pub unseen_individuals: usize,
    pub dropped_replicates: usize,
    pub separated_replicates: usize,
}

fn finalize(
    protocol: Protocol,
    pairs: Vec<ScoredPair>,
    per_step: Vec<StepDiagnostics>,
    unseen: usize,
    dropped: usize,
    separated: usize,
) -> Result<EvalReport, ValidationError> {
    let auc_value = auc(&pairs)?;
    let pr = peirce(&pairs)?;
    let at_star = sens_spec(&confusion(&pairs, pr.gamma_star)?);
    Ok(EvalReport {
        protocol,
        pairs,
        auc: auc_value,
        peirce: pr.peirce,
        gamma_star: pr.gamma_star,
        sens_at_star: at_star.sensitivity,
        spec_at_star: at_star.specificity,
        per_step,
        unseen_individuals: unseen,
        dropped_replicates: dropped,
        separated_replicates: separated,
    })
}

fn has_both_classes(panel: &Panel, indices: &[usize]) -> bool {
    let mut event = false;
    let mut nonevent = false;
    for &i in indices {
        if panel.records()[i].is_event() {
            event = true;
        } else {
            nonevent = true;
        }
        if event && nonevent {
            return true;
        }
    }
    false
}

fn train_on(
    panel: &Panel,
    indices: &[usize],
    recipe: &ModelRecipe,
    fit_seed: u64,
) -> Result<(DesignMatrix, EnsembleModel), ValidationError> {
    let design = encode(panel, indices, &recipe.encode)?;
    let model = {
        let set = if recipe.smote_distance_all_columns {
            LabeledSet::from_design_all_columns(&design)
        } else {
            LabeledSet::from_design(&design)
        };
        train_ensemble(&design, &set, &recipe.spec, recipe.k, fit_seed, &recipe.fit)?
    };
    Ok((design, model))
}

struct HorizonOutcome {
    pairs: Vec<ScoredPair>,
    step: StepDiagnostics,
    unseen: usize,
    dropped: usize,
    separated: usize,
}

fn score_rows(
    panel: &Panel,
    rows: &[usize],
    design: &DesignMatrix,
    model: &EnsembleModel,
    time_index: u64,
    n_train: usize,
    n_events_train: usize,
) -> Result<HorizonOutcome, ValidationError> {
    let mut pairs = Vec::with_capacity(rows.len());
    let mut unseen = 0;
    for &idx in rows {
        let rec = &panel.records()[idx];
        let (x, is_unseen) = design.encoding().encode_record(rec)?;
        unseen += usize::from(is_unseen);
        let score = predict_aggregate(model, ndarray::ArrayView1::from(&x))?;
        pairs.push(ScoredPair::new(score, rec.outcome, rec.time_index, rec.individual_id.clone()));
    }
    Ok(HorizonOutcome {
        pairs,
        step: StepDiagnostics {
            time_index,
            n_train,
            n_events_train,
            n_predicted: rows.len(),
        },
        unseen,
        dropped: model.diagnostics.failed,
        separated: model.diagnostics.separated,
    })
}

/// Rolling-origin evaluation: at each horizon `t`, train on everything
/// strictly before `t` and score the records at `t`; pool all pairs.
pub fn longitudinal_eval(panel: &Panel, recipe: &ModelRecipe) -> Result<EvalReport, ValidationError> {
    recipe.check()?;
    let horizons = panel.horizon_boundaries().to_vec();
    if horizons.is_empty() {
        return Err(ValidationError::NoHorizons);
    }
    let seed_history = panel.indices_before(horizons[0]);
    if !has_both_classes(panel, &seed_history) {
        return Err(ValidationError::NoSeedHistory);
    }

    // Horizons are independent given the panel (training is a strict-past
    // prefix), so they can run in parallel without changing any result.
    let outcomes: Vec<Option<HorizonOutcome>> = horizons
        .par_iter()
        .enumerate()
        .map(|(h, &t)| -> Result<Option<HorizonOutcome>, ValidationError> {
            let predict_idx = panel.indices_at(t);
            let train_idx = panel.indices_before(t);
            if predict_idx.is_empty() {
                return Ok(Some(HorizonOutcome {
                    pairs: Vec::new(),
                    step: StepDiagnostics {
                        time_index: t,
                        n_train: train_idx.len(),
                        n_events_train: train_idx
                            .iter()
                            .filter(|&&i| panel.records()[i].is_event())
                            .count(),
                        n_predicted: 0,
                    },
                    unseen: 0,
                    dropped: 0,
                    separated: 0,
                }));
            }
            let fit_seed = derive_seed(recipe.seed, &[domain::HORIZON_FIT, h as u64]);
            let (design, model) = train_on(panel, &train_idx, recipe, fit_seed)?;
            let n_events =
                train_idx.iter().filter(|&&i| panel.records()[i].is_event()).count();
            score_rows(panel, &predict_idx, &design, &model, t, train_idx.len(), n_events)
                .map(Some)
        })
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    let mut per_step = Vec::new();
    let (mut unseen, mut dropped, mut separated) = (0, 0, 0);
    for outcome in outcomes.into_iter().flatten() {
        pairs.extend(outcome.pairs);
        per_step.push(outcome.step);
        unseen += outcome.unseen;
        dropped += outcome.dropped;
        separated += outcome.separated;
    }
    finalize(Protocol::Longitudinal, pairs, per_step, unseen, dropped, separated)
}

/// Leave-one-out: every horizon record is scored by a model trained on all
/// other records, past and future alike.
pub fn loocv_eval(panel: &Panel, recipe: &ModelRecipe) -> Result<EvalReport, ValidationError> {
    recipe.check()?;
    let prediction = panel.prediction_indices();
    if prediction.len() < 2 {
        return Err(ValidationError::TooFewPredictionRecords(prediction.len()));
    }
    let n = panel.records().len();

    let outcomes: Vec<HorizonOutcome> = prediction
        .par_iter()
        .enumerate()
        .map(|(fold, &held_out)| -> Result<HorizonOutcome, ValidationError> {
            let train_idx: Vec<usize> = (0..n).filter(|&i| i != held_out).collect();
            if !has_both_classes(panel, &train_idx) {
                return Err(ValidationError::OneClassOnly);
            }
            let fit_seed = derive_seed(recipe.seed, &[domain::FOLD_FIT, fold as u64]);
            let (design, model) = train_on(panel, &train_idx, recipe, fit_seed)?;
            let n_events =
                train_idx.iter().filter(|&&i| panel.records()[i].is_event()).count();
            score_rows(
                panel,
                &[held_out],
                &design,
                &model,
                panel.records()[held_out].time_index,
                train_idx.len(),
                n_events,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    let mut per_step = Vec::new();
    let (mut unseen, mut dropped, mut separated) = (0, 0, 0);
    for outcome in outcomes {
        pairs.extend(outcome.pairs);
        per_step.push(outcome.step);
        unseen += outcome.unseen;
        dropped += outcome.dropped;
        separated += outcome.separated;
    }
    finalize(Protocol::Loocv, pairs, per_step, unseen, dropped, separated)
}

/// Fixed split: one model trained on records before `boundary` scores every
/// horizon record at or after it.
pub fn split_eval(
    panel: &Panel,
    boundary: u64,
    recipe: &ModelRecipe,
) -> Result<EvalReport, ValidationError> {
    recipe.check()?;
    let train_idx = panel.indices_before(boundary);
    if train_idx.is_empty() {
        return Err(ValidationError::EmptySide { side: "training", boundary });
    }
    let test_horizons: Vec<u64> = panel
        .horizon_boundaries()
        .iter()
        .copied()
        .filter(|&t| t >= boundary)
        .collect();
    let test_total: usize = test_horizons.iter().map(|&t| panel.indices_at(t).len()).sum();
    if test_total == 0 {
        return Err(ValidationError::EmptySide { side: "test", boundary });
    }
    if !has_both_classes(panel, &train_idx) {
        return Err(ValidationError::OneClassOnly);
    }

    let fit_seed = derive_seed(recipe.seed, &[domain::SPLIT_FIT]);
    let (design, model) = train_on(panel, &train_idx, recipe, fit_seed)?;
    let n_events = train_idx.iter().filter(|&&i| panel.records()[i].is_event()).count();

    let mut pairs = Vec::new();
    let mut per_step = Vec::new();
    let mut unseen = 0;
    for &t in &test_horizons {
        let rows = panel.indices_at(t);
        let outcome =
            score_rows(panel, &rows, &design, &model, t, train_idx.len(), n_events)?;
        pairs.extend(outcome.pairs);
        per_step.push(outcome.step);
        unseen += outcome.unseen;
    }
    finalize(
        Protocol::Split { boundary },
        pairs,
        per_step,
        unseen,
        model.diagnostics.failed,
        model.diagnostics.separated,
    )
}

/// One point of the ensemble-size curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KCurvePoint {
    pub k: usize,
    pub auc: f64,
    pub peirce: f64,
}

/// Longitudinal AUC/Peirce as a function of the ensemble size, for every
/// `k = 1..=k_max` in one pass.
///
/// Replicate `i` is seeded independently of `k_max`, so the prefix of the
/// first `k` replicates reproduces `train_ensemble` with `K = k` exactly;
/// the curve points coincide with separate runs at each size.
pub fn longitudinal_kcurve(
    panel: &Panel,
    recipe: &ModelRecipe,
    k_max: usize,
) -> Result<Vec<KCurvePoint>, ValidationError> {
    let full = ModelRecipe { k: k_max, ..recipe.clone() };
    full.check()?;
    let horizons = panel.horizon_boundaries().to_vec();
    if horizons.is_empty() {
        return Err(ValidationError::NoHorizons);
    }
    let seed_history = panel.indices_before(horizons[0]);
    if !has_both_classes(panel, &seed_history) {
        return Err(ValidationError::NoSeedHistory);
    }

    // Per scored record: outcome metadata plus per-replicate (index, prob).
    struct RecordProbs {
        outcome: u8,
        time_index: u64,
        individual_id: String,
        replicate_indices: Vec<usize>,
        probs: Vec<f64>,
    }

    let per_horizon: Vec<Vec<RecordProbs>> = horizons
        .par_iter()
        .enumerate()
        .map(|(h, &t)| -> Result<Vec<RecordProbs>, ValidationError> {
            let predict_idx = panel.indices_at(t);
            if predict_idx.is_empty() {
                return Ok(Vec::new());
            }
            let train_idx = panel.indices_before(t);
            let fit_seed = derive_seed(full.seed, &[domain::HORIZON_FIT, h as u64]);
            let (design, model) = train_on(panel, &train_idx, &full, fit_seed)?;
            let mut out = Vec::with_capacity(predict_idx.len());
            for &idx in &predict_idx {
                let rec = &panel.records()[idx];
                let (x, _) = design.encoding().encode_record(rec)?;
                let xv = ndarray::ArrayView1::from(&x);
                let mut replicate_indices = Vec::with_capacity(model.replicates.len());
                let mut probs = Vec::with_capacity(model.replicates.len());
                for rep in &model.replicates {
                    replicate_indices.push(rep.index);
                    probs.push(rep.fit.predict(xv)?);
                }
                out.push(RecordProbs {
                    outcome: rec.outcome,
                    time_index: rec.time_index,
                    individual_id: rec.individual_id.clone(),
                    replicate_indices,
                    probs,
                });
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let records: Vec<&RecordProbs> = per_horizon.iter().flatten().collect();
    let mut curve = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut pairs = Vec::with_capacity(records.len());
        for rp in &records {
            let c = rp.replicate_indices.partition_point(|&i| i < k);
            if c == 0 {
                return Err(ValidationError::Ensemble(EnsembleError::AllReplicatesFailed {
                    requested: k,
                    last: "no surviving replicate in prefix".to_string(),
                }));
            }
            let score = rp.probs[..c].iter().sum::<f64>() / c as f64;
            pairs.push(ScoredPair::new(
                score,
                rp.outcome,
                rp.time_index,
                rp.individual_id.clone(),
            ));
        }
        let auc_value = auc(&pairs)?;
        let pr = peirce(&pairs)?;
        curve.push(KCurvePoint { k, auc: auc_value, peirce: pr.peirce });
    }
    Ok(curve)
}

/// One row of a sweep table: repeat statistics for one sampler spec.
///
/// `sens_at_star`/`spec_at_star` come from the repeat whose Peirce index is
/// closest to the mean (first such repeat on ties), the same convention the
/// comparison tables use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_pi: f64,
    pub std_pi: f64,
    pub sens_at_star: f64,
    pub spec_at_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub repeats: usize,
    pub k: usize,
    pub seed: u64,
}

impl SweepTable {
    /// CSV with the comparison-table layout.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "spec,mean_auc,std_auc,mean_pi,std_pi,mean_sens_at_star,mean_spec_at_star")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.spec,
                row.mean_auc,
                row.std_auc,
                row.mean_pi,
                row.std_pi,
                row.sens_at_star,
                row.spec_at_star
            )?;
        }
        Ok(())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// For each grid spec, run `repeats` longitudinal evaluations with
/// independent derived seeds and summarize AUC and Peirce index.
pub fn rate_sweep(
    panel: &Panel,
    grid: &[SamplerSpec],
    repeats: usize,
    k: usize,
    seed: u64,
    template: &ModelRecipe,
) -> Result<SweepTable, ValidationError> {
    if grid.is_empty() {
        return Err(ValidationError::EmptyGrid);
    }
    if repeats < 2 {
        return Err(ValidationError::TooFewRepeats(repeats));
    }

    let cells: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|g| (0..repeats).map(move |r| (g, r))).collect();
    let reports: Vec<EvalReport> = cells
        .par_iter()
        .map(|&(g, r)| {
            let recipe = ModelRecipe {
                spec: grid[g].clone(),
                k,
                seed: derive_seed(seed, &[domain::SWEEP_CELL, g as u64, domain::REPEAT, r as u64]),
                ..template.clone()
            };
            longitudinal_eval(panel, &recipe)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(grid.len());
    for (g, spec) in grid.iter().enumerate() {
        let runs = &reports[g * repeats..(g + 1) * repeats];
        let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
        let pis: Vec<f64> = runs.iter().map(|r| r.peirce).collect();
        let mean_pi = mean(&pis);
        let mut representative = 0;
        for (i, run) in runs.iter().enumerate() {
            if (run.peirce - mean_pi).abs() < (runs[representative].peirce - mean_pi).abs() {
                representative = i;
            }
        }
        rows.push(SweepRow {
            spec: spec.to_string(),
            mean_auc: mean(&aucs),
            std_auc: sample_std(&aucs),
            mean_pi,
            std_pi: sample_std(&pis),
            sens_at_star: runs[representative].sens_at_star,
            spec_at_star: runs[representative].spec_at_star,
        });
    }
    Ok(SweepTable { rows, repeats, k, seed })
}
