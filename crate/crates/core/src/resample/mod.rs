//! Dataset rebalancing: random under/oversampling, case-control rates,
//! SMOTE, Tomek-link cleaning, per-class bootstraps, and hybrid chains.
//!
//! Samplers act on a [`LabeledSet`] view of encoded rows and produce a
//! [`ResampledSet`]: a multiset of source row indices plus any synthetic
//! rows. Nothing is copied until the result is materialized against the
//! design matrix, either as physical duplicate rows or as integer weights
//! (the two are equivalent for fitting, which is the point of the
//! resampling-as-weighted-likelihood identity).

mod spec;

pub use spec::{BootstrapTarget, SamplerSpec, SamplerStage, SpecParseError};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DesignMatrix;
use crate::rng::{derive_seed, domain, SeedStream};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("the {0} class is empty")]
    EmptyClass(&'static str),
    #[error("{what} {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("oversampling target {target} is below the current minority count {current}")]
    RatioWouldShrinkMinority { target: usize, current: usize },
    #[error("SMOTE needs at least 2 minority rows, found {0}")]
    TooFewMinority(usize),
    #[error("SMOTE k={k} exceeds the {available} available minority neighbors")]
    KTooLarge { k: usize, available: usize },
}

/// Borrowed view of labeled rows: features, event indicator per row, and the
/// feature columns that participate in nearest-neighbor distances.
///
/// Events (`label == true`) are the minority class throughout; non-events the
/// majority.
pub struct LabeledSet<'a> {
    features: ArrayView2<'a, f64>,
    labels: Vec<bool>,
    distance_columns: Vec<usize>,
}

impl<'a> LabeledSet<'a> {
    pub fn new(
        features: ArrayView2<'a, f64>,
        labels: Vec<bool>,
        distance_columns: Vec<usize>,
    ) -> Self {
        assert_eq!(features.nrows(), labels.len());
        Self { features, labels, distance_columns }
    }

    /// View of a design matrix using its numeric covariate columns for
    /// distances, so the one-hot individual block never enters a
    /// nearest-neighbor computation.
    pub fn from_design(design: &'a DesignMatrix) -> Self {
        Self::new(design.rows(), design.labels(), design.encoding().numeric_columns())
    }

    /// Same view, but with distances over every encoded column (the
    /// documented deviation knob for SMOTE/Tomek).
    pub fn from_design_all_columns(design: &'a DesignMatrix) -> Self {
        Self::new(design.rows(), design.labels(), (0..design.n_cols()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A SMOTE-generated row, with its parents recorded for auditability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    /// `base + u * (neighbor - base)`, full feature width; outcome is 1.
    pub features: Vec<f64>,
    pub base: Vec<f64>,
    pub neighbor: Vec<f64>,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: SamplerSpec,
    pub seed: u64,
    pub stage_seeds: Vec<u64>,
    /// Set when the chain runs oversampling before undersampling, against
    /// the usual convention.
    pub order_warning: bool,
}

/// Result of resampling: a sorted multiset of source row indices plus
/// synthetic rows, with full provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampledSet {
    pub row_indices: Vec<usize>,
    pub synthetic_rows: Vec<SyntheticRow>,
    pub provenance: Provenance,
}

impl ResampledSet {
    pub fn total_len(&self) -> usize {
        self.row_indices.len() + self.synthetic_rows.len()
    }

    /// Non-event rows in the result (synthetic rows are always events).
    pub fn majority_count(&self, set: &LabeledSet<'_>) -> usize {
        self.row_indices.iter().filter(|&&i| !set.labels[i]).count()
    }

    /// Event rows in the result, including synthetic ones.
    pub fn minority_count(&self, set: &LabeledSet<'_>) -> usize {
        self.row_indices.iter().filter(|&&i| set.labels[i]).count() + self.synthetic_rows.len()
    }
}

/// Running multiset state while a chain is applied.
#[derive(Clone, Debug)]
struct Working {
    rows: Vec<usize>,
    synthetic: Vec<SyntheticRow>,
}

impl Working {
    fn full(set: &LabeledSet<'_>) -> Self {
        Self { rows: (0..set.len()).collect(), synthetic: Vec::new() }
    }
}

/// A row occurrence in the running set: either a source row (by index) or a
/// synthetic row (by position in the synthetic list).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Entry {
    Source(usize),
    Synth(usize),
}

fn feature(set: &LabeledSet<'_>, w: &Working, entry: Entry, col: usize) -> f64 {
    match entry {
        Entry::Source(i) => set.features[[i, col]],
        Entry::Synth(j) => w.synthetic[j].features[col],
    }
}

fn feature_vec(set: &LabeledSet<'_>, w: &Working, entry: Entry) -> Vec<f64> {
    match entry {
        Entry::Source(i) => set.features.row(i).to_vec(),
        Entry::Synth(j) => w.synthetic[j].features.clone(),
    }
}

fn dist2(set: &LabeledSet<'_>, w: &Working, a: Entry, b: Entry) -> f64 {
    set.distance_columns
        .iter()
        .map(|&c| {
            let d = feature(set, w, a, c) - feature(set, w, b, c);
            d * d
        })
        .sum()
}

/// Occurrences in canonical order: source rows first (multiset order), then
/// synthetic rows.
fn occurrences(w: &Working) -> Vec<Entry> {
    w.rows
        .iter()
        .map(|&i| Entry::Source(i))
        .chain((0..w.synthetic.len()).map(Entry::Synth))
        .collect()
}

fn is_event(set: &LabeledSet<'_>, entry: Entry) -> bool {
    match entry {
        Entry::Source(i) => set.labels[i],
        Entry::Synth(_) => true,
    }
}

/// Round-half-away-from-zero, floored at one row.
fn target_count(x: f64) -> usize {
    x.round().max(1.0) as usize
}

/// Undersampling rate achieving expected 1:1 balance at event proportion `p`.
pub fn case_control_rate(p: f64) -> Result<f64, ResampleError> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(ResampleError::OutOfRange { what: "event proportion", value: p });
    }
    Ok((1.0 - 2.0 * p) / (1.0 - p))
}

fn stage_under<R: Rng>(
    set: &LabeledSet<'_>,
    w: &Working,
    rate: f64,
    rng: &mut R,
) -> Result<Working, ResampleError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(ResampleError::OutOfRange { what: "undersampling rate", value: rate });
    }
    let (minority, majority): (Vec<usize>, Vec<usize>) =
        w.rows.iter().partition(|&&i| set.labels[i]);
    if majority.is_empty() {
        return Err(ResampleError::EmptyClass("majority"));
    }
    let keep = target_count((1.0 - rate) * majority.len() as f64).min(majority.len());
    let mut chosen: Vec<usize> =
        rand::seq::index::sample(rng, majority.len(), keep).into_iter().collect();
    chosen.sort_unstable();
    let mut rows: Vec<usize> = minority;
    rows.extend(chosen.into_iter().map(|pos| majority[pos]));
    rows.sort_unstable();
    Ok(Working { rows, synthetic: w.synthetic.clone() })
}

fn stage_case_control<R: Rng>(
    set: &LabeledSet<'_>,
    w: &Working,
    rng: &mut R,
) -> Result<Working, ResampleError> {
    let occ = occurrences(w);
    let n_min = occ.iter().filter(|&&e| is_event(set, e)).count();
    let n_maj = occ.len() - n_min;
    if n_min == 0 {
        return Err(ResampleError::EmptyClass("minority"));
    }
    if n_maj == 0 {
        return Err(ResampleError::EmptyClass("majority"));
    }
    let p = n_min as f64 / occ.len() as f64;
    let rate = case_control_rate(p)?;
    stage_under(set, w, rate, rng)
}

fn stage_over<R: Rng>(
    set: &LabeledSet<'_>,
    w: &Working,
    a: u32,
    b: u32,
    rng: &mut R,
) -> Result<Working, ResampleError> {
    let occ = occurrences(w);
    let minority: Vec<Entry> = occ.iter().copied().filter(|&e| is_event(set, e)).collect();
    let n_maj = occ.len() - minority.len();
    if minority.is_empty() {
        return Err(ResampleError::EmptyClass("minority"));
    }
    if n_maj == 0 {
        return Err(ResampleError::EmptyClass("majority"));
    }
    let target = target_count(n_maj as f64 * f64::from(b) / f64::from(a));
    if target < minority.len() {
        return Err(ResampleError::RatioWouldShrinkMinority {
            target,
            current: minority.len(),
        });
    }
    let mut out = w.clone();
    for _ in 0..(target - minority.len()) {
        let pick = minority[rng.gen_range(0..minority.len())];
        match pick {
            Entry::Source(i) => out.rows.push(i),
            Entry::Synth(j) => {
                let clone = w.synthetic[j].clone();
                out.synthetic.push(clone);
            }
        }
    }
    out.rows.sort_unstable();
    Ok(out)
}

/// K nearest minority neighbors of `self_pos` within `minority`, ties broken
/// by the lower occurrence position.
fn nearest_neighbors(
    set: &LabeledSet<'_>,
    w: &Working,
    minority: &[Entry],
    self_pos: usize,
    k: usize,
) -> Vec<usize> {
    let mut by_dist: Vec<(f64, usize)> = minority
        .iter()
        .enumerate()
        .filter(|(pos, _)| *pos != self_pos)
        .map(|(pos, &e)| (dist2(set, w, minority[self_pos], e), pos))
        .collect();
    by_dist.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    by_dist.into_iter().take(k).map(|(_, pos)| pos).collect()
}

fn stage_smote<R: Rng>(
    set: &LabeledSet<'_>,
    w: &Working,
    k: usize,
    m: usize,
    rng: &mut R,
) -> Result<Working, ResampleError> {
    let occ = occurrences(w);
    let minority: Vec<Entry> = occ.iter().copied().filter(|&e| is_event(set, e)).collect();
    if minority.len() < 2 {
        return Err(ResampleError::TooFewMinority(minority.len()));
    }
    if k > minority.len() - 1 {
        return Err(ResampleError::KTooLarge { k, available: minority.len() - 1 });
    }
    let mut created = Vec::with_capacity(minority.len() * m);
    for self_pos in 0..minority.len() {
        let neighbors = nearest_neighbors(set, w, &minority, self_pos, k);
        let base = feature_vec(set, w, minority[self_pos]);
        for _ in 0..m {
            let nn_pos = if k == 1 { neighbors[0] } else { neighbors[rng.gen_range(0..k)] };
            let neighbor = feature_vec(set, w, minority[nn_pos]);
            let u: f64 = rng.gen();
            let features: Vec<f64> =
                base.iter().zip(&neighbor).map(|(&x, &nn)| x + u * (nn - x)).collect();
            created.push(SyntheticRow { features, base: base.clone(), neighbor, u });
        }
    }
    let mut out = w.clone();
    out.synthetic.extend(created);
    Ok(out)
}

fn stage_tomek(set: &LabeledSet<'_>, w: &Working) -> Result<Working, ResampleError> {
    let occ = occurrences(w);
    let n_min = occ.iter().filter(|&&e| is_event(set, e)).count();
    if n_min == 0 {
        return Err(ResampleError::EmptyClass("minority"));
    }
    if occ.len() - n_min == 0 {
        return Err(ResampleError::EmptyClass("majority"));
    }
    // Nearest neighbor of every occurrence over the whole running set,
    // ties broken by the lower position.
    let nn: Vec<usize> = (0..occ.len())
        .map(|p| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (q, &other) in occ.iter().enumerate() {
                if q == p {
                    continue;
                }
                let d = dist2(set, w, occ[p], other);
                if d < best.0 || (d == best.0 && q < best.1) {
                    best = (d, q);
                }
            }
            best.1
        })
        .collect();
    let mut removed = vec![false; occ.len()];
    for (p, &entry) in occ.iter().enumerate() {
        if !is_event(set, entry) {
            continue;
        }
        let q = nn[p];
        if !is_event(set, occ[q]) && nn[q] == p {
            removed[q] = true;
        }
    }
    let rows = occ
        .iter()
        .enumerate()
        .filter(|(p, e)| !removed[*p] && matches!(e, Entry::Source(_)))
        .map(|(_, e)| match e {
            Entry::Source(i) => *i,
            Entry::Synth(_) => unreachable!(),
        })
        .collect();
    Ok(Working { rows, synthetic: w.synthetic.clone() })
}

fn stage_bootstrap<R: Rng>(
    set: &LabeledSet<'_>,
    w: &Working,
    target: BootstrapTarget,
    rng: &mut R,
) -> Result<Working, ResampleError> {
    let occ = occurrences(w);
    let minority: Vec<Entry> = occ.iter().copied().filter(|&e| is_event(set, e)).collect();
    let majority: Vec<Entry> = occ.iter().copied().filter(|&e| !is_event(set, e)).collect();
    let needs_minority = matches!(target, BootstrapTarget::Minority | BootstrapTarget::Stratified);
    let needs_majority = matches!(target, BootstrapTarget::Majority | BootstrapTarget::Stratified);
    if needs_minority && minority.is_empty() {
        return Err(ResampleError::EmptyClass("minority"));
    }
    if needs_majority && majority.is_empty() {
        return Err(ResampleError::EmptyClass("majority"));
    }

    let mut draw = |pool: &[Entry], rng: &mut R| -> Vec<Entry> {
        (0..pool.len()).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    };
    // Majority is drawn before minority so the stream consumption order is
    // fixed for the stratified variant.
    let new_majority = if needs_majority { draw(&majority, rng) } else { majority };
    let new_minority = if needs_minority { draw(&minority, rng) } else { minority };

    let mut rows = Vec::new();
    let mut synthetic = Vec::new();
    for entry in new_majority.into_iter().chain(new_minority) {
        match entry {
            Entry::Source(i) => rows.push(i),
            Entry::Synth(j) => synthetic.push(w.synthetic[j].clone()),
        }
    }
    rows.sort_unstable();
    Ok(Working { rows, synthetic })
}

fn apply_stage<R: Rng>(
    set: &LabeledSet<'_>,
    w: &Working,
    stage: &SamplerStage,
    rng: &mut R,
) -> Result<Working, ResampleError> {
    match stage {
        SamplerStage::Identity => Ok(w.clone()),
        SamplerStage::UnderRandom { rate } => stage_under(set, w, *rate, rng),
        SamplerStage::OverRandom { a, b } => stage_over(set, w, *a, *b, rng),
        SamplerStage::CaseControl => stage_case_control(set, w, rng),
        SamplerStage::Smote { k, m } => stage_smote(set, w, *k, *m, rng),
        SamplerStage::TomekClean => stage_tomek(set, w),
        SamplerStage::Bootstrap(target) => stage_bootstrap(set, w, *target, rng),
    }
}

fn finish(set: &LabeledSet<'_>, spec: &SamplerSpec, seed: u64, w: Working, stage_seeds: Vec<u64>) -> ResampledSet {
    let _ = set;
    ResampledSet {
        row_indices: w.rows,
        synthetic_rows: w.synthetic,
        provenance: Provenance {
            spec: spec.clone(),
            seed,
            stage_seeds,
            order_warning: spec.has_reversed_order(),
        },
    }
}

/// Apply a (possibly chained) sampler spec; stage `i` consumes the stream
/// derived from `(seed, STAGE, i)`.
pub fn apply_chain(
    set: &LabeledSet<'_>,
    spec: &SamplerSpec,
    seed: u64,
) -> Result<ResampledSet, ResampleError> {
    let mut working = Working::full(set);
    let mut stage_seeds = Vec::with_capacity(spec.stages.len());
    for (i, stage) in spec.stages.iter().enumerate() {
        let stage_seed = derive_seed(seed, &[domain::STAGE, i as u64]);
        stage_seeds.push(stage_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed);
        working = apply_stage(set, &working, stage, &mut rng)?;
    }
    Ok(finish(set, spec, seed, working, stage_seeds))
}

/// Keep all events; keep `round((1-rate) * n_majority)` non-events drawn
/// without replacement.
pub fn undersample_random(
    set: &LabeledSet<'_>,
    rate: f64,
    stream: &mut SeedStream,
) -> Result<ResampledSet, ResampleError> {
    let w = stage_under(set, &Working::full(set), rate, stream.rng())?;
    let spec = SamplerSpec::single(SamplerStage::UnderRandom { rate });
    Ok(finish(set, &spec, stream.seed(), w, vec![]))
}

/// Duplicate events at random until there are `a` non-events per `b` events.
pub fn oversample_random(
    set: &LabeledSet<'_>,
    a: u32,
    b: u32,
    stream: &mut SeedStream,
) -> Result<ResampledSet, ResampleError> {
    let w = stage_over(set, &Working::full(set), a, b, stream.rng())?;
    let spec = SamplerSpec::single(SamplerStage::OverRandom { a, b });
    Ok(finish(set, &spec, stream.seed(), w, vec![]))
}

/// For each event, `m` synthetic events interpolated uniformly towards one
/// of its `k` nearest event neighbors.
pub fn smote(
    set: &LabeledSet<'_>,
    k: usize,
    m: usize,
    stream: &mut SeedStream,
) -> Result<ResampledSet, ResampleError> {
    let w = stage_smote(set, &Working::full(set), k, m, stream.rng())?;
    let spec = SamplerSpec::single(SamplerStage::Smote { k, m });
    Ok(finish(set, &spec, stream.seed(), w, vec![]))
}

/// Remove the non-event member of every mutual-nearest-neighbor pair with
/// opposite labels. Events are never removed.
pub fn tomek_clean(set: &LabeledSet<'_>) -> Result<ResampledSet, ResampleError> {
    let w = stage_tomek(set, &Working::full(set))?;
    let spec = SamplerSpec::single(SamplerStage::TomekClean);
    Ok(finish(set, &spec, 0, w, vec![]))
}

/// Replace the targeted class by a same-size bootstrap sample of itself.
pub fn bootstrap_class(
    set: &LabeledSet<'_>,
    target: BootstrapTarget,
    stream: &mut SeedStream,
) -> Result<ResampledSet, ResampleError> {
    let w = stage_bootstrap(set, &Working::full(set), target, stream.rng())?;
    let spec = SamplerSpec::single(SamplerStage::Bootstrap(target));
    Ok(finish(set, &spec, stream.seed(), w, vec![]))
}

/// Materialize with physical duplicate rows and appended synthetic rows.
pub fn materialize_rows(design: &DesignMatrix, rs: &ResampledSet) -> DesignMatrix {
    let n = rs.row_indices.len() + rs.synthetic_rows.len();
    let p = design.n_cols();
    let mut rows = Array2::zeros((n, p));
    let mut response = Array1::zeros(n);
    let mut weights = Array1::ones(n);
    for (r, &i) in rs.row_indices.iter().enumerate() {
        rows.row_mut(r).assign(&design.rows().row(i));
        response[r] = design.response()[i];
        weights[r] = design.weights()[i];
    }
    for (s, syn) in rs.synthetic_rows.iter().enumerate() {
        let r = rs.row_indices.len() + s;
        rows.row_mut(r).assign(&ndarray::ArrayView1::from(&syn.features));
        response[r] = 1.0;
    }
    DesignMatrix::with_encoding(rows, response, weights, design.encoding().clone())
}

/// Materialize duplicates as integer multiplicities on the source weights;
/// rows that were dropped do not appear at all.
pub fn materialize_weighted(design: &DesignMatrix, rs: &ResampledSet) -> DesignMatrix {
    let mut multiplicity = vec![0usize; design.n_rows()];
    for &i in &rs.row_indices {
        multiplicity[i] += 1;
    }
    let kept: Vec<usize> = (0..design.n_rows()).filter(|&i| multiplicity[i] > 0).collect();
    let n = kept.len() + rs.synthetic_rows.len();
    let p = design.n_cols();
    let mut rows = Array2::zeros((n, p));
    let mut response = Array1::zeros(n);
    let mut weights = Array1::ones(n);
    for (r, &i) in kept.iter().enumerate() {
        rows.row_mut(r).assign(&design.rows().row(i));
        response[r] = design.response()[i];
        weights[r] = design.weights()[i] * multiplicity[i] as f64;
    }
    for (s, syn) in rs.synthetic_rows.iter().enumerate() {
        let r = kept.len() + s;
        rows.row_mut(r).assign(&ndarray::ArrayView1::from(&syn.features));
        response[r] = 1.0;
    }
    DesignMatrix::with_encoding(rows, response, weights, design.encoding().clone())
}

#[cfg(test)]
mod tests;
