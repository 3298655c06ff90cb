//! Design-matrix encoding: intercept, numeric covariates, individual
//! fixed effects as reference-level dummy columns.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{DataError, ObservationRecord, Panel};

/// How the dummy-coding reference individual is chosen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum ReferencePolicy {
    /// First individual in lexicographic id order (deterministic across runs).
    #[default]
    LexicographicFirst,
    /// First individual encountered in canonical record order.
    FirstSeen,
    Explicit(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeOptions {
    pub reference: ReferencePolicy,
    /// Z-score numeric covariates using statistics of the encoded subset
    /// only, so prediction rows can never leak test-set statistics.
    pub standardize: bool,
}

/// Reusable column layout produced by [`encode`]. Knows how to turn any
/// later record into a feature row consistent with the training matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    column_names: Vec<String>,
    n_covariates: usize,
    reference_id: String,
    /// individual id -> absolute column index of its dummy column.
    id_columns: BTreeMap<String, usize>,
    /// Per-covariate (mean, sd) when standardization is on.
    standardization: Option<Vec<(f64, f64)>>,
}

impl Encoding {
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn reference_id(&self) -> &str {
        &self.reference_id
    }

    pub fn id_columns(&self) -> &BTreeMap<String, usize> {
        &self.id_columns
    }

    /// Column indices of the numeric covariates (excludes the intercept and
    /// the dummy block); the default distance columns for resampling.
    pub fn numeric_columns(&self) -> Vec<usize> {
        (1..=self.n_covariates).collect()
    }

    /// Encode one record into a feature row.
    ///
    /// Returns the row and a flag that is true when the record's individual
    /// was unseen at encode time; such rows carry an all-zero dummy block and
    /// are scored at the reference level.
    pub fn encode_record(&self, record: &ObservationRecord) -> Result<(Vec<f64>, bool), DataError> {
        if record.covariates.len() != self.n_covariates {
            return Err(DataError::SchemaMismatch(format!(
                "record has {} covariates, encoding expects {}",
                record.covariates.len(),
                self.n_covariates
            )));
        }
        let mut row = vec![0.0; self.width()];
        row[0] = 1.0;
        for (j, &v) in record.covariates.iter().enumerate() {
            row[1 + j] = match &self.standardization {
                Some(stats) => (v - stats[j].0) / stats[j].1,
                None => v,
            };
        }
        let unseen = if record.individual_id == self.reference_id {
            false
        } else if let Some(&col) = self.id_columns.get(&record.individual_id) {
            row[col] = 1.0;
            false
        } else {
            true
        };
        Ok((row, unseen))
    }
}

/// Encoded training data: feature matrix with intercept column, response,
/// per-row non-negative weights, and the encoding that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    rows: Array2<f64>,
    response: Array1<f64>,
    weights: Array1<f64>,
    encoding: Encoding,
}

impl DesignMatrix {
    /// Assemble a design matrix directly from parts. Callers are responsible
    /// for the intercept-column convention; `encode` is the usual entry point.
    pub fn from_parts(rows: Array2<f64>, response: Array1<f64>, weights: Array1<f64>) -> Self {
        assert_eq!(rows.nrows(), response.len());
        assert_eq!(rows.nrows(), weights.len());
        let n_cols = rows.ncols();
        let column_names =
            (0..n_cols).map(|j| if j == 0 { "intercept".into() } else { format!("x{j}") }).collect();
        let encoding = Encoding {
            column_names,
            n_covariates: n_cols.saturating_sub(1),
            reference_id: String::new(),
            id_columns: BTreeMap::new(),
            standardization: None,
        };
        Self { rows, response, weights, encoding }
    }

    /// Same matrix and response with unit weights.
    pub fn raw(rows: Array2<f64>, response: Array1<f64>) -> Self {
        let n = rows.nrows();
        Self::from_parts(rows, response, Array1::ones(n))
    }

    pub(crate) fn with_encoding(
        rows: Array2<f64>,
        response: Array1<f64>,
        weights: Array1<f64>,
        encoding: Encoding,
    ) -> Self {
        Self { rows, response, weights, encoding }
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn response(&self) -> ArrayView1<'_, f64> {
        self.response.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn set_weights(&mut self, weights: Array1<f64>) {
        assert_eq!(weights.len(), self.rows.nrows());
        self.weights = weights;
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    /// Event indicator per row.
    pub fn labels(&self) -> Vec<bool> {
        self.response.iter().map(|&y| y == 1.0).collect()
    }
}

/// Encode a subset of panel records into a design matrix.
///
/// Columns are `[intercept, covariates.., id dummies..]`; the dummy block
/// covers the individuals present in the subset minus the reference level,
/// in lexicographic id order.
pub fn encode(
    panel: &Panel,
    subset: &[usize],
    options: &EncodeOptions,
) -> Result<DesignMatrix, DataError> {
    if subset.is_empty() {
        return Err(DataError::EmptySubset);
    }
    let records = panel.records();
    let n_cov = panel.schema().len();

    let mut ids: Vec<&str> =
        subset.iter().map(|&i| records[i].individual_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();

    let reference_id = match &options.reference {
        ReferencePolicy::LexicographicFirst => ids[0].to_string(),
        ReferencePolicy::FirstSeen => records[subset[0]].individual_id.clone(),
        ReferencePolicy::Explicit(id) => {
            if !ids.contains(&id.as_str()) {
                return Err(DataError::UnknownReference(id.clone()));
            }
            id.clone()
        }
    };

    let mut column_names: Vec<String> = Vec::with_capacity(1 + n_cov + ids.len() - 1);
    column_names.push("intercept".to_string());
    column_names.extend(panel.schema().iter().cloned());
    let mut id_columns = BTreeMap::new();
    for id in ids.iter().filter(|id| **id != reference_id) {
        id_columns.insert(id.to_string(), column_names.len());
        column_names.push(format!("id_{id}"));
    }

    let standardization = if options.standardize {
        let mut stats = Vec::with_capacity(n_cov);
        for j in 0..n_cov {
            let vals: Vec<f64> = subset.iter().map(|&i| records[i].covariates[j]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            let sd = var.sqrt();
            // Constant columns pass through unscaled.
            stats.push((mean, if sd > 0.0 { sd } else { 1.0 }));
        }
        Some(stats)
    } else {
        None
    };

    let encoding = Encoding {
        column_names,
        n_covariates: n_cov,
        reference_id,
        id_columns,
        standardization,
    };

    let width = encoding.width();
    let mut rows = Array2::zeros((subset.len(), width));
    let mut response = Array1::zeros(subset.len());
    for (r, &i) in subset.iter().enumerate() {
        let (row, unseen) = encoding.encode_record(&records[i])?;
        debug_assert!(!unseen, "subset individual must be known to its own encoding");
        rows.row_mut(r).assign(&ArrayView1::from(&row));
        response[r] = f64::from(records[i].outcome);
    }
    let weights = Array1::ones(subset.len());
    let _ = rows.index_axis(Axis(1), 0); // intercept column exists by construction
    Ok(DesignMatrix::with_encoding(rows, response, weights, encoding))
}
