//! Longitudinal panel data model.
//!
//! A [`Panel`] is an immutable collection of `(individual, time, covariates,
//! outcome)` rows together with the ordered set of horizon boundaries: the
//! time indices at which predictions are made and scored. Records strictly
//! before a horizon are available for training at that horizon; records at a
//! horizon form the roster to be scored.

mod csv_io;
mod encode;

pub use csv_io::{emit_csv, emit_csv_writer, ingest_csv, ingest_csv_reader};
pub use encode::{encode, DesignMatrix, EncodeOptions, Encoding, ReferencePolicy};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("panel contains no records")]
    EmptyPanel,
    #[error("record subset is empty")]
    EmptySubset,
    #[error("duplicate covariate name `{0}` in schema")]
    DuplicateSchemaName(String),
    #[error("record for `{individual}` at time {time} has {got} covariates, schema expects {expected}")]
    CovariateLength { individual: String, time: u64, got: usize, expected: usize },
    #[error("record for `{individual}` at time {time} has non-binary outcome {outcome}")]
    NonBinaryOutcome { individual: String, time: u64, outcome: u8 },
    #[error("reference individual `{0}` does not appear in the encoded subset")]
    UnknownReference(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of the longitudinal panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub individual_id: String,
    pub time_index: u64,
    pub covariates: Vec<f64>,
    /// Binary outcome, 0 or 1.
    pub outcome: u8,
}

impl ObservationRecord {
    pub fn is_event(&self) -> bool {
        self.outcome == 1
    }
}

/// Column layout of a panel CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub id_column: String,
    pub time_column: String,
    pub outcome_column: String,
    /// Covariate columns in order. Empty means: infer from the header,
    /// taking every column that is not the id, time or outcome column.
    pub covariate_columns: Vec<String>,
    /// Field delimiter, single byte (default `,`).
    pub delimiter: char,
    /// Records with `time_index >= horizon_start` define the horizon
    /// boundaries (one per distinct time). `None` makes every distinct time
    /// after the earliest one a horizon.
    pub horizon_start: Option<u64>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            id_column: "id".to_string(),
            time_column: "time".to_string(),
            outcome_column: "outcome".to_string(),
            covariate_columns: Vec::new(),
            delimiter: ',',
            horizon_start: None,
        }
    }
}

/// Immutable longitudinal panel: schema, sorted records, horizon boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    schema: Vec<String>,
    records: Vec<ObservationRecord>,
    horizon_boundaries: Vec<u64>,
}

impl Panel {
    /// Build a panel, validating invariants and canonicalizing order.
    ///
    /// Records are sorted by `(time_index, individual_id)`; horizon
    /// boundaries are sorted and deduplicated. Outcomes must be 0/1 and every
    /// covariate vector must match the schema length.
    pub fn new(
        schema: Vec<String>,
        records: Vec<ObservationRecord>,
        horizon_boundaries: Vec<u64>,
    ) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        for name in &schema {
            if !seen.insert(name.clone()) {
                return Err(DataError::DuplicateSchemaName(name.clone()));
            }
        }
        if records.is_empty() {
            return Err(DataError::EmptyPanel);
        }
        for rec in &records {
            if rec.outcome > 1 {
                return Err(DataError::NonBinaryOutcome {
                    individual: rec.individual_id.clone(),
                    time: rec.time_index,
                    outcome: rec.outcome,
                });
            }
            if rec.covariates.len() != schema.len() {
                return Err(DataError::CovariateLength {
                    individual: rec.individual_id.clone(),
                    time: rec.time_index,
                    got: rec.covariates.len(),
                    expected: schema.len(),
                });
            }
        }
        let mut records = records;
        records.sort_by(|a, b| {
            (a.time_index, &a.individual_id).cmp(&(b.time_index, &b.individual_id))
        });
        let mut horizon_boundaries = horizon_boundaries;
        horizon_boundaries.sort_unstable();
        horizon_boundaries.dedup();
        Ok(Self { schema, records, horizon_boundaries })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn horizon_boundaries(&self) -> &[u64] {
        &self.horizon_boundaries
    }

    /// A record past the last horizon can never be scored by any protocol;
    /// it only ever serves as training history.
    pub fn is_historical_only(&self, record: &ObservationRecord) -> bool {
        match self.horizon_boundaries.last() {
            Some(&last) => record.time_index > last,
            None => true,
        }
    }

    /// Indices of records with `time_index < t`, in canonical record order.
    pub fn indices_before(&self, t: u64) -> Vec<usize> {
        // Records are sorted by time, so this is a prefix.
        let end = self.records.partition_point(|r| r.time_index < t);
        (0..end).collect()
    }

    /// Indices of records with `time_index == t`, in canonical record order.
    pub fn indices_at(&self, t: u64) -> Vec<usize> {
        let start = self.records.partition_point(|r| r.time_index < t);
        let end = self.records.partition_point(|r| r.time_index <= t);
        (start..end).collect()
    }

    /// Indices of records whose time lies on any horizon boundary.
    pub fn prediction_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| self.horizon_boundaries.binary_search(&r.time_index).is_ok())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.is_event()).count()
    }
}
