//! CSV ingestion and emission for panels.
//!
//! UTF-8, header row required, configurable single-byte delimiter. Emitted
//! floats use the shortest representation that round-trips to the same f64,
//! so `ingest(emit(panel))` reproduces the record multiset exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, ObservationRecord, Panel, SchemaConfig};

/// Read a panel from a CSV file.
///
/// Rows are validated strictly: outcomes must be exactly `0` or `1`, times
/// must be non-negative integers, covariates must parse as finite floats.
/// Horizon boundaries are derived from the schema's `horizon_start` policy.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Panel, DataError> {
    let file = File::open(path)?;
    ingest_csv_reader(file, schema)
}

pub fn ingest_csv_reader<R: Read>(reader: R, schema: &SchemaConfig) -> Result<Panel, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| DataError::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let id_idx = find(&schema.id_column)
        .ok_or_else(|| DataError::MissingColumn(schema.id_column.clone()))?;
    let time_idx = find(&schema.time_column)
        .ok_or_else(|| DataError::MissingColumn(schema.time_column.clone()))?;
    let outcome_idx = find(&schema.outcome_column)
        .ok_or_else(|| DataError::MissingColumn(schema.outcome_column.clone()))?;

    let covariate_names: Vec<String> = if schema.covariate_columns.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_idx && *i != time_idx && *i != outcome_idx)
            .map(|(_, h)| h.to_string())
            .collect()
    } else {
        schema.covariate_columns.clone()
    };
    let cov_indices: Vec<usize> = covariate_names
        .iter()
        .map(|name| find(name).ok_or_else(|| DataError::MissingColumn(name.clone())))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for result in rdr.records() {
        let row = result.map_err(|e| DataError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<&str, DataError> {
            row.get(idx).ok_or_else(|| DataError::MalformedRow {
                line,
                reason: format!("row has {} fields, expected at least {}", row.len(), idx + 1),
            })
        };

        let individual_id = field(id_idx)?.trim().to_string();
        let time_raw = field(time_idx)?.trim();
        let time_index: u64 = time_raw.parse().map_err(|_| DataError::MalformedRow {
            line,
            reason: format!("time `{time_raw}` is not a non-negative integer"),
        })?;
        let outcome_raw = field(outcome_idx)?.trim();
        let outcome: u8 = match outcome_raw {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DataError::MalformedRow {
                    line,
                    reason: format!("non-binary outcome `{other}`"),
                })
            }
        };
        let mut covariates = Vec::with_capacity(cov_indices.len());
        for (&idx, name) in cov_indices.iter().zip(&covariate_names) {
            let raw = field(idx)?.trim();
            let value: f64 = raw.parse().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("covariate `{name}` value `{raw}` is not numeric"),
            })?;
            if !value.is_finite() {
                return Err(DataError::MalformedRow {
                    line,
                    reason: format!("covariate `{name}` value `{raw}` is not finite"),
                });
            }
            covariates.push(value);
        }
        records.push(ObservationRecord { individual_id, time_index, covariates, outcome });
    }

    if records.is_empty() {
        return Err(DataError::EmptyPanel);
    }

    let mut times: Vec<u64> = records.iter().map(|r| r.time_index).collect();
    times.sort_unstable();
    times.dedup();
    let horizons: Vec<u64> = match schema.horizon_start {
        Some(start) => times.into_iter().filter(|&t| t >= start).collect(),
        // Default: every distinct time after the earliest acts as a horizon,
        // leaving the earliest slice as seed history.
        None => times.into_iter().skip(1).collect(),
    };

    Panel::new(covariate_names, records, horizons)
}

/// Write a panel using the column names and delimiter of `schema`.
pub fn emit_csv(
    panel: &Panel,
    path: impl AsRef<Path>,
    schema: &SchemaConfig,
) -> Result<(), DataError> {
    let file = File::create(path)?;
    emit_csv_writer(panel, file, schema)
}

pub fn emit_csv_writer<W: Write>(
    panel: &Panel,
    writer: W,
    schema: &SchemaConfig,
) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_writer(writer);
    let mut header = vec![
        schema.id_column.clone(),
        schema.time_column.clone(),
        schema.outcome_column.clone(),
    ];
    header.extend(panel.schema().iter().cloned());
    wtr.write_record(&header).map_err(io_err)?;
    for rec in panel.records() {
        let mut row = vec![
            rec.individual_id.clone(),
            rec.time_index.to_string(),
            rec.outcome.to_string(),
        ];
        row.extend(rec.covariates.iter().map(|v| format!("{v}")));
        wtr.write_record(&row).map_err(io_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> DataError {
    DataError::Io(std::io::Error::other(e))
}
