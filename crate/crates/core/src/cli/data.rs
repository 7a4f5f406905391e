use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::StreamBatch;

/// Where a CSV stream lives and how to split it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub has_header: bool,
    /// Checked against the file when given, inferred from the first row
    /// otherwise.
    pub feature_dim: Option<usize>,
    /// Labels must lie in `0..n_classes` when given.
    pub n_classes: Option<usize>,
    /// Leading fraction of the rows used as the labeled source.
    pub source_fraction: f64,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            has_header: false,
            feature_dim: None,
            n_classes: None,
            source_fraction: 0.1,
        }
    }
}

/// A labeled source set followed by the target stream, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub source_x: DMatrix<f64>,
    pub source_y: Vec<usize>,
    pub target_x: DMatrix<f64>,
    pub target_y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.source_x.ncols()
    }

    pub fn rows(&self) -> usize {
        self.source_x.nrows() + self.target_x.nrows()
    }

    /// Consecutive target chunks of `batch_size` rows; a short final chunk is
    /// dropped.
    pub fn batches(&self, batch_size: usize) -> Vec<StreamBatch> {
        if batch_size == 0 {
            return Vec::new();
        }
        (0..self.target_x.nrows() / batch_size)
            .map(|b| {
                let start = b * batch_size;
                StreamBatch {
                    features: self.target_x.rows(start, batch_size).clone_owned(),
                    labels: Some(self.target_y[start..start + batch_size].to_vec()),
                }
            })
            .collect()
    }
}

/// Number of source rows for a fraction of `rows`, rounded up.
pub fn source_rows(rows: usize, fraction: f64) -> usize {
    // The small offset keeps exact products such as 0.1 * 100 from rounding
    // up to the next row.
    ((fraction * rows as f64 - 1e-9).ceil().max(0.0) as usize).min(rows)
}

/// Reads `d` feature columns followed by an integer label column per row.
/// The first `⌈source_fraction·rows⌉` rows become the source.
pub fn load_csv_stream(spec: &DatasetSpec) -> Result<Dataset> {
    if !(spec.source_fraction > 0.0 && spec.source_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "source_fraction {} outside (0, 1)",
            spec.source_fraction
        )));
    }
    let bytes = std::fs::read(&spec.path)?;
    // The reader's line counter drifts on CRLF and blank lines, and its byte
    // offsets may point at the preceding terminator, so rows are numbered
    // from the first byte after any line breaks at the reported offset.
    let newlines: Vec<usize> = (0..bytes.len()).filter(|&i| bytes[i] == b'\n').collect();
    let line_of = |byte: u64| {
        let start = (byte as usize..bytes.len())
            .find(|&i| bytes[i] != b'\r' && bytes[i] != b'\n')
            .unwrap_or(bytes.len());
        1 + newlines.partition_point(|&nl| nl < start) as u64
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut dim = spec.feature_dim;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, &line_of))?;
        let row = record.position().map_or(0, |p| line_of(p.byte()));
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let d = *dim.get_or_insert(record.len().saturating_sub(1));
        if d == 0 || record.len() != d + 1 {
            return Err(Error::Parse {
                row,
                column: record.len().min(d + 1),
                message: format!("expected {} columns, found {}", d + 1, record.len()),
            });
        }
        for (col, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("'{field}' is not a number"),
            })?;
            values.push(v);
        }
        let field = &record[d];
        let label: i64 = field.parse().map_err(|_| Error::Parse {
            row,
            column: d + 1,
            message: format!("'{field}' is not an integer label"),
        })?;
        let out_of_range = label < 0 || spec.n_classes.is_some_and(|c| label as usize >= c);
        if out_of_range {
            return Err(Error::LabelOutOfRange {
                row,
                label: field.to_string(),
            });
        }
        labels.push(label as usize);
    }
    let d = dim.unwrap_or(0);
    if labels.is_empty() {
        return Err(Error::EmptyList);
    }
    let all = DMatrix::from_row_slice(labels.len(), d, &values);
    let n_source = source_rows(labels.len(), spec.source_fraction);
    let n_classes = spec
        .n_classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Ok(Dataset {
        source_x: all.rows(0, n_source).clone_owned(),
        source_y: labels[..n_source].to_vec(),
        target_x: all.rows(n_source, labels.len() - n_source).clone_owned(),
        target_y: labels[n_source..].to_vec(),
        n_classes,
    })
}

fn csv_error(e: csv::Error, line_of: &dyn Fn(u64) -> u64) -> Error {
    let row = e.position().map_or(0, |p| line_of(p.byte()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes source rows then target rows, features then label, no header.
/// Floats use the shortest representation that reads back bit-exactly.
pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(e, &|_| 0))?;
    let parts = [
        (&dataset.source_x, &dataset.source_y),
        (&dataset.target_x, &dataset.target_y),
    ];
    for (x, y) in parts {
        for (i, &label) in y.iter().enumerate() {
            let mut fields: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            fields.push(label.to_string());
            writer.write_record(&fields).map_err(|e| csv_error(e, &|_| 0))?;
        }
    }
    writer.flush()?;
    Ok(())
}
