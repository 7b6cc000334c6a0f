//! Labeled vectors as CSV: header `label,f0,...,f{d-1}`, one sample per row.

use std::path::Path;

use ufedgan_core::data::LabeledDataset;
use ufedgan_core::Tensor;

use crate::error::{read, CliError, Result};

/// Parses CSV text. Samples come back with shape `(n, d)`; the class count is
/// one more than the largest label.
pub fn parse_csv_vectors(bytes: &[u8], path: &Path) -> Result<LabeledDataset<f32>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let d = header.len().saturating_sub(1);
    if header.get(0) != Some("label") || d == 0 || header.iter().skip(1).enumerate().any(|(i, h)| h != format!("f{i}")) {
        return Err(CliError::parse(path, 0, format!("header must be label,f0,...; got {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut labels, mut values) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        if record.len() != d + 1 {
            return Err(CliError::parse(path, offset, format!("{} fields, expected {}", record.len(), d + 1)));
        }
        labels.push(record[0].trim().parse::<usize>().map_err(|e| CliError::parse(path, offset, format!("label: {e}")))?);
        for (i, field) in record.iter().skip(1).enumerate() {
            let v: f32 = field.trim().parse().map_err(|e| CliError::parse(path, offset, format!("f{i}: {e}")))?;
            if !v.is_finite() {
                return Err(CliError::parse(path, offset, format!("f{i} is not finite")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(CliError::parse(path, bytes.len(), "no samples"));
    }
    let classes = labels.iter().max().unwrap() + 1;
    let samples = Tensor::new(vec![labels.len(), d], values)?;
    Ok(LabeledDataset::new(samples, labels, classes)?)
}

pub fn load_csv_vectors(path: &Path) -> Result<LabeledDataset<f32>> {
    parse_csv_vectors(&read(path)?, path)
}

/// Renders samples (flattened per row) and labels in the loader's format.
pub fn csv_vectors(samples: &Tensor<f32>, labels: &[usize]) -> String {
    let d = samples.row_len();
    let mut out = String::from("label");
    for i in 0..d {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        out.push_str(&label.to_string());
        for v in samples.row(r) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    CliError::parse(path, offset, e.to_string())
}
