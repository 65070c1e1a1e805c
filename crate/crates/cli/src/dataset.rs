//! CSV dataset loading with the standardization convention used throughout:
//! design columns centered to mean zero and scaled to unit l2 norm, response
//! centered. The applied shifts and scales are retained so estimates can be
//! mapped back to the raw data scale.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};

/// Record of the column shifts/scales applied by [`load_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub column_means: Vec<f64>,
    /// l2 norms of the centered columns (the division applied).
    pub column_scales: Vec<f64>,
    pub response_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n x d standardized design.
    pub design: DMatrix<f64>,
    /// Centered response.
    pub response: DVector<f64>,
    pub column_names: Vec<String>,
    pub response_name: String,
    pub standardization: Standardization,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }
}

/// Reads a headered numeric CSV and standardizes it. `response_column` picks
/// the response by header name; when `None` the last column is used.
pub fn load_dataset(path: &Path, response_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open dataset {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("dataset needs a header row")?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.len() < 2 {
        bail!("dataset needs at least one regressor column and a response column");
    }
    let response_idx = match response_column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("response column '{name}' not found in header"))?,
        None => headers.len() - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("bad CSV record at data row {line}"))?;
        if record.len() != headers.len() {
            bail!(
                "data row {line} has {} fields, header has {}",
                record.len(),
                headers.len()
            );
        }
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().with_context(|| {
                format!("non-numeric cell '{field}' in column '{}' at data row {line}", headers[j])
            })?;
            if !value.is_finite() {
                bail!("non-finite cell in column '{}' at data row {line}", headers[j]);
            }
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n < 2 {
        bail!("dataset needs at least two rows");
    }

    let d = headers.len() - 1;
    let column_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != response_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let design_cols: Vec<usize> = (0..headers.len()).filter(|j| *j != response_idx).collect();

    let mut design = DMatrix::zeros(n, d);
    let mut response = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for (jj, &j) in design_cols.iter().enumerate() {
            design[(i, jj)] = row[j];
        }
        response[i] = row[response_idx];
    }

    let mut column_means = Vec::with_capacity(d);
    let mut column_scales = Vec::with_capacity(d);
    for j in 0..d {
        let mean = design.column(j).sum() / n as f64;
        for i in 0..n {
            design[(i, j)] -= mean;
        }
        let max_abs = design.column(j).amax();
        let norm = design.column(j).norm();
        if norm <= 1e-12 * (1.0 + max_abs) || norm == 0.0 {
            bail!("column '{}' is constant and cannot be standardized", column_names[j]);
        }
        for i in 0..n {
            design[(i, j)] /= norm;
        }
        column_means.push(mean);
        column_scales.push(norm);
    }
    let response_mean = response.sum() / n as f64;
    for v in response.iter_mut() {
        *v -= response_mean;
    }

    // post-conditions of the convention
    for (j, name) in column_names.iter().enumerate() {
        let mean = design.column(j).sum() / n as f64;
        let norm = design.column(j).norm();
        if mean.abs() >= 1e-10 || (norm - 1.0).abs() >= 1e-10 {
            bail!("standardization failed for column '{name}'");
        }
    }

    Ok(Dataset {
        design,
        response,
        column_names,
        response_name: headers[response_idx].clone(),
        standardization: Standardization { column_means, column_scales, response_mean },
    })
}
