//! Data matrices, per-variable standardization and faulty-sample batches.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column variance below this is treated as constant.
const MIN_VARIANCE: f64 = 1e-12;

/// An `n × m` matrix of samples (rows) over named process variables (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Empty("data matrix has no rows".into()));
        }
        if values.ncols() == 0 {
            return Err(Error::Empty("data matrix has no columns".into()));
        }
        if names.len() != values.ncols() {
            return Err(Error::InvalidNames(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidNames(format!("duplicate name '{name}'")));
            }
        }
        for (column, col) in values.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput { row, column });
            }
        }
        Ok(Self { values, names })
    }

    /// Builds a matrix with generated names `x1..xm`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        Self::new(values, names)
    }

    pub fn from_rows(rows: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        let m = names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: bad.len(),
            });
        }
        let values = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        Self::new(values, names)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.nrows() {
            return Err(Error::InvalidParameter(format!(
                "row range {start}..{end} out of 0..{}",
                self.nrows()
            )));
        }
        Self::new(
            self.values.rows(start, end - start).into_owned(),
            self.names.clone(),
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no rows selected".into()));
        }
        let values = DMatrix::from_fn(rows.len(), self.ncols(), |i, j| self.values[(rows[i], j)]);
        Self::new(values, self.names.clone())
    }

    /// Reads a header-first CSV (variable names, then one sample per row).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                row: 0,
                column: 0,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Empty("CSV has no header".into()));
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            // header is row 1, first sample is row 2
            let row = i + 2;
            let record = record.map_err(|e| Error::Parse {
                row,
                column: 0,
                message: e.to_string(),
            })?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row,
                    column: record.len().min(headers.len()) + 1,
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let mut values = Vec::with_capacity(headers.len());
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("'{field}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: j + 1,
                        message: format!("'{field}' is not finite"),
                    });
                }
                values.push(v);
            }
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(Error::Empty("CSV has no data rows".into()));
        }
        Self::from_rows(&rows, headers)
    }

    /// Writes the matrix as CSV using the shortest round-trip float representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        wtr.write_record(&self.names).map_err(csv_err)?;
        for row in self.values.row_iter() {
            wtr.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// Per-variable centering and scaling fitted on normal operating data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    means: DVector<f64>,
    stds: DVector<f64>,
}

impl Standardizer {
    /// Fits column means and sample standard deviations (divisor `n − 1`).
    pub fn fit(train: &DataMatrix) -> Result<Self> {
        let x = train.values();
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Empty(
                "at least two samples are needed to estimate variances".into(),
            ));
        }
        let mut means = DVector::zeros(x.ncols());
        let mut stds = DVector::zeros(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            if var < MIN_VARIANCE {
                return Err(Error::ConstantColumn { index: j });
            }
            means[j] = mean;
            stds[j] = var.sqrt();
        }
        Ok(Self { means, stds })
    }

    pub fn from_parts(means: DVector<f64>, stds: DVector<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                got: stds.len(),
            });
        }
        if let Some(index) = stds.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::ConstantColumn { index });
        }
        if let Some(column) = means.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row: 0, column });
        }
        Ok(Self { means, stds })
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn stds(&self) -> &DVector<f64> {
        &self.stds
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn standardize(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check_dim(x.ncols())?;
        let mut values = x.values().clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.means[j]) / self.stds[j]);
        }
        DataMatrix::new(values, x.names().to_vec())
    }

    pub fn destandardize(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check_dim(x.ncols())?;
        let mut values = x.values().clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.apply(|v| *v = *v * self.stds[j] + self.means[j]);
        }
        DataMatrix::new(values, x.names().to_vec())
    }

    pub fn standardize_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(DVector::from_fn(x.len(), |j, _| {
            (x[j] - self.means[j]) / self.stds[j]
        }))
    }

    fn check_dim(&self, m: usize) -> Result<()> {
        if m != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: m,
            });
        }
        Ok(())
    }
}

/// Standardized faulty samples pooled for one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    samples: DMatrix<f64>,
}

impl SampleBatch {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::Empty("sample batch is empty".into()));
        }
        for (column, col) in samples.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput { row, column });
            }
        }
        Ok(Self { samples })
    }

    pub fn single(x: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, x.len(), x.as_slice()))
    }

    /// Takes the listed rows of an already standardized matrix.
    pub fn from_rows(data: &DataMatrix, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= data.nrows()) {
            return Err(Error::InvalidParameter(format!(
                "row {bad} out of range for {} samples",
                data.nrows()
            )));
        }
        Self::new(data.select_rows(rows)?.values().clone())
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.samples.row_mean().transpose()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }
}
