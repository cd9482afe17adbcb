//! Observed data: a response vector with an optional covariate matrix.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::path::Path;

/// A response vector plus covariates. When no covariates are supplied the
/// design is an intercept-only column of ones, so regression code paths
/// need not distinguish the two cases.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub y: Vec<f64>,
    /// n x p design matrix; first column is the intercept when present.
    pub x: DMatrix<f64>,
}

impl DataSet {
    /// Intercept-only data: the design is a single column of ones.
    pub fn from_response(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, DMatrix::from_element(n, 1, 1.0))
    }

    pub fn new(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("dataset must contain at least one row".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Data(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in dataset".into()));
        }
        Ok(DataSet { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn residual(&self, i: usize, beta: &[f64]) -> f64 {
        let mut fit = 0.0;
        for j in 0..self.p() {
            fit += self.x[(i, j)] * beta[j];
        }
        self.y[i] - fit
    }

    /// Read a CSV file with a header row. The response column is `response`
    /// when given, otherwise a column named `y`, otherwise the first column.
    /// Remaining columns become covariates, preceded by an intercept column
    /// unless `intercept` is false.
    pub fn from_csv(path: &Path, response: Option<&str>, intercept: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.is_empty() {
            return Err(Error::Data("CSV file has an empty header".into()));
        }
        let resp_idx = match response {
            Some(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("response column '{name}' not found")))?,
            None => headers.iter().position(|h| h == "y").unwrap_or(0),
        };

        let mut y = Vec::new();
        let mut cov_rows: Vec<Vec<f64>> = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = row_idx + 2; // header is line 1
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "line {line}: expected {} fields, found {}",
                    headers.len(),
                    record.len()
                )));
            }
            let mut covs = Vec::with_capacity(headers.len() - 1);
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!("line {line}: cannot parse '{}' as a number", field))
                })?;
                if j == resp_idx {
                    y.push(v);
                } else {
                    covs.push(v);
                }
            }
            cov_rows.push(covs);
        }
        if y.is_empty() {
            return Err(Error::Data("CSV file contains no data rows".into()));
        }

        let n = y.len();
        let n_cov = cov_rows[0].len();
        let p = n_cov + usize::from(intercept);
        if p == 0 {
            return Err(Error::Data("no covariates and intercept disabled".into()));
        }
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            let mut j = 0;
            if intercept {
                x[(i, 0)] = 1.0;
                j = 1;
            }
            for (k, v) in cov_rows[i].iter().enumerate() {
                x[(i, j + k)] = *v;
            }
        }
        Self::new(y, x)
    }
}
