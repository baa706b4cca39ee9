//! Regression datasets and their CSV representation.
//!
//! The on-disk format is the one every command consumes and produces:
//! a UTF-8 CSV with header `Y,X1,...,Xp`, one row per observation, `.` as
//! the decimal separator.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::fmt::Write as _;
use std::path::Path;

/// An `n x p` predictor matrix plus the `n`-vector response.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    x: Matrix,
    y: Vec<f64>,
}

impl DataSet {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::contract(format!(
                "predictor rows ({}) and response length ({}) differ",
                x.rows(),
                y.len()
            )));
        }
        Ok(DataSet { x, y })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Predictor row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// Serialize to the `Y,X1..Xp` CSV format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push('Y');
        for j in 1..=self.p() {
            let _ = write!(out, ",X{j}");
        }
        out.push('\n');
        for i in 0..self.n() {
            let _ = write!(out, "{}", self.y[i]);
            for v in self.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parse the `Y,X1..Xp` format. Errors carry 1-based line/column numbers.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, 1, "empty file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "Y" {
            return Err(parse_err(1, 1, "header must start with Y and at least one predictor"));
        }
        let p = cols.len() - 1;
        for (j, name) in cols.iter().enumerate().skip(1) {
            let expected = format!("X{j}");
            if **name != expected {
                return Err(parse_err(1, j + 1, format!("expected column {expected}, found {name}")));
            }
        }

        let mut y = Vec::new();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != p + 1 {
                return Err(parse_err(
                    idx + 1,
                    1,
                    format!("expected {} fields, found {}", p + 1, fields.len()),
                ));
            }
            let mut row = Vec::with_capacity(p);
            for (j, field) in fields.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    parse_err(idx + 1, j + 1, format!("non-numeric cell {field:?}"))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(idx + 1, j + 1, "non-finite value"));
                }
                if j == 0 {
                    y.push(v);
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(parse_err(2, 1, "no data rows"));
        }
        DataSet::new(Matrix::from_rows(&rows)?, y)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Per-coordinate centering and scaling, with basis maps between the raw
/// and standardized coordinate systems.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Column means and standard deviations (denominator `n - 1`); constant
    /// columns get scale 1 so the transform stays invertible.
    pub fn fit(x: &Matrix) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut mean = vec![0.0; p];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut sd = vec![0.0; p];
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                let d = v - mean[j];
                sd[j] += d * d;
            }
        }
        let denom = (n as f64 - 1.0).max(1.0);
        for s in &mut sd {
            *s = (*s / denom).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Standardizer { mean, sd }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x.get(i, j) - self.mean[j]) / self.sd[j]
        })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// A raw-space basis expressed in standardized coordinates (`D V`).
    pub fn forward_map_basis(&self, v: &Matrix) -> Matrix {
        Matrix::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) * self.sd[i])
    }

    /// A standardized-space basis expressed in raw coordinates (`D^-1 V`).
    pub fn back_map_basis(&self, v: &Matrix) -> Matrix {
        Matrix::from_fn(v.rows(), v.cols(), |i, j| v.get(i, j) / self.sd[i])
    }
}
