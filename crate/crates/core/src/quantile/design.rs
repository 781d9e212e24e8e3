use std::collections::HashSet;

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "const";

/// Named predictor columns plus a response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a design from named columns. At most one column may be
    /// constant, and it is treated as the intercept.
    pub fn new(response: Vec<f64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = response.len();
        let k = columns.len();
        if k == 0 {
            return Err(Error::InvalidDesign("no predictor columns".into()));
        }
        if n < k {
            return Err(Error::InvalidDesign(format!("{n} rows for {k} columns")));
        }
        let mut seen = HashSet::new();
        let mut constant_cols = 0;
        for (name, col) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDesign(format!("duplicate column name `{name}`")));
            }
            if col.len() != n {
                return Err(Error::InvalidDesign(format!(
                    "column `{name}` has {} rows, response has {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDesign(format!("column `{name}` has non-finite values")));
            }
            if col.iter().all(|&v| v == col[0]) {
                if col[0] == 0.0 {
                    return Err(Error::InvalidDesign(format!("column `{name}` is identically zero")));
                }
                constant_cols += 1;
            }
        }
        if constant_cols > 1 {
            return Err(Error::InvalidDesign(
                "more than one constant column; only the intercept may be constant".into(),
            ));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("response has non-finite values".into()));
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Self {
            names,
            columns,
            response,
        })
    }

    /// Same as [`DesignMatrix::new`] with a leading intercept column.
    pub fn with_intercept(response: Vec<f64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = response.len();
        let mut all = Vec::with_capacity(columns.len() + 1);
        all.push((INTERCEPT.to_string(), vec![1.0; n]));
        all.extend(columns);
        Self::new(response, all)
    }

    pub fn intercept_only(response: Vec<f64>) -> Result<Self> {
        Self::with_intercept(response, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.position(name).map(|j| self.columns[j].as_slice())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Index of the constant column, if any.
    pub fn intercept_index(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.iter().all(|&v| v == c[0]))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Row-major copy of the predictors.
    pub(crate) fn row_major(&self) -> Vec<f64> {
        let (n, k) = (self.n(), self.k());
        let mut out = vec![0.0; n * k];
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                out[i * k + j] = v;
            }
        }
        out
    }

    pub fn fitted(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (col, &b) in self.columns.iter().zip(beta) {
            for (o, &v) in out.iter_mut().zip(col) {
                *o += b * v;
            }
        }
        out
    }

    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        self.fitted(beta)
            .into_iter()
            .zip(&self.response)
            .map(|(f, y)| y - f)
            .collect()
    }

    /// Subset of rows, in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            response: rows.iter().map(|&i| self.response[i]).collect(),
        }
    }

    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        if response.len() != self.n() {
            return Err(Error::InvalidDesign("response length mismatch".into()));
        }
        Ok(Self {
            names: self.names.clone(),
            columns: self.columns.clone(),
            response,
        })
    }

    /// Multiplies column `j` by `c`.
    pub fn scale_column(&self, j: usize, c: f64) -> Self {
        let mut out = self.clone();
        out.columns[j].iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Drops the constant column (used when group indicators replace it).
    pub(crate) fn without_intercept(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let skip = self.intercept_index();
        self.names
            .iter()
            .cloned()
            .zip(self.columns.iter().cloned())
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .map(|(_, nc)| nc)
            .unzip()
    }
}
