//! Logistic regression by maximum likelihood, ROC-AUC and the hypothesis
//! tests used by the analyses.

mod auc;
mod logistic;
mod stats;

use std::io::Write;

use thiserror::Error;

pub use auc::auc;
pub use logistic::{
    fit_least_squares, fit_logistic, fit_logistic_from, gradient_check, log_likelihood, log_likelihood_gradient,
    predict_scores, FitOptions,
};
pub use stats::{coef_t_test, normal_two_sided_p, welch_t_test, WelchResult};

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("design has {rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("row data length {len} is not a multiple of {cols} columns")]
    Shape { len: usize, cols: usize },
    #[error("non-finite design entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("outcomes need at least one positive and one negative")]
    SingleClass,
    #[error("non-finite log-likelihood")]
    NonFiniteLikelihood,
    #[error("columns do not match the fitted model")]
    ColumnMismatch,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("model did not converge")]
    NotConverged,
    #[error("zero standard error for {0}")]
    ZeroStdErr(String),
    #[error("sample needs at least 2 values with nonzero variance")]
    DegenerateVariance,
    #[error("singular information matrix")]
    Singular,
}

/// Row-major design matrix with named columns and one binary outcome per
/// row. By convention the first column is the constant intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    y: Vec<bool>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, data: Vec<f64>, y: Vec<bool>) -> Result<Self, GlmError> {
        let cols = names.len();
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(GlmError::Shape { len: data.len(), cols });
        }
        let rows = data.len() / cols;
        if rows != y.len() {
            return Err(GlmError::LabelCount { rows, labels: y.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GlmError::NonFiniteEntry {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(Self { names, data, y })
    }

    /// Prepends an intercept column to the given feature rows.
    pub fn with_intercept(feature_names: &[String], rows: &[Vec<f64>], y: Vec<bool>) -> Result<Self, GlmError> {
        let mut names = Vec::with_capacity(feature_names.len() + 1);
        names.push("intercept".to_string());
        names.extend(feature_names.iter().cloned());
        let mut data = Vec::with_capacity(rows.len() * names.len());
        for r in rows {
            if r.len() != feature_names.len() {
                return Err(GlmError::Shape {
                    len: r.len(),
                    cols: feature_names.len(),
                });
            }
            data.push(1.0);
            data.extend_from_slice(r);
        }
        Self::new(names, data, y)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols())
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    /// A design with only the given columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> Self {
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let data = self.rows().flat_map(|r| cols.iter().map(move |&c| r[c])).collect();
        Self {
            names,
            data,
            y: self.y.clone(),
        }
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.iter().any(|&b| b) && self.y.iter().any(|&b| !b)
    }
}

/// Result of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub converged: bool,
    /// The data are (quasi-)separable and the MLE does not exist.
    pub separation: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Objective value after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

impl ModelFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    /// Writes `feature,coefficient,std_err,p_value` rows.
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let p_values = coef_t_test(self).unwrap_or_else(|_| vec![f64::NAN; self.coefficients.len()]);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "coefficient", "std_err", "p_value"])?;
        for (((name, c), se), p) in self
            .names
            .iter()
            .zip(&self.coefficients)
            .zip(&self.standard_errors)
            .zip(&p_values)
        {
            w.write_record([name.clone(), c.to_string(), se.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
