//! Probabilistic binary classifiers: the `Learner`/`Model` contract and a
//! from-scratch logistic regression trained by full-batch gradient descent on
//! the L2-regularized mean negative log-likelihood.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationError, MetricSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearnError {
    DimensionMismatch,
    /// Training labels contain a single class.
    SingleClassTraining,
    /// Loss or gradient became non-finite: the learning rate diverged.
    NonFiniteLoss,
    Metric(CalibrationError),
}

impl fmt::Display for LearnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnError::DimensionMismatch => write!(f, "matrix dimensions do not agree"),
            LearnError::SingleClassTraining => {
                write!(f, "training labels contain a single class")
            }
            LearnError::NonFiniteLoss => write!(f, "training diverged to a non-finite loss"),
            LearnError::Metric(e) => write!(f, "metric evaluation failed: {e}"),
        }
    }
}

impl From<CalibrationError> for LearnError {
    fn from(e: CalibrationError) -> Self {
        LearnError::Metric(e)
    }
}

/// Dense row-major matrix of feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Matrix, LearnError> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(LearnError::DimensionMismatch);
        }
        let mut data = Vec::with_capacity(n * d);
        for row in rows {
            data.extend(row);
        }
        Ok(Matrix { rows: n, cols: d, data })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// New matrix keeping the given columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Matrix, LearnError> {
        if idx.iter().any(|&j| j >= self.cols) {
            return Err(LearnError::DimensionMismatch);
        }
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        })
    }
}

/// A learning algorithm: fits a model from labeled rows.
pub trait Learner {
    fn id(&self) -> &str;
    fn fit(&self, x: &Matrix, y: &[bool]) -> Result<Box<dyn Model>, LearnError>;
}

/// A fitted model producing positive-class probabilities in [0, 1].
pub trait Model {
    fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, LearnError>;
}

/// Logistic regression hyperparameters. `seed` is carried for the generic
/// contract (and serialized for replay); batch gradient descent itself is
/// deterministic and never consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrHyper {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LrHyper {
    fn default() -> Self {
        LrHyper {
            l2_lambda: 0.01,
            learning_rate: 0.1,
            max_iters: 5000,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// Fitted logistic regression: `beta[0]` is the intercept, `beta[1..]` the
/// feature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub beta: Vec<f64>,
    pub hyper: LrHyper,
}

/// Overflow-safe logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn linear(beta: &[f64], row: &[f64]) -> f64 {
    let mut z = beta[0];
    for (w, x) in beta[1..].iter().zip(row) {
        z += w * x;
    }
    z
}

/// Positive-class probabilities `sigmoid(beta0 + x . beta)` for each row.
pub fn lr_predict_proba(model: &LrModel, x: &Matrix) -> Result<Vec<f64>, LearnError> {
    if x.n_cols() + 1 != model.beta.len() {
        return Err(LearnError::DimensionMismatch);
    }
    Ok((0..x.n_rows())
        .map(|i| sigmoid(linear(&model.beta, x.row(i))))
        .collect())
}

const LOG_CLAMP: f64 = 1e-15;

fn forward(beta: &[f64], x: &Matrix, y: &[bool], l2_lambda: f64) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut preds = Vec::with_capacity(x.n_rows());
    let mut nll = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let f = sigmoid(linear(beta, x.row(i)));
        let clamped = f.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
        nll -= if label {
            libm::log(clamped)
        } else {
            libm::log(1.0 - clamped)
        };
        preds.push(f);
    }
    let penalty: f64 = beta[1..].iter().map(|b| b * b).sum::<f64>() * l2_lambda;
    (preds, nll / n + penalty)
}

/// Mean negative log-likelihood plus `l2_lambda * ||beta[1..]||^2` (the
/// intercept is not penalized). Log arguments are clamped at 1e-15.
pub fn lr_loss(model: &LrModel, x: &Matrix, y: &[bool]) -> Result<f64, LearnError> {
    if x.n_cols() + 1 != model.beta.len() || x.n_rows() != y.len() {
        return Err(LearnError::DimensionMismatch);
    }
    Ok(forward(&model.beta, x, y, model.hyper.l2_lambda).1)
}

fn gradient(beta: &[f64], preds: &[f64], x: &Matrix, y: &[bool], l2_lambda: f64) -> Vec<f64> {
    let n = x.n_rows() as f64;
    let mut grad = vec![0.0; beta.len()];
    for (i, (&f, &label)) in preds.iter().zip(y).enumerate() {
        let residual = f - if label { 1.0 } else { 0.0 };
        grad[0] += residual;
        for (g, v) in grad[1..].iter_mut().zip(x.row(i)) {
            *g += residual * v;
        }
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
        *g += 2.0 * l2_lambda * b;
    }
    grad
}

const MAX_HALVINGS: u32 = 30;

/// Fit by full-batch gradient descent from `beta = 0`, recording the accepted
/// loss after every step.
///
/// Stops at `max_iters` or when the gradient's infinity norm drops below
/// `tolerance`. When a step would raise the loss the learning rate is halved
/// and the step retried (at most 30 halvings, after which training stops at
/// the current point). The recorded loss sequence is non-increasing.
pub fn lr_fit_with_trace(
    x: &Matrix,
    y: &[bool],
    hyper: &LrHyper,
) -> Result<(LrModel, Vec<f64>), LearnError> {
    if x.n_rows() != y.len() {
        return Err(LearnError::DimensionMismatch);
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(LearnError::SingleClassTraining);
    }
    let mut beta = vec![0.0; x.n_cols() + 1];
    let mut rate = hyper.learning_rate;
    let (mut preds, mut loss) = forward(&beta, x, y, hyper.l2_lambda);
    if !loss.is_finite() {
        return Err(LearnError::NonFiniteLoss);
    }
    let mut trace = vec![loss];

    for _ in 0..hyper.max_iters {
        let grad = gradient(&beta, &preds, x, y, hyper.l2_lambda);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(LearnError::NonFiniteLoss);
        }
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(libm::fabs(*g)));
        if grad_norm < hyper.tolerance {
            break;
        }

        let mut halvings = 0;
        let accepted = loop {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&grad)
                .map(|(b, g)| b - rate * g)
                .collect();
            let (cand_preds, cand_loss) = forward(&candidate, x, y, hyper.l2_lambda);
            if cand_loss.is_finite() && cand_loss <= loss {
                beta = candidate;
                preds = cand_preds;
                loss = cand_loss;
                break true;
            }
            if halvings == MAX_HALVINGS {
                if cand_loss.is_finite() {
                    break false;
                }
                return Err(LearnError::NonFiniteLoss);
            }
            rate /= 2.0;
            halvings += 1;
        };
        if !accepted {
            break;
        }
        trace.push(loss);
    }

    Ok((
        LrModel {
            beta,
            hyper: *hyper,
        },
        trace,
    ))
}

pub fn lr_fit(x: &Matrix, y: &[bool], hyper: &LrHyper) -> Result<LrModel, LearnError> {
    lr_fit_with_trace(x, y, hyper).map(|(model, _)| model)
}

/// Logistic regression as a pluggable learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticRegression {
    pub hyper: LrHyper,
}

impl LogisticRegression {
    pub const ID: &'static str = "logistic_regression";

    pub fn new(hyper: LrHyper) -> Self {
        LogisticRegression { hyper }
    }
}

impl Learner for LogisticRegression {
    fn id(&self) -> &str {
        Self::ID
    }

    fn fit(&self, x: &Matrix, y: &[bool]) -> Result<Box<dyn Model>, LearnError> {
        Ok(Box::new(lr_fit(x, y, &self.hyper)?))
    }
}

impl Model for LrModel {
    fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        lr_predict_proba(self, x)
    }
}

/// Fit on the training split and score the evaluation split under the metric.
/// The caller is responsible for passing chronologically ordered, disjoint
/// splits (train strictly before eval).
pub fn evaluate(
    learner: &dyn Learner,
    spec: &MetricSpec,
    train: (&Matrix, &[bool]),
    eval: (&Matrix, &[bool]),
) -> Result<f64, LearnError> {
    let model = learner.fit(train.0, train.1)?;
    let preds = model.predict_proba(eval.0)?;
    Ok(spec.score(&preds, eval.1)?)
}

/// Feature matrix with labels and column names; the unit model selection
/// operates on.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<bool>,
}

impl LabeledData {
    pub fn new(feature_names: Vec<String>, x: Matrix, y: Vec<bool>) -> Result<Self, LearnError> {
        if x.n_cols() != feature_names.len() || x.n_rows() != y.len() {
            return Err(LearnError::DimensionMismatch);
        }
        Ok(LabeledData { feature_names, x, y })
    }

    /// Project onto a feature subset, preserving the given order.
    pub fn project(&self, features: &[String]) -> Result<LabeledData, LearnError> {
        let idx: Vec<usize> = features
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or(LearnError::DimensionMismatch)
            })
            .collect::<Result<_, _>>()?;
        Ok(LabeledData {
            feature_names: features.to_vec(),
            x: self.x.select_columns(&idx)?,
            y: self.y.clone(),
        })
    }
}
