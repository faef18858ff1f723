//! The two-branch model-selection harness: Spearman correlation filter,
//! sequential forward selection, exhaustive grid hyperparameter search with
//! seed averaging, and final metric-based model selection.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::calibration::MetricSpec;
use crate::learners::{evaluate, LabeledData, LearnError, Learner};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectError {
    LengthMismatch,
    /// Fewer than three points, or a sample whose ranks have zero variance.
    DegenerateSample,
    EmptyCandidates,
    EmptyGrid,
    UnknownFeature(String),
    Learn(LearnError),
}

impl fmt::Display for SelectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectError::LengthMismatch => write!(f, "samples have different lengths"),
            SelectError::DegenerateSample => write!(f, "sample is too short or has no variation"),
            SelectError::EmptyCandidates => write!(f, "no candidates to select from"),
            SelectError::EmptyGrid => write!(f, "hyperparameter grid is empty"),
            SelectError::UnknownFeature(name) => write!(f, "unknown feature '{name}'"),
            SelectError::Learn(e) => write!(f, "learner failure: {e}"),
        }
    }
}

impl From<LearnError> for SelectError {
    fn from(e: LearnError) -> Self {
        SelectError::Learn(e)
    }
}

/// Fractional ranks with ties assigned their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the average of ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the fractional ranks.
pub fn spearman_rank_corr(a: &[f64], b: &[f64]) -> Result<f64, SelectError> {
    if a.len() != b.len() {
        return Err(SelectError::LengthMismatch);
    }
    if a.len() < 3 {
        return Err(SelectError::DegenerateSample);
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        let dx = x - mean;
        let dy = y - mean;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(SelectError::DegenerateSample);
    }
    Ok(cov / libm::sqrt(var_a * var_b))
}

fn bool_to_f64(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect()
}

/// Greedy redundancy filter.
///
/// Features are visited in descending |spearman(feature, label)| order (name
/// ascending on ties); a feature survives only if its absolute correlation
/// with every previously kept feature stays at or below `threshold`. The
/// output keeps that visiting order, so it is independent of the input's
/// column order.
pub fn correlation_filter(
    data: &LabeledData,
    threshold: f64,
) -> Result<Vec<String>, SelectError> {
    let y = bool_to_f64(&data.y);
    let columns: Vec<Vec<f64>> = (0..data.feature_names.len())
        .map(|j| (0..data.x.n_rows()).map(|i| data.x.row(i)[j]).collect())
        .collect();
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(columns.len());
    for (j, col) in columns.iter().enumerate() {
        scored.push((j, libm::fabs(spearman_rank_corr(col, &y)?)));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| data.feature_names[a.0].cmp(&data.feature_names[b.0]))
    });

    let mut kept: Vec<usize> = Vec::new();
    for &(j, _) in &scored {
        let mut redundant = false;
        for &k in &kept {
            if libm::fabs(spearman_rank_corr(&columns[j], &columns[k])?) > threshold {
                redundant = true;
                break;
            }
        }
        if !redundant {
            kept.push(j);
        }
    }
    Ok(kept
        .into_iter()
        .map(|j| data.feature_names[j].clone())
        .collect())
}

/// Result of a sequential-forward-selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SfsOutcome {
    /// Best-scoring subset along the forward path, in addition order.
    pub subset: Vec<String>,
    pub score: f64,
    /// Number of candidate evaluations performed: d(d+1)/2 for d candidates.
    pub evaluations: usize,
}

/// Sequential forward selection run to completion of search.
///
/// At each step the feature whose inclusion gives the best validation score
/// is added (ties resolved by lexicographic feature name); the path continues
/// until every candidate is included, and the subset at the path's best score
/// is returned (ties favour the smaller subset).
pub fn sfs(
    learner: &dyn Learner,
    spec: &MetricSpec,
    candidates: &[String],
    train: &LabeledData,
    val: &LabeledData,
) -> Result<SfsOutcome, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::EmptyCandidates);
    }
    for name in candidates {
        if !train.feature_names.contains(name) || !val.feature_names.contains(name) {
            return Err(SelectError::UnknownFeature(name.clone()));
        }
    }
    let direction = spec.direction();
    let mut remaining: Vec<String> = candidates.to_vec();
    remaining.sort();
    let mut selected: Vec<String> = Vec::new();
    let mut evaluations = 0usize;
    let mut best_subset: Option<(Vec<String>, f64)> = None;

    while !remaining.is_empty() {
        let mut step_best: Option<(usize, f64)> = None;
        for (idx, name) in remaining.iter().enumerate() {
            let mut trial = selected.clone();
            trial.push(name.clone());
            let tr = train.project(&trial)?;
            let va = val.project(&trial)?;
            let score = evaluate(learner, spec, (&tr.x, &tr.y), (&va.x, &va.y))?;
            evaluations += 1;
            if step_best.is_none_or(|(_, s)| direction.better(score, s)) {
                step_best = Some((idx, score));
            }
        }
        let (idx, score) = step_best.unwrap();
        selected.push(remaining.remove(idx));
        if best_subset
            .as_ref()
            .is_none_or(|(_, s)| direction.better(score, *s))
        {
            best_subset = Some((selected.clone(), score));
        }
    }

    let (subset, score) = best_subset.unwrap();
    Ok(SfsOutcome {
        subset,
        score,
        evaluations,
    })
}

/// A finite hyperparameter grid with the seeds to average over. Dimension
/// and value order is declaration order; ties in the search respect it.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub dims: Vec<(String, Vec<f64>)>,
    pub seeds: Vec<u64>,
}

impl HyperGrid {
    /// Every grid point, enumerated with the last dimension varying fastest.
    pub fn points(&self) -> Vec<BTreeMap<String, f64>> {
        let mut points = alloc::vec![BTreeMap::new()];
        for (name, values) in &self.dims {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for point in &points {
                for v in values {
                    let mut p = point.clone();
                    p.insert(name.clone(), *v);
                    next.push(p);
                }
            }
            points = next;
        }
        points
    }
}

/// Result of an exhaustive grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub hyper: BTreeMap<String, f64>,
    /// Mean validation score over the seeds.
    pub score: f64,
    pub evaluations: usize,
    /// Grid points scored worst-possible because training diverged.
    pub failed_points: usize,
}

/// Builds a learner for one grid point and seed.
pub type LearnerFactory = dyn Fn(&BTreeMap<String, f64>, u64) -> Box<dyn Learner>;

/// Evaluate every grid point at every seed and return the best point under
/// the metric (mean score over seeds; ties broken by declaration order).
/// Points whose training diverges are scored worst-possible and counted.
pub fn grid_hpo(
    factory: &LearnerFactory,
    grid: &HyperGrid,
    spec: &MetricSpec,
    features: &[String],
    train: &LabeledData,
    val: &LabeledData,
) -> Result<GridOutcome, SelectError> {
    if grid.dims.is_empty()
        || grid.seeds.is_empty()
        || grid.dims.iter().any(|(_, v)| v.is_empty())
    {
        return Err(SelectError::EmptyGrid);
    }
    let tr = train.project(features)?;
    let va = val.project(features)?;
    let direction = spec.direction();
    let mut evaluations = 0usize;
    let mut failed_points = 0usize;
    let mut best: Option<(BTreeMap<String, f64>, f64)> = None;

    for point in grid.points() {
        let mut total = 0.0;
        let mut failed = false;
        for &seed in &grid.seeds {
            let learner = factory(&point, seed);
            match evaluate(learner.as_ref(), spec, (&tr.x, &tr.y), (&va.x, &va.y)) {
                Ok(score) => total += score,
                Err(LearnError::NonFiniteLoss) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        evaluations += grid.seeds.len();
        let score = if failed {
            failed_points += 1;
            direction.worst()
        } else {
            total / grid.seeds.len() as f64
        };
        if best.as_ref().is_none_or(|(_, s)| direction.better(score, *s)) {
            best = Some((point, score));
        }
    }

    let (hyper, score) = best.unwrap();
    Ok(GridOutcome {
        hyper,
        score,
        evaluations,
        failed_points,
    })
}

/// Pick the winning learner from test-set scores: argmin for an error metric,
/// argmax for accuracy, ties by learner name ascending.
pub fn select_model(
    candidates: &BTreeMap<String, f64>,
    spec: &MetricSpec,
) -> Result<String, SelectError> {
    let direction = spec.direction();
    let mut best: Option<(&String, f64)> = None;
    for (name, &score) in candidates {
        if best.is_none_or(|(_, s)| direction.better(score, s)) {
            best = Some((name, score));
        }
    }
    best.map(|(name, _)| name.clone())
        .ok_or(SelectError::EmptyCandidates)
}

/// Final artifact of one selection branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub branch: String,
    pub learner: String,
    pub features: Vec<String>,
    pub hyper: BTreeMap<String, f64>,
    pub val_score: f64,
    pub test_score: f64,
    pub evaluations_count: usize,
}
