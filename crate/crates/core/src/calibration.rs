//! Binning-based calibration metrics for binary probabilistic forecasts:
//! classwise expected calibration error, the bin-occupancy constraint that
//! guards it, plain accuracy, and reliability-table emission.
//!
//! Probabilities are grouped into `M` equal-width bins. Bin `j` (1-based)
//! covers `[(j-1)/M, j/M)`; the final bin is closed at 1.0 so every valid
//! probability has a home. Class-0 aggregates are built from the complement
//! probabilities `1 - p` with inverted labels, which is what makes the two
//! per-class error terms equal in the binary case.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationError {
    ProbabilityOutOfRange,
    LengthMismatch,
    EmptyInput,
}

impl fmt::Display for CalibrationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationError::ProbabilityOutOfRange => {
                write!(f, "probability outside [0, 1]")
            }
            CalibrationError::LengthMismatch => {
                write!(f, "predictions and labels have different lengths")
            }
            CalibrationError::EmptyInput => write!(f, "empty prediction set"),
        }
    }
}

/// Whether a metric improves upward or downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b` under this direction.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// The worst representable score under this direction.
    pub fn worst(self) -> f64 {
        match self {
            Direction::Maximize => f64::NEG_INFINITY,
            Direction::Minimize => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MetricKind {
    Accuracy,
    ClasswiseEce,
}

/// Evaluation metric with its binning parameters.
///
/// `bins` and `min_occupancy` only apply to the classwise-ECE; accuracy
/// ignores them.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub bins: usize,
    pub min_occupancy: f64,
}

impl MetricSpec {
    pub fn accuracy() -> Self {
        MetricSpec {
            kind: MetricKind::Accuracy,
            bins: 20,
            min_occupancy: 0.8,
        }
    }

    pub fn classwise_ece(bins: usize, min_occupancy: f64) -> Self {
        MetricSpec {
            kind: MetricKind::ClasswiseEce,
            bins,
            min_occupancy,
        }
    }

    /// Accuracy is maximized, classwise-ECE minimized.
    pub fn direction(&self) -> Direction {
        match self.kind {
            MetricKind::Accuracy => Direction::Maximize,
            MetricKind::ClasswiseEce => Direction::Minimize,
        }
    }

    /// Score a prediction set under this metric.
    pub fn score(&self, preds: &[f64], labels: &[bool]) -> Result<f64, CalibrationError> {
        match self.kind {
            MetricKind::Accuracy => accuracy(preds, labels),
            MetricKind::ClasswiseEce => constrained_classwise_ece(preds, labels, self),
        }
    }
}

/// Map a probability to its 1-based bin ordinal among `m` equal-width bins.
///
/// Left edges belong to the bin they open (`0.05` with 20 bins is the left
/// edge of bin 2); `p = 1.0` lands in bin `m`. The raw `floor(p*m)` candidate
/// is corrected against the actual bin edges so assignment is consistent with
/// interval membership even when the product rounds across an integer.
pub fn bin_index(p: f64, m: usize) -> Result<usize, CalibrationError> {
    assert!(m >= 1, "bin count must be at least 1");
    if !(0.0..=1.0).contains(&p) {
        return Err(CalibrationError::ProbabilityOutOfRange);
    }
    let mf = m as f64;
    let mut j = (libm::floor(p * mf) as usize + 1).min(m);
    if p < bin_lo(j, m) {
        j -= 1;
    } else if j < m && p >= bin_hi(j, m) {
        j += 1;
    }
    Ok(j)
}

/// Lower edge of 1-based bin `j`.
pub fn bin_lo(j: usize, m: usize) -> f64 {
    (j - 1) as f64 / m as f64
}

/// Upper edge of 1-based bin `j`.
pub fn bin_hi(j: usize, m: usize) -> f64 {
    j as f64 / m as f64
}

/// Per-class, per-bin aggregates over one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    m: usize,
    n: usize,
    // [negative class, positive class]
    counts: [Vec<usize>; 2],
    pred_sums: [Vec<f64>; 2],
    class_hits: [Vec<usize>; 2],
}

impl CalibrationBins {
    pub fn bin_count(&self) -> usize {
        self.m
    }

    pub fn total(&self) -> usize {
        self.n
    }

    /// Number of class-`k` predictions in 1-based bin `j`.
    pub fn count(&self, class: usize, j: usize) -> usize {
        self.counts[class][j - 1]
    }

    /// Mean predicted probability of class `k` within bin `j`; `None` if empty.
    pub fn mean_pred(&self, class: usize, j: usize) -> Option<f64> {
        let c = self.counts[class][j - 1];
        (c > 0).then(|| self.pred_sums[class][j - 1] / c as f64)
    }

    /// Empirical rate of class `k` within bin `j`; `None` if empty.
    pub fn emp_rate(&self, class: usize, j: usize) -> Option<f64> {
        let c = self.counts[class][j - 1];
        (c > 0).then(|| self.class_hits[class][j - 1] as f64 / c as f64)
    }
}

/// Group positive-class probabilities (and their complements for the negative
/// class) into `m` bins.
pub fn aggregate_bins(
    preds: &[f64],
    labels: &[bool],
    m: usize,
) -> Result<CalibrationBins, CalibrationError> {
    if preds.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch);
    }
    if preds.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let mut bins = CalibrationBins {
        m,
        n: preds.len(),
        counts: [vec![0; m], vec![0; m]],
        pred_sums: [vec![0.0; m], vec![0.0; m]],
        class_hits: [vec![0; m], vec![0; m]],
    };
    for (&p, &y) in preds.iter().zip(labels) {
        let jp = bin_index(p, m)?;
        bins.counts[1][jp - 1] += 1;
        bins.pred_sums[1][jp - 1] += p;
        if y {
            bins.class_hits[1][jp - 1] += 1;
        }
        let q = 1.0 - p;
        let jn = bin_index(q, m)?;
        bins.counts[0][jn - 1] += 1;
        bins.pred_sums[0][jn - 1] += q;
        if !y {
            bins.class_hits[0][jn - 1] += 1;
        }
    }
    Ok(bins)
}

/// Classwise expected calibration error: the per-class, bin-weighted mean
/// absolute gap between mean predicted probability and empirical class rate,
/// averaged over the two classes. Empty bins contribute zero. Bounded in
/// [0, 1].
pub fn classwise_ece(bins: &CalibrationBins) -> f64 {
    let n = bins.total() as f64;
    let mut total = 0.0;
    for class in 0..2 {
        for j in 1..=bins.bin_count() {
            let c = bins.count(class, j);
            if c == 0 {
                continue;
            }
            let rate = bins.emp_rate(class, j).unwrap();
            let mean = bins.mean_pred(class, j).unwrap();
            total += (c as f64 / n) * libm::fabs(rate - mean);
        }
    }
    total / 2.0
}

/// Fraction of this class's bins that are non-empty.
pub fn occupancy_fraction(bins: &CalibrationBins, class: usize) -> f64 {
    let nonempty = (1..=bins.bin_count())
        .filter(|&j| bins.count(class, j) > 0)
        .count();
    nonempty as f64 / bins.bin_count() as f64
}

/// Classwise-ECE with the occupancy penalty: if fewer than
/// `spec.min_occupancy` of the positive-class bins are non-empty, the score is
/// pinned to 1.0 (the maximum error). This stops a model from looking
/// well-calibrated by predicting the base rate everywhere.
pub fn constrained_classwise_ece(
    preds: &[f64],
    labels: &[bool],
    spec: &MetricSpec,
) -> Result<f64, CalibrationError> {
    let bins = aggregate_bins(preds, labels, spec.bins)?;
    if occupancy_fraction(&bins, 1) < spec.min_occupancy {
        return Ok(1.0);
    }
    Ok(classwise_ece(&bins))
}

/// Fraction of correct hard classifications; `p >= 0.5` predicts the positive
/// class (ties go to class 1).
pub fn accuracy(preds: &[f64], labels: &[bool]) -> Result<f64, CalibrationError> {
    if preds.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch);
    }
    if preds.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == y)
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

/// One reliability-table row: per class and bin, the bin interval, occupancy,
/// mean prediction, and empirical rate (the latter two null for empty bins).
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityRow {
    pub class: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean_pred: Option<f64>,
    pub emp_rate: Option<f64>,
}

/// Emit the full 2M-row reliability table (class 0 rows first, bins
/// ascending).
pub fn reliability_table(bins: &CalibrationBins) -> Vec<ReliabilityRow> {
    let m = bins.bin_count();
    let mut rows = Vec::with_capacity(2 * m);
    for class in 0..2 {
        for j in 1..=m {
            rows.push(ReliabilityRow {
                class,
                bin_lo: bin_lo(j, m),
                bin_hi: bin_hi(j, m),
                count: bins.count(class, j),
                mean_pred: bins.mean_pred(class, j),
                emp_rate: bins.emp_rate(class, j),
            });
        }
    }
    rows
}
