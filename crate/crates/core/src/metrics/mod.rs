//! Evaluation: IoU, line errors, error distributions and aggregation over
//! files.

mod report;
mod wilcoxon;

pub use report::{aggregate, evaluate_file, AggregateMode, FileStats, LineCounts, MetricsReport, OutputKind, Statistic};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

use serde::{Deserialize, Serialize};

use crate::preprocess::BoundaryLine;
use crate::{Error, Matrix, Result};

/// Thresholds (m) for the within-threshold fractions.
pub const WITHIN_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iou {
    pub value: f64,
    pub intersection: usize,
    pub union: usize,
    /// Both masks empty; `value` is then 1 by convention.
    pub both_empty: bool,
}

impl Iou {
    pub fn from_counts(intersection: usize, union: usize) -> Self {
        if union == 0 {
            Self { value: 1.0, intersection, union, both_empty: true }
        } else {
            Self {
                value: intersection as f64 / union as f64,
                intersection,
                union,
                both_empty: false,
            }
        }
    }
}

/// Intersection over union of two equally sized flag sets.
pub fn iou_flags(a: &[bool], b: &[bool]) -> Result<Iou> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!("mask lengths {} and {} differ", a.len(), b.len())));
    }
    let (mut inter, mut union) = (0, 0);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(Iou::from_counts(inter, union))
}

pub fn iou(a: &Matrix<bool>, b: &Matrix<bool>) -> Result<Iou> {
    if a.shape() != b.shape() {
        return Err(Error::Alignment(format!("mask shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    iou_flags(a.as_slice(), b.as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineErrorStats {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Share of pings with `|error| <` each of [`WITHIN_THRESHOLDS`].
    pub within: [f64; 3],
}

/// Absolute errors at the included pings: not excluded and valid in the
/// target. The prediction's depth is used whether or not it is flagged
/// valid, so failed picks count against the picker.
pub fn line_abs_errors(target: &BoundaryLine, predicted: &BoundaryLine, exclude: &[bool]) -> Result<Vec<f64>> {
    if target.len() != predicted.len() || target.len() != exclude.len() {
        return Err(Error::Alignment(format!(
            "line lengths {} / {} and exclusion length {} differ",
            target.len(),
            predicted.len(),
            exclude.len()
        )));
    }
    Ok((0..target.len())
        .filter(|&i| !exclude[i] && target.valid[i])
        .map(|i| (predicted.depths[i] - target.depths[i]).abs())
        .collect())
}

pub fn error_stats(abs_errors: &[f64]) -> Result<LineErrorStats> {
    let n = abs_errors.len();
    if n == 0 {
        return Err(Error::Undefined("no pings included in line error".into()));
    }
    let mae = abs_errors.iter().sum::<f64>() / n as f64;
    let mse = abs_errors.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let within = WITHIN_THRESHOLDS.map(|t| abs_errors.iter().filter(|&&e| e < t).count() as f64 / n as f64);
    Ok(LineErrorStats { n, mae, mse, rmse: mse.sqrt(), within })
}

pub fn line_error_stats(target: &BoundaryLine, predicted: &BoundaryLine, exclude: &[bool]) -> Result<LineErrorStats> {
    error_stats(&line_abs_errors(target, predicted, exclude)?)
}

/// Empirical distribution of absolute errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCdf {
    sorted: Vec<f64>,
}

impl ErrorCdf {
    pub fn new(abs_errors: &[f64]) -> Result<Self> {
        if abs_errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::Domain("errors must be finite and non-negative".into()));
        }
        let mut sorted = abs_errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of errors `<= t`.
    pub fn fraction_le(&self, t: f64) -> f64 {
        if self.sorted.is_empty() {
            return 1.0;
        }
        self.sorted.partition_point(|&e| e <= t) as f64 / self.sorted.len() as f64
    }

    pub fn curve(&self, thresholds: &[f64]) -> Vec<(f64, f64)> {
        thresholds.iter().map(|&t| (t, self.fraction_le(t))).collect()
    }

    /// Integral of `1 - F(t)` over `t >= 0`, summed exactly over the steps
    /// of the empirical CDF. Equals the mean absolute error.
    pub fn area_above(&self) -> f64 {
        let n = self.sorted.len();
        if n == 0 {
            return 0.0;
        }
        let mut area = 0.0;
        let mut prev = 0.0;
        for (k, &e) in self.sorted.iter().enumerate() {
            area += (e - prev) * (n - k) as f64;
            prev = e;
        }
        area / n as f64
    }
}
