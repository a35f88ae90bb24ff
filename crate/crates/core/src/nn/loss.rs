use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax over each output row, cross-entropy against a class index.
    SoftmaxCrossEntropy,
    /// Per-output `p = (1 + tanh z)/2 = σ(2z)` and binary cross-entropy.
    BinaryCrossEntropyTansig,
}

/// Targets of one graph: a class per row (unlabeled rows are `None`) or a
/// 0/1 matrix with one column per output.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<Option<usize>>),
    MultiLabel(DMatrix<f64>),
}

impl Targets {
    pub fn rows(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::MultiLabel(m) => m.nrows(),
        }
    }
}

/// Counts from which accuracy or micro-F1 is computed, mergeable across graphs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricCounts {
    pub correct: usize,
    pub total: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl MetricCounts {
    pub fn merge(&mut self, other: MetricCounts) {
        self.correct += other.correct;
        self.total += other.total;
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
    }

    /// Accuracy for class targets, micro-F1 for multi-label targets.
    pub fn value(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::SoftmaxCrossEntropy => {
                if self.total == 0 {
                    f64::NAN
                } else {
                    self.correct as f64 / self.total as f64
                }
            }
            LossKind::BinaryCrossEntropyTansig => {
                let denom = 2 * self.true_pos + self.false_pos + self.false_neg;
                if denom == 0 {
                    if self.total == 0 { f64::NAN } else { 1.0 }
                } else {
                    2.0 * self.true_pos as f64 / denom as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean over the scored entries.
    pub loss: f64,
    /// `∂loss/∂outputs`.
    pub grad: DMatrix<f64>,
    pub counts: MetricCounts,
}

fn scored_rows(rows: usize, mask: Option<&[bool]>) -> Result<Vec<usize>> {
    let idx: Vec<usize> = match mask {
        Some(m) => {
            if m.len() != rows {
                return Err(Error::DimensionMismatch { what: "mask length", expected: rows, actual: m.len() });
            }
            (0..rows).filter(|&i| m[i]).collect()
        }
        None => (0..rows).collect(),
    };
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(idx)
}

/// Mean loss over the rows selected by `mask` (all rows if `None`).
pub fn loss(outputs: &DMatrix<f64>, targets: &Targets, mask: Option<&[bool]>, kind: LossKind) -> Result<LossOutput> {
    let (rows, cols) = outputs.shape();
    if targets.rows() != rows {
        return Err(Error::DimensionMismatch { what: "target rows", expected: rows, actual: targets.rows() });
    }
    let idx = scored_rows(rows, mask)?;
    let mut grad = DMatrix::zeros(rows, cols);
    let mut counts = MetricCounts::default();
    let mut total = 0.0;
    match (kind, targets) {
        (LossKind::SoftmaxCrossEntropy, Targets::Classes(classes)) => {
            let scale = 1.0 / idx.len() as f64;
            for &i in &idx {
                let c = classes[i].ok_or_else(|| Error::Dataset(format!("scored row {i} has no label")))?;
                if c >= cols {
                    return Err(Error::Dataset(format!("class {c} of row {i} exceeds output width {cols}")));
                }
                let row = outputs.row(i);
                let pred = row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
                let top = row[pred];
                let rest: f64 = (0..cols).filter(|&j| j != pred).map(|j| (row[j] - top).exp()).sum();
                let lse = top + rest.ln_1p();
                total += (top - row[c]) + rest.ln_1p();
                for j in 0..cols {
                    let p = (row[j] - lse).exp();
                    grad[(i, j)] = scale * (p - if j == c { 1.0 } else { 0.0 });
                }
                counts.total += 1;
                counts.correct += usize::from(pred == c);
            }
            total *= scale;
        }
        (LossKind::BinaryCrossEntropyTansig, Targets::MultiLabel(y)) => {
            if y.ncols() != cols {
                return Err(Error::DimensionMismatch { what: "target columns", expected: cols, actual: y.ncols() });
            }
            let scale = 1.0 / (idx.len() * cols) as f64;
            for &i in &idx {
                for j in 0..cols {
                    let z = outputs[(i, j)];
                    let t = y[(i, j)];
                    // -[t ln σ(2z) + (1-t) ln(1-σ(2z))] = softplus(2z) - 2tz
                    let u = 2.0 * z;
                    let softplus = u.max(0.0) + (-u.abs()).exp().ln_1p();
                    total += softplus - t * u;
                    grad[(i, j)] = scale * 2.0 * (sigmoid(u) - t);
                    let pred = z > 0.0;
                    let truth = t > 0.5;
                    counts.total += 1;
                    counts.correct += usize::from(pred == truth);
                    counts.true_pos += usize::from(pred && truth);
                    counts.false_pos += usize::from(pred && !truth);
                    counts.false_neg += usize::from(!pred && truth);
                }
            }
            total *= scale;
        }
        _ => return Err(Error::InvalidParameter(format!("{kind:?} does not accept these targets"))),
    }
    Ok(LossOutput { loss: total, grad, counts })
}
