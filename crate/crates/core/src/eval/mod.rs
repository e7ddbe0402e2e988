//! Late fusion of pathway outputs and classification metrics.
//!
//! Argmax and top-k ranks break ties towards the lowest class index.
//! Undefined precision or recall (zero denominator) is reported as 0.

mod report;
mod table;

pub use report::{classwise_f1_delta, evaluate, ClassF1Delta, EvalReport};
pub use table::{read_prediction_table, write_prediction_table, TableFile};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Label, ProbVector};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow<T> {
    pub id: String,
    pub label: Label,
    pub probs: ProbVector<T>,
}

/// Per-sample class probabilities with ground truth, unique by id.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTable<T> {
    num_classes: usize,
    rows: Vec<PredictionRow<T>>,
}

impl<T: Scalar> PredictionTable<T> {
    pub fn new(num_classes: usize, rows: Vec<PredictionRow<T>>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Shape(format!("prediction table needs K >= 2, got {num_classes}")));
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if row.probs.len() != num_classes {
                return Err(Error::Shape(format!(
                    "row {} has {} probabilities, expected {num_classes}",
                    row.id,
                    row.probs.len()
                )));
            }
            if row.label.index() >= num_classes {
                return Err(Error::Data(format!("row {} has label {} outside 0..{num_classes}", row.id, row.label.index())));
            }
            if !seen.insert(row.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {}", row.id)));
            }
        }
        Ok(Self { num_classes, rows })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> &[PredictionRow<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same rows ordered by sample id.
    pub fn sorted_by_id(mut self) -> Self {
        self.rows.sort_by(|a, b| a.id.cmp(&b.id));
        self
    }
}

/// Arithmetic mean of two probability rows.
pub fn late_fuse<T: Scalar>(a: &ProbVector<T>, b: &ProbVector<T>) -> Result<ProbVector<T>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cannot fuse {} classes with {}", a.len(), b.len())));
    }
    let half = T::lit(0.5);
    Ok(ProbVector::from_simplex(
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(&x, &y)| (x + y) * half)
            .collect(),
    ))
}

/// Row-wise [`late_fuse`] matched by sample id; output ordered by id.
pub fn fuse_tables<T: Scalar>(a: &PredictionTable<T>, b: &PredictionTable<T>) -> Result<PredictionTable<T>> {
    if a.num_classes != b.num_classes {
        return Err(Error::Shape(format!(
            "cannot fuse tables with {} and {} classes",
            a.num_classes, b.num_classes
        )));
    }
    let mut other: BTreeMap<&str, &PredictionRow<T>> = b.rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut rows = Vec::with_capacity(a.rows.len());
    for row in &a.rows {
        let Some(partner) = other.remove(row.id.as_str()) else {
            return Err(Error::Alignment(format!("sample {} is missing from the second table", row.id)));
        };
        if partner.label != row.label {
            return Err(Error::Alignment(format!(
                "sample {} has label {} in one table and {} in the other",
                row.id,
                row.label.index(),
                partner.label.index()
            )));
        }
        rows.push(PredictionRow {
            id: row.id.clone(),
            label: row.label,
            probs: late_fuse(&row.probs, &partner.probs)?,
        });
    }
    if let Some(id) = other.keys().next() {
        return Err(Error::Alignment(format!("sample {id} is missing from the first table")));
    }
    Ok(PredictionTable::new(a.num_classes, rows)?.sorted_by_id())
}

/// `counts[true * K + predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_pairs(num_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut counts = vec![0; num_classes * num_classes];
        for (truth, pred) in pairs {
            counts[truth * num_classes + pred] += 1;
        }
        Self { num_classes, counts }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row sum: number of samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c * self.num_classes..(c + 1) * self.num_classes].iter().sum()
    }

    /// Column sum: number of samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, c)).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.num_classes)
    }
}

pub fn confusion<T: Scalar>(preds: &PredictionTable<T>) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(
        preds.num_classes,
        preds.rows.iter().map(|r| (r.label.index(), r.probs.argmax())),
    )
}

/// Rank of class `c` in `probs` (0 = best), ties going to the lower index.
fn rank_of<T: Scalar>(probs: &[T], c: usize) -> usize {
    let pc = probs[c];
    probs
        .iter()
        .enumerate()
        .filter(|&(j, &pj)| pj > pc || (pj == pc && j < c))
        .count()
}

/// Percentage of rows whose true label ranks within the top `min(k, K)`.
pub fn topk_accuracy<T: Scalar>(preds: &PredictionTable<T>, k: usize) -> f64 {
    if preds.rows.is_empty() {
        return 0.0;
    }
    let k = k.max(1).min(preds.num_classes);
    let hits = preds
        .rows
        .iter()
        .filter(|r| rank_of(r.probs.as_slice(), r.label.index()) < k)
        .count();
    100.0 * hits as f64 / preds.rows.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub(crate) fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn per_class_prf(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.num_classes)
        .map(|c| {
            let tp = cm.get(c, c);
            let support = cm.support(c);
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, support);
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Support-weighted mean of per-class metrics.
pub fn weighted_aggregate(per_class: &[ClassMetrics]) -> Result<WeightedMetrics> {
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(Error::Data("weighted metrics need at least one supported class".into()));
    }
    let n = total as f64;
    let mut out = WeightedMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for m in per_class {
        let w = m.support as f64 / n;
        out.precision += w * m.precision;
        out.recall += w * m.recall;
        out.f1 += w * m.f1;
    }
    Ok(out)
}
