use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{confusion, per_class_prf, topk_accuracy, weighted_aggregate, ClassMetrics, ConfusionMatrix, PredictionTable, WeightedMetrics};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Everything reported for one evaluated prediction table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub fingerprint: String,
    pub samples: usize,
    pub num_classes: usize,
    pub top1: f64,
    pub top5: f64,
    /// Effective k of `top5`, `min(5, K)`.
    pub top5_k: usize,
    pub weighted: WeightedMetrics,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate<T: Scalar>(preds: &PredictionTable<T>, name: &str, fingerprint: &str) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Data(format!("cannot evaluate empty prediction table `{name}`")));
    }
    let cm = confusion(preds);
    let per_class = per_class_prf(&cm);
    let weighted = weighted_aggregate(&per_class)?;
    Ok(EvalReport {
        name: name.to_string(),
        fingerprint: fingerprint.to_string(),
        samples: preds.len(),
        num_classes: preds.num_classes(),
        top1: topk_accuracy(preds, 1),
        top5: topk_accuracy(preds, 5),
        top5_k: preds.num_classes().min(5),
        weighted,
        per_class,
        confusion: cm,
    })
}

impl EvalReport {
    /// Aligned-column summary for terminals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "report      {}", self.name);
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "samples     {}  classes {}", self.samples, self.num_classes);
        let _ = writeln!(s, "top-1       {:>7.2}", self.top1);
        let _ = writeln!(s, "top-{}       {:>7.2}", self.top5_k, self.top5);
        let _ = writeln!(
            s,
            "weighted    precision {:>6.4}  recall {:>6.4}  f1 {:>6.4}",
            self.weighted.precision, self.weighted.recall, self.weighted.f1
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6} {:>8} {:>10} {:>8} {:>8}", "class", "support", "precision", "recall", "f1");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:>6} {:>8} {:>10.4} {:>8.4} {:>8.4}",
                m.class, m.support, m.precision, m.recall, m.f1
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassF1Delta {
    pub class: usize,
    pub support: u64,
    pub f1_a: f64,
    pub f1_b: f64,
    pub delta: f64,
    /// `a` never got this class right and `b` does at least sometimes.
    pub recovered: bool,
}

/// Per-class `F1_b - F1_a`, ordered head to tail by `a`'s support.
pub fn classwise_f1_delta(a: &EvalReport, b: &EvalReport) -> Result<Vec<ClassF1Delta>> {
    if a.num_classes != b.num_classes || a.per_class.len() != b.per_class.len() {
        return Err(Error::Shape(format!(
            "cannot compare reports over {} and {} classes",
            a.num_classes, b.num_classes
        )));
    }
    let mut out: Vec<ClassF1Delta> = a
        .per_class
        .iter()
        .zip(&b.per_class)
        .map(|(ma, mb)| ClassF1Delta {
            class: ma.class,
            support: ma.support,
            f1_a: ma.f1,
            f1_b: mb.f1,
            delta: mb.f1 - ma.f1,
            recovered: ma.f1 == 0.0 && mb.f1 > 0.0,
        })
        .collect();
    out.sort_by(|x, y| y.support.cmp(&x.support).then(x.class.cmp(&y.class)));
    Ok(out)
}
