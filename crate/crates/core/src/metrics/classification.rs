use std::fmt;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::label::Label;

/// 2×2 counts of gold vs. predicted labels, with `valid` as the positive
/// class. [`ConfusionMatrix::swapped`] gives the `noisy`-positive view.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    /// The matrix with `positive` as the positive class.
    pub fn view(&self, positive: Label) -> Self {
        match positive {
            Label::Valid => *self,
            Label::Noisy => self.swapped(),
        }
    }

    pub fn add(&mut self, gold: Label, pred: Label) {
        match (gold, pred) {
            (Label::Valid, Label::Valid) => self.tp += 1,
            (Label::Noisy, Label::Valid) => self.fp += 1,
            (Label::Valid, Label::Noisy) => self.fn_ += 1,
            (Label::Noisy, Label::Noisy) => self.tn += 1,
        }
    }
}

pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(gold.len(), pred.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        cm.add(g, p);
    }
    Ok(cm)
}

/// Precision, recall and F1 as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of the class (total gold count for weighted metrics).
    pub support: u64,
    pub predicted_count: u64,
    /// Set when precision or recall had a zero denominator and was reported
    /// as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, positive: Label) -> ClassMetrics {
    let v = cm.view(positive);
    let predicted = v.tp + v.fp;
    let support = v.tp + v.fn_;
    let precision = ratio(v.tp, predicted);
    let recall = ratio(v.tp, support);
    let degenerate = precision.is_none() || recall.is_none();
    let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
    ClassMetrics {
        precision: p,
        recall: r,
        f1: f1(p, r),
        support,
        predicted_count: predicted,
        degenerate,
    }
}

/// Support-weighted average over both classes, weights from gold counts.
pub fn weighted_metrics(cm: &ConfusionMatrix) -> ClassMetrics {
    let classes = Label::ALL.map(|l| class_metrics(cm, l));
    let total: u64 = classes.iter().map(|c| c.support).sum();
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if total == 0 {
            return 0.0;
        }
        classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
    };
    ClassMetrics {
        precision: weighted(|c| c.precision),
        recall: weighted(|c| c.recall),
        f1: weighted(|c| c.f1),
        support: total,
        predicted_count: classes.iter().map(|c| c.predicted_count).sum(),
        degenerate: total == 0,
    }
}

/// Rounds a fraction to a percentage with one decimal, half away from zero.
pub fn percent1(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

/// One row of the classification results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub overall: ClassMetrics,
    pub valid: ClassMetrics,
    pub noisy: ClassMetrics,
    /// Predictions left out because they were error-marked.
    pub excluded: u64,
}

impl ClassificationReport {
    pub fn new(name: impl Into<String>, cm: ConfusionMatrix) -> Self {
        ClassificationReport {
            name: name.into(),
            confusion: cm,
            overall: weighted_metrics(&cm),
            valid: class_metrics(&cm, Label::Valid),
            noisy: class_metrics(&cm, Label::Noisy),
            excluded: 0,
        }
    }

    pub fn header() -> String {
        format!(
            "{:<20} | {:>5} {:>5} {:>5} | {:>5} {:>5} {:>5} {:>4} | {:>5} {:>5} {:>5} {:>4}",
            "", "Prec", "Rec", "F1", "Prec", "Rec", "F1", "#", "Prec", "Rec", "F1", "#"
        )
    }
}

fn pct(f: f64) -> String {
    let v = percent1(f);
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<20} | {:>5} {:>5} {:>5} | {:>5} {:>5} {:>5} {:>4} | {:>5} {:>5} {:>5} {:>4}",
            self.name,
            pct(self.overall.precision),
            pct(self.overall.recall),
            pct(self.overall.f1),
            pct(self.valid.precision),
            pct(self.valid.recall),
            pct(self.valid.f1),
            self.valid.predicted_count,
            pct(self.noisy.precision),
            pct(self.noisy.recall),
            pct(self.noisy.f1),
            self.noisy.predicted_count,
        )
    }
}
