//! Cleaned (predicted-valid) and size-matched controlled datasets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Split};
use crate::label::Label;
use crate::metrics::{class_metrics, confusion, MetricsError};
use crate::prediction::{ErrorHandling, Prediction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CleanError {
    #[error("no prediction for instance `{0}`")]
    MissingPrediction(String),
    #[error("more than one prediction for instance `{0}`")]
    DuplicatePrediction(String),
    #[error("target size {target} exceeds available {available}")]
    TargetTooLarge { target: usize, available: usize },
    #[error("no instance was predicted valid")]
    EmptyPredictedValid,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub input: usize,
    pub retained: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub retained: usize,
    pub removed: usize,
    pub retained_ratio: f64,
    pub per_split: BTreeMap<Split, SplitCounts>,
    /// Error-marked predictions among the input.
    pub error_marked: usize,
    pub error_handling: ErrorHandling,
    pub model: String,
    pub prompt_variant: String,
    /// Set when the report describes a controlled sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CleanReport {
    pub fn retained_in(&self, split: Split) -> usize {
        self.per_split.get(&split).map_or(0, |c| c.retained)
    }
}

impl fmt::Display for CleanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "classifier     {} ({})", self.model, self.prompt_variant)?;
        writeln!(
            f,
            "input {:>9}  retained {:>9}  removed {:>9}  ratio {:.4}",
            self.input, self.retained, self.removed, self.retained_ratio
        )?;
        for (split, c) in &self.per_split {
            writeln!(
                f,
                "  {:<10} input {:>9}  retained {:>9}  removed {:>9}",
                split.as_str(),
                c.input,
                c.retained,
                c.removed
            )?;
        }
        if self.error_marked > 0 {
            writeln!(f, "error-marked predictions: {} ({:?})", self.error_marked, self.error_handling)?;
        }
        if let Some(seed) = self.seed {
            writeln!(f, "seed {seed}")?;
        }
        Ok(())
    }
}

fn uniform_or_mixed<'a>(mut values: impl Iterator<Item = &'a str>) -> String {
    match values.next() {
        None => String::new(),
        Some(first) => {
            if values.all(|v| v == first) {
                first.to_string()
            } else {
                "mixed".to_string()
            }
        }
    }
}

/// Keeps the instances whose prediction resolves to `valid`, in dataset
/// order. Predictions for ids outside the dataset are ignored, which makes
/// cleaning a cleaned dataset with the same predictions a no-op.
pub fn apply_clean(
    dataset: &Dataset,
    predictions: &[Prediction],
    handling: ErrorHandling,
) -> Result<(Dataset, CleanReport), CleanError> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(CleanError::DuplicatePrediction(p.id.clone()));
        }
    }

    let mut kept = Vec::new();
    let mut per_split: BTreeMap<Split, SplitCounts> = BTreeMap::new();
    let mut error_marked = 0;
    let mut used = Vec::with_capacity(dataset.len());
    for inst in dataset {
        let pred = by_id
            .get(inst.id.as_str())
            .ok_or_else(|| CleanError::MissingPrediction(inst.id.clone()))?;
        used.push(*pred);
        error_marked += usize::from(pred.is_error());
        let counts = per_split.entry(inst.split).or_default();
        counts.input += 1;
        if pred.resolved(handling) == Some(Label::Valid) {
            counts.retained += 1;
            kept.push(inst.clone());
        } else {
            counts.removed += 1;
        }
    }

    let retained = kept.len();
    let report = CleanReport {
        input: dataset.len(),
        retained,
        removed: dataset.len() - retained,
        retained_ratio: if dataset.is_empty() {
            0.0
        } else {
            retained as f64 / dataset.len() as f64
        },
        per_split,
        error_marked,
        error_handling: handling,
        model: uniform_or_mixed(used.iter().map(|p| p.model.as_str())),
        prompt_variant: uniform_or_mixed(used.iter().map(|p| p.prompt_variant.as_str())),
        seed: None,
    };
    Ok((Dataset::from_subset(kept), report))
}

/// Uniform sample without replacement of exactly `target` instances,
/// returned in dataset order. Deterministic in `(dataset order, seed)`.
pub fn sample_controlled(dataset: &Dataset, target: usize, seed: u64) -> Result<Dataset, CleanError> {
    if target > dataset.len() {
        return Err(CleanError::TargetTooLarge {
            target,
            available: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, dataset.len(), target).into_vec();
    picked.sort_unstable();
    let instances = dataset.instances();
    Ok(Dataset::from_subset(
        picked.into_iter().map(|i| instances[i].clone()).collect(),
    ))
}

/// Samples each split independently to its target size. Splits without a
/// target are left out. Each split uses its own stream derived from `seed`.
pub fn sample_controlled_per_split(
    dataset: &Dataset,
    targets: &BTreeMap<Split, usize>,
    seed: u64,
) -> Result<Dataset, CleanError> {
    let mut chosen: std::collections::HashSet<String> = std::collections::HashSet::new();
    for (&split, &target) in targets {
        let part = dataset.split(split);
        let stream_seed = seed ^ (split as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let sample = sample_controlled(&part, target, stream_seed)?;
        chosen.extend(sample.into_instances().into_iter().map(|i| i.id));
    }
    Ok(Dataset::from_subset(
        dataset.iter().filter(|i| chosen.contains(&i.id)).cloned().collect(),
    ))
}

/// Valid-class precision of a classifier and its gain over the gold valid
/// proportion of the evaluated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidRatio {
    pub ratio: f64,
    pub baseline: f64,
    pub delta: f64,
}

pub fn valid_ratio(predicted: &[Label], gold: &[Label]) -> Result<ValidRatio, CleanError> {
    let cm = confusion(gold, predicted)?;
    let m = class_metrics(&cm, Label::Valid);
    if m.predicted_count == 0 {
        return Err(CleanError::EmptyPredictedValid);
    }
    if gold.is_empty() {
        return Err(CleanError::EmptyPredictedValid);
    }
    let baseline = m.support as f64 / gold.len() as f64;
    Ok(ValidRatio {
        ratio: m.precision,
        baseline,
        delta: m.precision - baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewInstance;

    fn dataset(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| {
                    let split = if i % 3 == 2 { Split::Validation } else { Split::Train };
                    ReviewInstance::new(format!("i{i}"), "p", "c").with_split(split)
                })
                .collect(),
        )
        .unwrap()
    }

    fn pred(id: &str, label: Option<Label>) -> Prediction {
        Prediction {
            id: id.into(),
            label,
            error: None,
            raw_response: String::new(),
            model: "m".into(),
            prompt_variant: "definition/comment".into(),
            prompt_fingerprint: String::new(),
            latency_ms: 0,
            from_cache: false,
        }
    }

    fn preds(d: &Dataset, f: impl Fn(usize) -> Option<Label>) -> Vec<Prediction> {
        d.iter().enumerate().map(|(i, inst)| pred(&inst.id, f(i))).collect()
    }

    #[test]
    fn all_valid_keeps_everything() {
        let d = dataset(9);
        let (cleaned, report) = apply_clean(&d, &preds(&d, |_| Some(Label::Valid)), ErrorHandling::AsNoisy).unwrap();
        assert_eq!(cleaned, d);
        assert_eq!(report.retained_ratio, 1.0);
        assert_eq!(report.model, "m");
    }

    #[test]
    fn all_noisy_keeps_nothing() {
        let d = dataset(9);
        let (cleaned, report) = apply_clean(&d, &preds(&d, |_| Some(Label::Noisy)), ErrorHandling::AsNoisy).unwrap();
        assert!(cleaned.is_empty());
        assert_eq!(report.retained_ratio, 0.0);
        assert_eq!(report.removed, 9);
    }

    #[test]
    fn missing_and_duplicate_predictions() {
        let d = dataset(3);
        let mut p = preds(&d, |_| Some(Label::Valid));
        p.pop();
        assert_eq!(
            apply_clean(&d, &p, ErrorHandling::AsNoisy).unwrap_err(),
            CleanError::MissingPrediction("i2".into())
        );
        let mut p = preds(&d, |_| Some(Label::Valid));
        p.push(p[0].clone());
        assert!(matches!(
            apply_clean(&d, &p, ErrorHandling::AsNoisy),
            Err(CleanError::DuplicatePrediction(_))
        ));
    }

    #[test]
    fn errors_follow_the_handling_policy() {
        let d = dataset(4);
        let p = preds(&d, |i| if i == 0 { None } else { Some(Label::Valid) });
        let (noisy, r) = apply_clean(&d, &p, ErrorHandling::AsNoisy).unwrap();
        assert_eq!((noisy.len(), r.error_marked), (3, 1));
        let (valid, _) = apply_clean(&d, &p, ErrorHandling::AsValid).unwrap();
        assert_eq!(valid.len(), 4);
        let (excluded, _) = apply_clean(&d, &p, ErrorHandling::Exclude).unwrap();
        assert_eq!(excluded.len(), 3);
    }

    #[test]
    fn cleaning_is_idempotent_and_order_preserving() {
        let d = dataset(30);
        let p = preds(&d, |i| Some(if i % 4 == 0 { Label::Noisy } else { Label::Valid }));
        let (once, r1) = apply_clean(&d, &p, ErrorHandling::AsNoisy).unwrap();
        let (twice, r2) = apply_clean(&once, &p, ErrorHandling::AsNoisy).unwrap();
        assert_eq!(once, twice);
        assert_eq!(r1.retained, r2.retained);
        let ids: Vec<_> = once.iter().map(|i| i.id.clone()).collect();
        let expected: Vec<_> = d.iter().enumerate().filter(|(i, _)| i % 4 != 0).map(|(_, x)| x.id.clone()).collect();
        assert_eq!(ids, expected);
        assert_eq!(r1.retained + r1.removed, r1.input);
    }

    #[test]
    fn controlled_full_size_is_identity() {
        let d = dataset(20);
        assert_eq!(sample_controlled(&d, 20, 7).unwrap(), d);
    }

    #[test]
    fn controlled_is_deterministic_and_distinct() {
        let d = dataset(200);
        let a = sample_controlled(&d, 50, 42).unwrap();
        let b = sample_controlled(&d, 50, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        let c = sample_controlled(&d, 50, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn controlled_target_too_large() {
        assert_eq!(
            sample_controlled(&dataset(3), 4, 1).unwrap_err(),
            CleanError::TargetTooLarge { target: 4, available: 3 }
        );
    }

    #[test]
    fn per_split_targets() {
        let d = dataset(30); // 20 train, 10 validation
        let targets = BTreeMap::from([(Split::Train, 7), (Split::Validation, 3)]);
        let s = sample_controlled_per_split(&d, &targets, 5).unwrap();
        assert_eq!(s.split(Split::Train).len(), 7);
        assert_eq!(s.split(Split::Validation).len(), 3);
        assert!(sample_controlled_per_split(&d, &BTreeMap::from([(Split::Validation, 11)]), 5).is_err());
    }

    #[test]
    fn valid_ratio_of_perfect_classifier() {
        let gold = [Label::Valid, Label::Noisy, Label::Valid];
        let r = valid_ratio(&gold, &gold).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(
            valid_ratio(&[Label::Noisy; 3], &gold).unwrap_err(),
            CleanError::EmptyPredictedValid
        );
    }
}
