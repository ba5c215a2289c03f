//! Deterministic fixtures shared by tests, the mock backend and demos.

use std::collections::BTreeMap;

use crate::corpus::{Dataset, ReviewInstance, Split};
use crate::label::Label;
use crate::prediction::Prediction;

/// Gold sizes of the 270-comment annotated sample.
pub const GOLD_VALID: usize = 172;
pub const GOLD_NOISY: usize = 98;

/// Confusion counts with valid as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionSpec {
    pub name: &'static str,
    pub model: &'static str,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub const BASELINE: ConfusionSpec = ConfusionSpec {
    name: "baseline",
    model: "all-valid",
    tp: 172,
    fp: 98,
    fn_: 0,
    tn: 0,
};

pub const GPT35: ConfusionSpec = ConfusionSpec {
    name: "gpt-3.5",
    model: "gpt-3.5-turbo-0125",
    tp: 63,
    fp: 11,
    fn_: 109,
    tn: 87,
};

pub const LLAMA3: ConfusionSpec = ConfusionSpec {
    name: "llama3",
    model: "Llama-3-8B-Instruct",
    tp: 146,
    fp: 48,
    fn_: 26,
    tn: 50,
};

const VALID_COMMENTS: &[&str] = &[
    "Why do we have this flag?",
    "This can be simplified as new ArrayList<>(Arrays.asList(new ProtocolConfig(protocol)))",
    "Should this check for null before dereferencing?",
    "This loop never terminates when the list is empty.",
    "Please close the stream in a finally block.",
    "Consider using a constant instead of the magic number.",
    "This method is not thread safe, the map is shared.",
    "The error is swallowed here, should we log it?",
];

const NOISY_COMMENTS: &[&str] = &[
    "LGTM",
    "Thanks!",
    "Done.",
    "Same as above.",
    "nit",
    "Ok",
    "+1",
    "See my other comment.",
];

const PATCH: &str = "@@ -10,3 +10,4 @@ public class Handler {\n     private final Config config;\n+    private boolean legacy;\n     public Handler(Config config) {\n         this.config = config;\n";

/// Tag that makes every fixture comment unique, e.g. `[c007]`.
pub fn tag(i: usize) -> String {
    format!("[c{i:03}]")
}

/// 270 instances: the first 172 valid, the rest noisy. Every comment ends
/// with its [`tag`].
pub fn eval_dataset() -> Dataset {
    let instances = (0..GOLD_VALID + GOLD_NOISY)
        .map(|i| {
            let (pool, gold) = if i < GOLD_VALID {
                (VALID_COMMENTS, Label::Valid)
            } else {
                (NOISY_COMMENTS, Label::Noisy)
            };
            let text = format!("{} {}", pool[i % pool.len()], tag(i));
            ReviewInstance::new(format!("ev-{i:03}"), PATCH, text)
                .with_split(Split::Test)
                .with_lang("java")
                .with_gold(gold)
        })
        .collect();
    Dataset::new(instances).expect("fixture ids are unique")
}

/// Predicted label for each fixture index under `spec`.
pub fn eval_labels(spec: &ConfusionSpec) -> Vec<Label> {
    assert_eq!(spec.tp + spec.fn_, GOLD_VALID);
    assert_eq!(spec.fp + spec.tn, GOLD_NOISY);
    (0..GOLD_VALID + GOLD_NOISY)
        .map(|i| {
            if i < GOLD_VALID {
                if i < spec.tp {
                    Label::Valid
                } else {
                    Label::Noisy
                }
            } else if i - GOLD_VALID < spec.fp {
                Label::Valid
            } else {
                Label::Noisy
            }
        })
        .collect()
}

pub fn response_for(label: Label) -> String {
    format!("Label: {label}\nReason: fixture response.")
}

/// `(substring, response)` rules that make a mock model reproduce `spec`
/// on [`eval_dataset`].
pub fn eval_mock_rules(spec: &ConfusionSpec) -> Vec<(String, String)> {
    eval_labels(spec)
        .into_iter()
        .enumerate()
        .map(|(i, l)| (tag(i), response_for(l)))
        .collect()
}

/// Ready-made predictions for `spec` over [`eval_dataset`].
pub fn eval_predictions(spec: &ConfusionSpec) -> Vec<Prediction> {
    let ds = eval_dataset();
    ds.iter()
        .zip(eval_labels(spec))
        .map(|(inst, l)| Prediction::labelled(&inst.id, l, response_for(l), spec.model, "definition/comment"))
        .collect()
}

/// Dataset with the given split sizes and synthetic content.
pub fn synthetic_dataset(sizes: &BTreeMap<Split, usize>) -> Dataset {
    let mut out = Vec::with_capacity(sizes.values().sum());
    for (split, &n) in sizes {
        for i in 0..n {
            out.push(
                ReviewInstance::new(format!("{split}-{i}"), PATCH, format!("comment {i}"))
                    .with_split(*split)
                    .with_lang("java"),
            );
        }
    }
    Dataset::new(out).expect("synthetic ids are unique")
}

/// Predictions marking exactly `valid[split]` instances of each split as
/// valid, spread evenly through the split.
pub fn synthetic_predictions(dataset: &Dataset, valid: &BTreeMap<Split, usize>, model: &str) -> Vec<Prediction> {
    let totals: BTreeMap<Split, usize> = [Split::Train, Split::Validation, Split::Test]
        .into_iter()
        .map(|s| (s, dataset.split(s).len()))
        .collect();
    let mut seen: BTreeMap<Split, usize> = BTreeMap::new();
    dataset
        .iter()
        .map(|inst| {
            let pos = seen.entry(inst.split).or_default();
            let total = totals[&inst.split];
            let want = valid.get(&inst.split).copied().unwrap_or(0);
            // the i-th instance is valid when floor((i+1)·want/total) increments
            let is_valid = (*pos + 1) * want / total > *pos * want / total;
            *pos += 1;
            let l = if is_valid { Label::Valid } else { Label::Noisy };
            Prediction::labelled(&inst.id, l, response_for(l), model, "definition/comment")
        })
        .collect()
}

/// Two tight groups of six unit vectors in 3-D. Points 0..6 lie near
/// the x axis, 6..12 near the y axis.
pub fn two_blobs() -> Vec<Vec<f64>> {
    let offsets = [
        (0.00, 0.00),
        (0.03, 0.00),
        (0.00, 0.03),
        (0.02, 0.01),
        (0.01, 0.02),
        (0.03, 0.02),
    ];
    let mut out = Vec::new();
    for axis in 0..2 {
        for &(a, b) in &offsets {
            let v: [f64; 3] = if axis == 0 { [1.0, a, b] } else { [a, 1.0, b] };
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}
