use std::collections::BTreeMap;
use std::io::Cursor;

use proptest::prelude::*;

use revclean_core::cleaning::{apply_clean, sample_controlled, sample_controlled_per_split};
use revclean_core::corpus::{parse_dataset, write_dataset, FieldMapping};
use revclean_core::fixtures::{synthetic_dataset, synthetic_predictions};
use revclean_core::metrics::cohens_kappa;
use revclean_core::prediction::ErrorHandling;
use revclean_core::prompting::{
    approx_token_count, parse_label_response, render_prompt, truncate_diff, InputMode, InstructionVariant,
    PromptConfig, ELISION_MARKER,
};
use revclean_core::topics::{propagate, AnnotationRecord};
use revclean_core::{Dataset, Label, ReviewInstance, Split};

fn hunk(start: usize, body_lines: usize) -> String {
    let mut h = format!("@@ -{start},{body_lines} +{start},{body_lines} @@\n");
    for i in 0..body_lines {
        h.push_str(&format!(" line{i} = value{i};\n"));
    }
    h
}

#[test]
fn two_hunks_over_budget_keep_the_first() {
    // header: 12 tokens, each body line: 4 tokens
    let first = hunk(1, 12);
    let second = hunk(40, 12);
    assert_eq!(approx_token_count(&first), 60);
    let patch = format!("{first}{second}");
    let out = truncate_diff(&patch, 70);
    assert_eq!(out, format!("{first}{ELISION_MARKER}"));
    assert!(approx_token_count(&out) <= 70);
    assert_eq!(truncate_diff(&patch, 1000), patch);
}

#[test]
fn comment_only_prompt_ignores_the_diff() {
    let inst = ReviewInstance::new("1", "@@ -1 +1 @@\n-a\n+b\n", "Why do we have this flag?");
    let cfg = PromptConfig::new(InstructionVariant::Definition, InputMode::CommentOnly);
    let p = render_prompt(&inst, &cfg);
    assert!(p.user_text.contains("Why do we have this flag?"));
    assert!(!p.user_text.contains("+b"));
    let with_diff = render_prompt(&inst, &PromptConfig::new(InstructionVariant::Auxiliary, InputMode::CommentPlusDiff));
    assert!(with_diff.user_text.contains("+b"));
    assert_ne!(p.fingerprint, with_diff.fingerprint);
    assert_eq!(p, render_prompt(&inst, &cfg));
}

fn arb_instance() -> impl Strategy<Value = ReviewInstance> {
    (
        "[a-z0-9]{1,8}",
        "[a-z@][ -~\n]{0,40}",
        "[a-zA-Z]\\PC{0,40}",
        prop_oneof![Just(Split::Train), Just(Split::Validation), Just(Split::Test)],
        proptest::option::of(prop_oneof![Just(Label::Valid), Just(Label::Noisy)]),
    )
        .prop_map(|(id, patch, comment, split, gold)| {
            let mut i = ReviewInstance::new(id, patch, comment).with_split(split).with_lang("go");
            i.gold_label = gold;
            i
        })
}

proptest! {
    #[test]
    fn corpus_round_trips(instances in proptest::collection::vec(arb_instance(), 0..20)) {
        let mut seen = std::collections::HashSet::new();
        let unique: Vec<_> = instances.into_iter().filter(|i| seen.insert(i.id.clone())).collect();
        let ds = Dataset::new(unique).unwrap();
        let fields = FieldMapping::default();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf, &fields).unwrap();
        let parsed = parse_dataset(Cursor::new(&buf), &fields).unwrap();
        prop_assert!(parsed.rejects.is_empty());
        prop_assert_eq!(&parsed.dataset, &ds);
        let mut again = Vec::new();
        write_dataset(&parsed.dataset, &mut again, &fields).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn label_parsing_is_total(text in "\\PC{0,80}") {
        let _ = parse_label_response(&text);
    }

    #[test]
    fn truncation_respects_budget(hunks in 1usize..6, lines in 1usize..15, budget in 1usize..200) {
        let patch: String = (0..hunks).map(|h| hunk(1 + h * 50, lines)).collect();
        let out = truncate_diff(&patch, budget);
        prop_assert!(approx_token_count(&out) <= budget.max(approx_token_count(ELISION_MARKER)));
        prop_assert!(patch.starts_with(out.trim_end_matches(ELISION_MARKER)));
    }

    #[test]
    fn kappa_is_symmetric(pairs in proptest::collection::vec((0u8..3, 0u8..3), 2..40)) {
        let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        prop_assert_eq!(cohens_kappa(&a, &b).ok(), cohens_kappa(&b, &a).ok());
        if let Ok(k) = cohens_kappa(&a, &b) {
            prop_assert!((-1.0..=1.0).contains(&k));
        }
    }

    #[test]
    fn cleaning_keeps_exactly_the_valid_predictions(train in 1usize..300, val in 1usize..60, frac in 0.0f64..=1.0, seed: u64) {
        let ds = synthetic_dataset(&BTreeMap::from([(Split::Train, train), (Split::Validation, val)]));
        let want = BTreeMap::from([
            (Split::Train, (train as f64 * frac) as usize),
            (Split::Validation, (val as f64 * frac) as usize),
        ]);
        let preds = synthetic_predictions(&ds, &want, "m");
        let (cleaned, report) = apply_clean(&ds, &preds, ErrorHandling::AsNoisy).unwrap();
        prop_assert_eq!(cleaned.len(), want.values().sum::<usize>());
        prop_assert_eq!(report.retained + report.removed, report.input);

        let targets: BTreeMap<Split, usize> = want.clone();
        let a = sample_controlled_per_split(&ds, &targets, seed).unwrap();
        let b = sample_controlled_per_split(&ds, &targets, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for (s, n) in &targets {
            prop_assert_eq!(a.split(*s).len(), *n);
        }
    }

    #[test]
    fn propagation_is_invariant_under_relabeling(
        scores in proptest::collection::vec((1usize..50, 1u8..=5, 1u8..=3), 1..12),
        seed: u64,
    ) {
        let clusters: Vec<(usize, usize, Vec<String>)> =
            scores.iter().enumerate().map(|(c, (size, _, _))| (c, *size, vec![format!("r{c}")])).collect();
        let anns: Vec<AnnotationRecord> = scores.iter().enumerate().map(|(c, (_, i, r))| AnnotationRecord {
            cluster: c,
            representative_id: format!("r{c}"),
            comment: String::new(),
            information: Some(*i),
            relevance: Some(*r),
        }).collect();
        let base = propagate(&clusters, &anns).unwrap();

        let mut order: Vec<usize> = (0..clusters.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let relabeled: Vec<_> = order.iter().enumerate()
            .map(|(new, &old)| (new, clusters[old].1, clusters[old].2.clone()))
            .collect();
        let q = propagate(&relabeled, &anns).unwrap();
        prop_assert!((q.information - base.information).abs() < 1e-12);
        prop_assert!((q.relevance - base.relevance).abs() < 1e-12);
    }
}

#[test]
fn controlled_sample_is_seed_reproducible() {
    let ds = synthetic_dataset(&BTreeMap::from([(Split::Train, 500)]));
    let a = sample_controlled(&ds, 120, 42).unwrap();
    let b = sample_controlled(&ds, 120, 42).unwrap();
    let c = sample_controlled(&ds, 120, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 120);
}
