//! Independent reference implementations checked against the library.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use revclean_core::bleu::bleu4_tokens;
use revclean_core::fixtures::two_blobs;
use revclean_core::metrics::{exact_p_greater, normal_p_greater, wilcoxon_one_sided, SignedRanks, WilcoxonMethod};
use revclean_core::topics::{cluster, cosine_distance, cosine_similarity, ctfidf, representatives, CooccurrenceIndex};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// BLEU

fn naive_ngrams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return vec![];
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

fn naive_bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut logp = 0.0;
    for n in 1..=4 {
        let cg = naive_ngrams(c, n);
        let rg = naive_ngrams(r, n);
        let mut used = vec![false; rg.len()];
        let mut m = 0;
        for g in &cg {
            if let Some(k) = (0..rg.len()).find(|&k| !used[k] && &rg[k] == g) {
                used[k] = true;
                m += 1;
            }
        }
        let p = match (n, m) {
            (1, 0) => f64::MIN_POSITIVE,
            (_, 0) => 1.0 / (cg.len() as f64 + 1.0),
            _ => m as f64 / cg.len() as f64,
        };
        logp += p.ln() / 4.0;
    }
    let bp = if c.len() < r.len() {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * logp.exp()
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}

#[test]
fn bleu_matches_brute_force_counter() {
    let mut r = rng(11);
    for _ in 0..200 {
        let c = random_tokens(&mut r, 5, 12);
        let reference = random_tokens(&mut r, 5, 12);
        let got = bleu4_tokens(&c, &reference);
        let want = naive_bleu(&c, &reference);
        assert!((got - want).abs() < 1e-6, "{c:?} {reference:?}: {got} vs {want}");
    }
}

// Wilcoxon

fn enumerate_p(diffs: &[f64]) -> Option<f64> {
    let sr = SignedRanks::from_differences(diffs).ok()?;
    let n = sr.len();
    let doubled: Vec<u64> = sr.ranks.iter().map(|r| (r * 2.0) as u64).collect();
    let observed: u64 = doubled.iter().zip(&sr.positive).filter(|(_, p)| **p).map(|(d, _)| d).sum();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
        if w >= observed {
            hits += 1;
        }
    }
    Some(hits as f64 / (1u64 << n) as f64)
}

#[test]
fn wilcoxon_exact_matches_enumeration() {
    let mut r = rng(7);
    let mut checked = 0;
    while checked < 100 {
        let n = r.random_range(1..=10);
        // small integer grid produces zeros and ties
        let x: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..6))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..6))).collect();
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let Some(want) = enumerate_p(&diffs) else { continue };
        let got = wilcoxon_one_sided(&x, &y).unwrap();
        assert_eq!(got.method, WilcoxonMethod::Exact);
        assert_eq!(got.p_value, want, "{x:?} {y:?}");
        checked += 1;
    }
}

#[test]
fn wilcoxon_normal_close_to_exact_for_ten_to_twelve() {
    let mut r = rng(3);
    for _ in 0..100 {
        let n = r.random_range(10..=12);
        let diffs: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.5)).collect();
        let sr = SignedRanks::from_differences(&diffs).unwrap();
        let e = exact_p_greater(&sr);
        let a = normal_p_greater(&sr);
        assert!((e - a).abs() <= 0.02, "{diffs:?}: exact {e} normal {a}");
    }
}

// c-TF-IDF

#[test]
fn ctfidf_matches_formula_oracle() {
    let mut r = rng(5);
    for _ in 0..20 {
        let n_docs = r.random_range(1..=50);
        let k = r.random_range(1..=n_docs.min(5));
        let docs: Vec<Vec<String>> = (0..n_docs).map(|_| random_tokens(&mut r, 8, 6)).collect();
        // every cluster gets at least one document
        let assignment: Vec<usize> = (0..n_docs).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
        let got = ctfidf(&assignment, k, &docs);

        let total_tokens: usize = docs.iter().map(Vec::len).sum();
        let avg = total_tokens as f64 / k as f64;
        let vocab: BTreeSet<&String> = docs.iter().flatten().collect();
        for c in 0..k {
            for t in &vocab {
                let tf = docs
                    .iter()
                    .zip(&assignment)
                    .filter(|(_, a)| **a == c)
                    .map(|(d, _)| d.iter().filter(|x| x == t).count())
                    .sum::<usize>();
                let f = docs.iter().map(|d| d.iter().filter(|x| x == t).count()).sum::<usize>();
                let want = tf as f64 * (1.0 + avg / f as f64).ln();
                let have = got[c].get(*t).copied().unwrap_or(0.0);
                assert!((have - want).abs() <= 1e-12, "{t} in {c}: {have} vs {want}");
            }
        }
    }
}

// Clustering

/// Average linkage recomputed from member lists at every step.
fn naive_average_linkage(points: &[Vec<f64>], k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += cosine_distance(&points[i], &points[j]);
                    }
                }
                let d = s / (clusters[a].len() * clusters[b].len()) as f64;
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let moved = clusters.remove(best.2);
        clusters[best.1].extend(moved);
        merges.push(best.0);
    }
    clusters.sort_by_key(|c| *c.iter().min().unwrap());
    let mut assignment = vec![0; points.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            assignment[m] = c;
        }
    }
    (assignment, merges)
}

#[test]
fn two_blobs_recovered() {
    let pts = two_blobs();
    let c = cluster(&pts, 2).unwrap();
    assert_eq!(c.assignment, [vec![0; 6], vec![1; 6]].concat());
    let (naive, _) = naive_average_linkage(&pts, 2);
    assert_eq!(c.assignment, naive);
}

#[test]
fn clustering_matches_naive_linkage_on_random_points() {
    let mut r = rng(9);
    for _ in 0..30 {
        let n = r.random_range(2..=16);
        let dim = r.random_range(2..=5);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let k = r.random_range(1..=n);
        let got = cluster(&pts, k).unwrap();
        let (want, merges) = naive_average_linkage(&pts, k);
        assert_eq!(got.assignment, want);
        for (a, b) in got.merge_distances.iter().zip(&merges) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(got.k(), k);
        let mut seen = vec![false; k];
        got.assignment.iter().for_each(|&c| seen[c] = true);
        assert!(seen.into_iter().all(|s| s));
        for w in got.merge_distances.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{:?}", got.merge_distances);
        }
        for c in &got.centroids {
            let norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9 || norm == 0.0);
        }
    }
}

#[test]
fn representatives_match_exhaustive_sort() {
    let mut r = rng(13);
    for _ in 0..20 {
        let pts: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let ids: Vec<String> = (0..5).map(|i| format!("id{}", 4 - i)).collect();
        let centroid: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut all: Vec<usize> = (0..5).collect();
        all.sort_by(|&a, &b| {
            cosine_similarity(&pts[b], &centroid)
                .partial_cmp(&cosine_similarity(&pts[a], &centroid))
                .unwrap()
                .then(ids[a].cmp(&ids[b]))
        });
        assert_eq!(representatives(&[0, 1, 2, 3, 4], &ids, &pts, &centroid, 3), all[..3]);
    }
}

// Coherence

#[test]
fn npmi_on_six_document_table() {
    let docs: Vec<Vec<String>> = [
        vec!["null", "check"],
        vec!["null", "check", "test"],
        vec!["rename", "variable"],
        vec!["rename", "variable", "test"],
        vec!["test"],
        vec!["null"],
    ]
    .iter()
    .map(|d| d.iter().map(|s| s.to_string()).collect())
    .collect();
    let idx = CooccurrenceIndex::new(&docs);
    // rename/variable: always together, p = 2/6
    assert!((idx.npmi("rename", "variable") - 1.0).abs() < 1e-6);
    // null/rename: never together
    assert!((idx.npmi("null", "rename") + 1.0).abs() < 1e-3);
    // null (3/6) and check (2/6) share 2 docs
    let (pxy, px, py): (f64, f64, f64) = (2.0 / 6.0, 3.0 / 6.0, 2.0 / 6.0);
    let want = ((pxy + 1e-12) / (px * py)).ln() / -(pxy + 1e-12f64).ln();
    assert!((idx.npmi("null", "check") - want).abs() < 1e-12);
    // test (3/6) and null share 1 doc
    let (pxy, px, py): (f64, f64, f64) = (1.0 / 6.0, 3.0 / 6.0, 3.0 / 6.0);
    let want = ((pxy + 1e-12) / (px * py)).ln() / -(pxy + 1e-12f64).ln();
    assert!((idx.npmi("test", "null") - want).abs() < 1e-12);
    let terms: Vec<String> = ["rename", "variable", "null"].iter().map(|s| s.to_string()).collect();
    let mean = idx.coherence(&terms).unwrap();
    let want = (idx.npmi("rename", "variable") + idx.npmi("rename", "null") + idx.npmi("variable", "null")) / 3.0;
    assert!((mean - want).abs() < 1e-15);
}

#[test]
fn propagated_overall_is_size_weighted_mean() {
    use revclean_core::topics::{propagate, AnnotationRecord};
    let ann = |id: &str, i: u8, r: u8| AnnotationRecord {
        cluster: 0,
        representative_id: id.into(),
        comment: String::new(),
        information: Some(i),
        relevance: Some(r),
    };
    let clusters = vec![
        (0, 10, vec!["a".to_string(), "b".to_string(), "c".to_string()]),
        (1, 5, vec!["d".to_string()]),
        (2, 25, vec!["e".to_string(), "f".to_string()]),
    ];
    let anns = vec![
        ann("a", 4, 3),
        ann("b", 3, 2),
        ann("c", 5, 3),
        ann("d", 1, 1),
        ann("e", 2, 2),
        ann("f", 3, 3),
    ];
    let q = propagate(&clusters, &anns).unwrap();
    // cluster info: 4, 1, 2.5; relevance: 8/3, 1, 2.5
    let info = (4.0 * 10.0 + 1.0 * 5.0 + 2.5 * 25.0) / 40.0;
    let rel = (8.0 / 3.0 * 10.0 + 1.0 * 5.0 + 2.5 * 25.0) / 40.0;
    assert!((q.information - info).abs() < 1e-12);
    assert!((q.relevance - rel).abs() < 1e-12);
    let lo = q.clusters.iter().map(|c| c.information).fold(f64::INFINITY, f64::min);
    let hi = q.clusters.iter().map(|c| c.information).fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= q.information && q.information <= hi);
}
