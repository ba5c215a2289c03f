//! Sentence-level smoothed BLEU-4 for generated review comments.
//!
//! Modified n-gram precisions for n = 1..4 are combined by geometric mean
//! and multiplied by the brevity penalty `exp(1 − r/c)` when the candidate
//! is shorter than the reference. For n ≥ 2 a zero match count is smoothed
//! to `1 / (count + 1)`. A zero unigram precision is floored at
//! `f64::MIN_POSITIVE`, so only an empty candidate scores exactly 0.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::metrics::{wilcoxon_one_sided, WilcoxonResult};

const DEFAULT_STOPWORDS: &str = include_str!("../assets/stopwords_en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopwordMode {
    #[default]
    KeepStopwords,
    DropStopwords,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        )
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::parse(DEFAULT_STOPWORDS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedComment {
    pub tokens: Vec<String>,
    pub source: String,
}

/// Lowercases, keeps backtick-delimited spans as single tokens, and splits
/// everything else into word runs and standalone punctuation.
pub fn tokenize(text: &str, mode: StopwordMode, stopwords: &Stopwords) -> TokenizedComment {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    };

    let mut rest = lower.as_str();
    while let Some(c) = rest.chars().next() {
        if c == '`' {
            if let Some(close) = rest[1..].find('`') {
                flush(&mut word, &mut tokens);
                let span = &rest[..close + 2];
                if span.len() > 2 {
                    tokens.push(span.to_string());
                }
                rest = &rest[close + 2..];
                continue;
            }
        }
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut word, &mut tokens);

    if mode == StopwordMode::DropStopwords {
        tokens.retain(|t| !stopwords.contains(t));
    }
    TokenizedComment {
        tokens,
        source: text.to_string(),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate n-gram count for one order.
pub fn modified_precision_counts(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

/// Sentence BLEU-4 on a 0–100 scale.
pub fn bleu4(candidate: &TokenizedComment, reference: &TokenizedComment) -> f64 {
    bleu4_tokens(&candidate.tokens, &reference.tokens)
}

pub fn bleu4_tokens(candidate: &[String], reference: &[String]) -> f64 {
    let c = candidate.len();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (matches, total) = modified_precision_counts(candidate, reference, n);
        let p = if n == 1 {
            if matches == 0 {
                f64::MIN_POSITIVE
            } else {
                matches as f64 / total as f64
            }
        } else if matches == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matches as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let r = reference.len();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    100.0 * bp * (log_sum / 4.0).exp()
}

/// Which labelled subset a comment belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetLabel {
    pub id: String,
    pub label: Label,
    /// Label provenance, e.g. `our` or `tufano`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdText {
    pub id: String,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BleuError {
    #[error("ids differ between generations and references: {0}")]
    IdMismatch(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>, BleuError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BleuError::Malformed {
            line: idx + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads `{id, text}` records.
pub fn read_generations<R: BufRead>(reader: R) -> Result<Vec<IdText>, BleuError> {
    read_jsonl(reader)
}

/// Reads `{id, label, source}` records.
pub fn read_subset_labels<R: BufRead>(reader: R) -> Result<Vec<SubsetLabel>, BleuError> {
    read_jsonl(reader)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    /// `(mean − baseline mean) / baseline mean`, when a baseline is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_delta: Option<f64>,
    /// One-sided test of "this report > baseline" on paired scores, or the
    /// reason it could not be computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wilcoxon: Option<Result<WilcoxonResult, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub mode: StopwordMode,
    /// Per-instance BLEU-4, keyed by id.
    pub per_instance: BTreeMap<String, f64>,
    pub subsets: Vec<SubsetScore>,
}

pub const FULL_TEST: &str = "test";

impl BleuReport {
    pub fn subset(&self, name: &str) -> Option<&SubsetScore> {
        self.subsets.iter().find(|s| s.name == name)
    }
}

/// Subset name for a label and source, e.g. `valid_our`; `None` source
/// gives the combined subset, e.g. `valid_combined`.
pub fn subset_name(label: Label, source: Option<&str>) -> String {
    format!("{}_{}", label.as_str(), source.unwrap_or("combined"))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Scores every generation against its reference and aggregates the
/// full test set plus each labelled subset (per source and combined).
pub fn bleu_report(
    generations: &[IdText],
    references: &[IdText],
    subset_labels: &[SubsetLabel],
    baseline: Option<&BleuReport>,
    mode: StopwordMode,
    stopwords: &Stopwords,
) -> Result<BleuReport, BleuError> {
    let mut refs: HashMap<&str, &str> = HashMap::with_capacity(references.len());
    for r in references {
        if refs.insert(&r.id, &r.text).is_some() {
            return Err(BleuError::DuplicateId(r.id.clone()));
        }
    }
    if generations.len() != refs.len() {
        return Err(BleuError::IdMismatch(format!(
            "{} generations vs {} references",
            generations.len(),
            refs.len()
        )));
    }

    let mut per_instance = BTreeMap::new();
    for g in generations {
        let reference = refs
            .get(g.id.as_str())
            .ok_or_else(|| BleuError::IdMismatch(format!("no reference for `{}`", g.id)))?;
        let score = bleu4(&tokenize(&g.text, mode, stopwords), &tokenize(reference, mode, stopwords));
        if per_instance.insert(g.id.clone(), score).is_some() {
            return Err(BleuError::DuplicateId(g.id.clone()));
        }
    }

    let mut members: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for l in subset_labels {
        if !per_instance.contains_key(&l.id) {
            return Err(BleuError::IdMismatch(format!("labelled id `{}` has no generation", l.id)));
        }
        members
            .entry(subset_name(l.label, Some(&l.source)))
            .or_default()
            .insert(&l.id);
        members
            .entry(subset_name(l.label, None))
            .or_default()
            .insert(&l.id);
    }

    let mut groups: Vec<(String, Vec<&str>)> = vec![(
        FULL_TEST.to_string(),
        generations.iter().map(|g| g.id.as_str()).collect(),
    )];
    groups.extend(members.into_iter().map(|(k, v)| (k, v.into_iter().collect())));

    let mut subsets = Vec::with_capacity(groups.len());
    for (name, ids) in groups {
        let scores: Vec<f64> = ids.iter().map(|id| per_instance[*id]).collect();
        let m = mean(&scores);
        let mut subset = SubsetScore {
            name,
            n: scores.len(),
            mean: m,
            relative_delta: None,
            wilcoxon: None,
        };
        if let Some(base) = baseline {
            let paired: Option<Vec<f64>> = ids.iter().map(|id| base.per_instance.get(*id).copied()).collect();
            let base_scores =
                paired.ok_or_else(|| BleuError::IdMismatch(format!("baseline lacks ids of subset `{}`", subset.name)))?;
            let base_mean = mean(&base_scores);
            subset.relative_delta = (base_mean > MIN_BASELINE_MEAN).then(|| (m - base_mean) / base_mean);
            subset.wilcoxon = Some(wilcoxon_one_sided(&scores, &base_scores).map_err(|e| e.to_string()));
        }
        subsets.push(subset);
    }

    Ok(BleuReport {
        mode,
        per_instance,
        subsets,
    })
}

/// Formats a relative change as `5.4%↑` / `7.2%↓`.
/// Baseline means at or below this come only from the unigram floor; the
/// relative change is left undefined for them.
pub const MIN_BASELINE_MEAN: f64 = 1e-9;

pub fn format_delta(delta: f64) -> String {
    let arrow = if delta >= 0.0 { '↑' } else { '↓' };
    format!("{:.1}%{}", (delta * 100.0).abs(), arrow)
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>6} {:>8} {:>10} {:>10}", "subset", "n", "BLEU-4", "delta", "p(>base)")?;
        for s in &self.subsets {
            let delta = s.relative_delta.map(format_delta).unwrap_or_else(|| "-".into());
            let p = match &s.wilcoxon {
                Some(Ok(w)) => format!("{:.4}", w.p_value),
                Some(Err(_)) => "n/a".into(),
                None => "-".into(),
            };
            writeln!(f, "{:<18} {:>6} {:>8.2} {:>10} {:>10}", s.name, s.n, s.mean, delta, p)?;
        }
        Ok(())
    }
}
