//! Topic clustering of generated comments and quality-score propagation.
//!
//! Comments are grouped by average-linkage agglomerative clustering over
//! cosine distance. Each cluster gets c-TF-IDF term weights, three
//! representative comments and an NPMI coherence score. Human ratings of
//! the representatives are then spread over every member of the cluster.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bleu::{tokenize, StopwordMode, Stopwords};

pub const DEFAULT_K: usize = 50;
pub const REPRESENTATIVES: usize = 3;
pub const TOP_TERMS: usize = 10;
pub const NPMI_EPSILON: f64 = 1e-12;
pub const INFORMATION_RANGE: (u8, u8) = (1, 5);
pub const RELEVANCE_RANGE: (u8, u8) = (1, 3);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopicError {
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { n: usize, k: usize },
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("embedding {0} is zero or not finite")]
    DegenerateVector(usize),
    #[error("{ids} ids but {embeddings} embeddings")]
    LengthMismatch { ids: usize, embeddings: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("cluster {0} has representatives without complete annotations")]
    MissingAnnotation(usize),
    #[error("{field} score {value} for `{id}` outside {min}..={max}")]
    ScoreOutOfRange {
        id: String,
        field: &'static str,
        value: u8,
        min: u8,
        max: u8,
    },
}

/// Result of agglomerative clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster of each input point. Clusters are numbered by their smallest
    /// member index.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Linkage distance of each merge, in merge order.
    pub merge_distances: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_similarity(a, b)
}

fn check_embeddings(embeddings: &[Vec<f64>]) -> Result<(), TopicError> {
    let dim = embeddings.first().map_or(0, Vec::len);
    for (i, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(TopicError::DimensionMismatch { index: i, expected: dim, found: e.len() });
        }
        let n = norm(e);
        if n == 0.0 || !n.is_finite() {
            return Err(TopicError::DegenerateVector(i));
        }
    }
    Ok(())
}

/// Upper-triangular distance storage for `i < j`.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn build(embeddings: &[Vec<f64>]) -> Self {
        let n = embeddings.len();
        let normed: Vec<Vec<f64>> = embeddings
            .iter()
            .map(|e| {
                let l = norm(e);
                e.iter().map(|x| x / l).collect()
            })
            .collect();
        let d = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let normed = &normed;
                (i + 1..n).map(move |j| 1.0 - dot(&normed[i], &normed[j]))
            })
            .collect();
        Condensed { n, d }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.d[self.idx(i, j)]
        } else {
            self.d[self.idx(j, i)]
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = if i < j { self.idx(i, j) } else { self.idx(j, i) };
        self.d[k] = v;
    }
}

/// Average-linkage agglomerative clustering on cosine distance, merging
/// from singletons until `k` clusters remain. Ties go to the lowest pair
/// of cluster indices.
pub fn cluster(embeddings: &[Vec<f64>], k: usize) -> Result<Clustering, TopicError> {
    let n = embeddings.len();
    if k == 0 || n < k {
        return Err(TopicError::TooFewPoints { n, k });
    }
    check_embeddings(embeddings)?;

    let mut dist = Condensed::build(embeddings);
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];

    let refresh = |i: usize, dist: &Condensed, active: &[bool], nn: &mut [usize], nn_dist: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_dist[i] = f64::INFINITY;
        for j in i + 1..n {
            if active[j] {
                let d = dist.get(i, j);
                if d < nn_dist[i] {
                    nn_dist[i] = d;
                    nn[i] = j;
                }
            }
        }
    };
    for i in 0..n {
        refresh(i, &dist, &active, &mut nn, &mut nn_dist);
    }

    let mut merge_distances = Vec::with_capacity(n - k);
    for _ in 0..n - k {
        let mut a = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && nn_dist[i] < best {
                best = nn_dist[i];
                a = i;
            }
        }
        let b = nn[a];
        merge_distances.push(best);

        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for i in 0..n {
            if active[i] && i != a && i != b {
                let v = (sa * dist.get(i, a) + sb * dist.get(i, b)) / (sa + sb);
                dist.set(i, a, v);
            }
        }
        active[b] = false;
        size[a] += size[b];
        parent[b] = a;

        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i == a || nn[i] == a || nn[i] == b {
                refresh(i, &dist, &active, &mut nn, &mut nn_dist);
            } else if i < a {
                let d = dist.get(i, a);
                if d < nn_dist[i] || (d == nn_dist[i] && a < nn[i]) {
                    nn_dist[i] = d;
                    nn[i] = a;
                }
            }
        }
    }

    // A surviving slot always holds its own point as smallest member, so
    // numbering slots in order numbers clusters by smallest member.
    let find = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let label: HashMap<usize, usize> = (0..n).filter(|&i| active[i]).enumerate().map(|(c, s)| (s, c)).collect();
    let assignment: Vec<usize> = (0..n).map(|i| label[&find(i)]).collect();

    let dim = embeddings[0].len();
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (e, &c) in embeddings.iter().zip(&assignment) {
        let l = norm(e);
        for (acc, x) in centroids[c].iter_mut().zip(e) {
            *acc += x / l;
        }
        counts[c] += 1;
    }
    for (c, cnt) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|x| *x /= *cnt as f64);
        let l = norm(c);
        if l > 0.0 {
            c.iter_mut().for_each(|x| *x /= l);
        }
    }

    Ok(Clustering {
        assignment,
        centroids,
        merge_distances,
    })
}

/// Class-based TF-IDF: `tf(t,c) · ln(1 + A / f(t))` where `A` is the mean
/// token count per cluster and `f(t)` the total count of `t`.
pub fn ctfidf(assignment: &[usize], k: usize, docs: &[Vec<String>]) -> Vec<BTreeMap<String, f64>> {
    let mut tf: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); k];
    let mut total: HashMap<&str, usize> = HashMap::new();
    let mut tokens = 0usize;
    for (doc, &c) in docs.iter().zip(assignment) {
        for t in doc {
            *tf[c].entry(t).or_default() += 1;
            *total.entry(t).or_default() += 1;
            tokens += 1;
        }
    }
    let avg = tokens as f64 / k as f64;
    tf.into_iter()
        .map(|counts| {
            counts
                .into_iter()
                .map(|(t, n)| (t.to_string(), n as f64 * (1.0 + avg / total[t] as f64).ln()))
                .collect()
        })
        .collect()
}

/// Up to `n` positive-weight terms, highest first, ties alphabetical.
pub fn top_terms(weights: &BTreeMap<String, f64>, n: usize) -> Vec<String> {
    let mut terms: Vec<(&String, f64)> = weights.iter().filter(|(_, w)| **w > 0.0).map(|(t, w)| (t, *w)).collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    terms.into_iter().take(n).map(|(t, _)| t.clone()).collect()
}

/// Members most similar to the centroid, best first, ties by id.
pub fn representatives(
    members: &[usize],
    ids: &[String],
    embeddings: &[Vec<f64>],
    centroid: &[f64],
    count: usize,
) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = members
        .iter()
        .map(|&m| (m, cosine_similarity(&embeddings[m], centroid)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
    scored.into_iter().take(count).map(|(m, _)| m).collect()
}

/// Document-level term sets used for co-occurrence counts.
pub struct CooccurrenceIndex {
    docs: usize,
    postings: HashMap<String, BTreeSet<usize>>,
}

impl CooccurrenceIndex {
    pub fn new(docs: &[Vec<String>]) -> Self {
        let mut postings: HashMap<String, BTreeSet<usize>> = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            for t in d {
                postings.entry(t.clone()).or_default().insert(i);
            }
        }
        CooccurrenceIndex {
            docs: docs.len(),
            postings,
        }
    }

    fn df(&self, t: &str) -> usize {
        self.postings.get(t).map_or(0, BTreeSet::len)
    }

    fn co(&self, x: &str, y: &str) -> usize {
        match (self.postings.get(x), self.postings.get(y)) {
            (Some(a), Some(b)) => a.intersection(b).count(),
            _ => 0,
        }
    }

    /// Normalized PMI of two terms. Pairs that never co-occur score −1 and
    /// pairs present in every document score 1.
    pub fn npmi(&self, x: &str, y: &str) -> f64 {
        let co = self.co(x, y);
        if co == 0 || self.docs == 0 {
            return -1.0;
        }
        let n = self.docs as f64;
        let pxy = co as f64 / n;
        if co == self.docs {
            return 1.0;
        }
        let px = self.df(x) as f64 / n;
        let py = self.df(y) as f64 / n;
        let pmi = ((pxy + NPMI_EPSILON) / (px * py)).ln();
        (pmi / -(pxy + NPMI_EPSILON).ln()).clamp(-1.0, 1.0)
    }

    /// Mean NPMI over all pairs of `terms`, or `None` with fewer than two.
    pub fn coherence(&self, terms: &[String]) -> Option<f64> {
        if terms.len() < 2 {
            return None;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..terms.len() {
            for j in i + 1..terms.len() {
                sum += self.npmi(&terms[i], &terms[j]);
                pairs += 1;
            }
        }
        Some(sum / pairs as f64)
    }
}

/// Tokens used for topic terms: stop words removed, punctuation dropped.
pub fn topic_tokens(text: &str, stopwords: &Stopwords) -> Vec<String> {
    tokenize(text, StopwordMode::DropStopwords, stopwords)
        .tokens
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub cluster: usize,
    pub size: usize,
    pub top_terms: Vec<String>,
    pub term_weights: BTreeMap<String, f64>,
    pub representatives: Vec<String>,
    /// `None` when the cluster has fewer than two weighted terms.
    pub coherence: Option<f64>,
    pub centroid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub topics: Vec<Topic>,
    pub mean_coherence: Option<f64>,
    pub merge_distances: Vec<f64>,
}

impl TopicModel {
    pub fn sizes(&self) -> Vec<usize> {
        self.topics.iter().map(|t| t.size).collect()
    }
}

/// Clusters comments and derives terms, representatives and coherence.
pub fn build_topic_model(
    ids: &[String],
    texts: &[String],
    embeddings: &[Vec<f64>],
    k: usize,
    stopwords: &Stopwords,
) -> Result<TopicModel, TopicError> {
    if ids.len() != embeddings.len() || texts.len() != embeddings.len() {
        return Err(TopicError::LengthMismatch {
            ids: ids.len().max(texts.len()),
            embeddings: embeddings.len(),
        });
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(TopicError::DuplicateId(id.clone()));
        }
    }

    let clustering = cluster(embeddings, k)?;
    let docs: Vec<Vec<String>> = texts.iter().map(|t| topic_tokens(t, stopwords)).collect();
    let weights = ctfidf(&clustering.assignment, k, &docs);
    let index = CooccurrenceIndex::new(&docs);

    let members = clustering.members();
    let topics: Vec<Topic> = weights
        .into_iter()
        .enumerate()
        .map(|(c, term_weights)| {
            let top = top_terms(&term_weights, TOP_TERMS);
            let reps = representatives(&members[c], ids, embeddings, &clustering.centroids[c], REPRESENTATIVES);
            Topic {
                cluster: c,
                size: members[c].len(),
                coherence: index.coherence(&top),
                top_terms: top,
                term_weights,
                representatives: reps.into_iter().map(|m| ids[m].clone()).collect(),
                centroid: clustering.centroids[c].clone(),
            }
        })
        .collect();

    let scored: Vec<f64> = topics.iter().filter_map(|t| t.coherence).collect();
    let mean_coherence = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);

    Ok(TopicModel {
        k,
        assignment: ids.iter().cloned().zip(clustering.assignment).collect(),
        topics,
        mean_coherence,
        merge_distances: clustering.merge_distances,
    })
}

/// One line of the annotation exchange file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub cluster: usize,
    pub representative_id: String,
    pub comment: String,
    #[serde(default)]
    pub information: Option<u8>,
    #[serde(default)]
    pub relevance: Option<u8>,
}

/// Blank annotation records for every representative.
pub fn annotation_template(model: &TopicModel, texts: &HashMap<String, String>) -> Vec<AnnotationRecord> {
    model
        .topics
        .iter()
        .flat_map(|t| {
            t.representatives.iter().map(move |r| AnnotationRecord {
                cluster: t.cluster,
                representative_id: r.clone(),
                comment: texts.get(r).cloned().unwrap_or_default(),
                information: None,
                relevance: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub cluster: usize,
    pub size: usize,
    pub information: f64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub clusters: Vec<ClusterQuality>,
    pub n: usize,
    pub information: f64,
    pub relevance: f64,
}

fn check_range(id: &str, field: &'static str, value: u8, (min, max): (u8, u8)) -> Result<(), TopicError> {
    if (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(TopicError::ScoreOutOfRange {
            id: id.to_string(),
            field,
            value,
            min,
            max,
        })
    }
}

/// Cluster scores are the mean over annotated representatives; overall
/// scores weight each cluster by its size.
pub fn propagate(
    clusters: &[(usize, usize, Vec<String>)],
    annotations: &[AnnotationRecord],
) -> Result<QualityScores, TopicError> {
    let mut by_id: HashMap<&str, (u8, u8)> = HashMap::new();
    for a in annotations {
        if let (Some(i), Some(r)) = (a.information, a.relevance) {
            check_range(&a.representative_id, "information", i, INFORMATION_RANGE)?;
            check_range(&a.representative_id, "relevance", r, RELEVANCE_RANGE)?;
            by_id.insert(&a.representative_id, (i, r));
        }
    }

    let mut out = Vec::with_capacity(clusters.len());
    let (mut info_sum, mut rel_sum, mut n) = (0.0, 0.0, 0usize);
    for (cluster, size, reps) in clusters {
        if reps.is_empty() {
            return Err(TopicError::MissingAnnotation(*cluster));
        }
        let mut info = 0.0;
        let mut rel = 0.0;
        for r in reps {
            let (i, v) = by_id.get(r.as_str()).ok_or(TopicError::MissingAnnotation(*cluster))?;
            info += f64::from(*i);
            rel += f64::from(*v);
        }
        let q = ClusterQuality {
            cluster: *cluster,
            size: *size,
            information: info / reps.len() as f64,
            relevance: rel / reps.len() as f64,
        };
        info_sum += q.information * *size as f64;
        rel_sum += q.relevance * *size as f64;
        n += size;
        out.push(q);
    }
    let n_f = n.max(1) as f64;
    Ok(QualityScores {
        clusters: out,
        n,
        information: info_sum / n_f,
        relevance: rel_sum / n_f,
    })
}

pub fn propagate_scores(model: &TopicModel, annotations: &[AnnotationRecord]) -> Result<QualityScores, TopicError> {
    let clusters: Vec<(usize, usize, Vec<String>)> = model
        .topics
        .iter()
        .map(|t| (t.cluster, t.size, t.representatives.clone()))
        .collect();
    propagate(&clusters, annotations)
}

impl fmt::Display for QualityScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>7} {:>6} {:>11} {:>9}", "cluster", "size", "information", "relevance")?;
        for c in &self.clusters {
            writeln!(f, "{:>7} {:>6} {:>11.2} {:>9.2}", c.cluster, c.size, c.information, c.relevance)?;
        }
        writeln!(f, "{:>7} {:>6} {:>11.2} {:>9.2}", "overall", self.n, self.information, self.relevance)
    }
}
