//! Semantic cleaning of code-review comment datasets.
//!
//! The crate is organised around the pipeline stages:
//!
//! * [`corpus`]: line-delimited review records, unified-diff patches and
//!   dataset statistics.
//! * [`prompting`]: classification prompt rendering and response parsing.
//! * [`cleaning`]: retaining predicted-valid instances and drawing
//!   size-matched controlled samples.
//! * [`metrics`]: confusion matrices, per-class and weighted P/R/F1,
//!   Cohen's kappa and the one-sided Wilcoxon signed-rank test.
//! * [`bleu`]: sentence-level smoothed BLEU-4 and subset reports.
//! * [`topics`]: agglomerative clustering, c-TF-IDF, NPMI coherence and
//!   quality-score propagation.
//!
//! Network access lives in the `revclean-gateway` crate; this crate is pure.

pub mod bleu;
pub mod cleaning;
pub mod corpus;
pub mod fixtures;
pub mod hashing;
pub mod label;
pub mod metrics;
pub mod prediction;
pub mod prompting;
pub mod topics;

pub use corpus::{Dataset, ReviewInstance, Split};
pub use label::Label;
pub use prediction::Prediction;
