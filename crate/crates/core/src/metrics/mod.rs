//! Classification metrics, annotation agreement and paired significance.

mod classification;
mod kappa;
mod wilcoxon;

pub use classification::{
    class_metrics, confusion, percent1, weighted_metrics, ClassMetrics, ClassificationReport, ConfusionMatrix,
};
pub use kappa::cohens_kappa;
pub use wilcoxon::{
    exact_p_greater, normal_p_greater, wilcoxon_one_sided, wilcoxon_one_sided_with, SignedRanks, WilcoxonMethod,
    WilcoxonResult, EXACT_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two items, got {0}")]
    TooFewItems(usize),
    #[error("chance agreement is total but observed agreement is not")]
    DegenerateMarginals,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("non-finite value in paired scores")]
    NonFinite,
}
