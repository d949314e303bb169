//! Multilingual compression metrics and their aggregation over language pairs.

mod cka;
mod fairness;
mod isoscore;
mod rank;
mod report;
mod rsa;
mod similarity;

pub use cka::linear_cka;
pub use fairness::{linguistic_fairness_gap, FairnessGap};
pub use isoscore::isoscore;
pub use rank::{average_ranks, pearson, spearman_rho, Correlation};
pub use report::{pairwise_report, AggregationRule, MetricKind, MetricReport};
pub use rsa::{rdm_upper, rsa_score};
pub use similarity::{cosine_similarity_matrix, retrieval_precision, SimilarityMatrix};

use crate::error::{Error, Result};

const RANGE_SLACK: f64 = 1e-12;

/// Clamps `v` into `[lo, hi]` when it overshoots by at most `1e-12`.
pub(crate) fn clamp_to_range(v: f64, lo: f64, hi: f64, what: &str) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::Consistency(format!("{what} is not finite ({v})")));
    }
    if v < lo - RANGE_SLACK || v > hi + RANGE_SLACK {
        return Err(Error::Consistency(format!("{what} = {v} outside [{lo}, {hi}]")));
    }
    Ok(v.clamp(lo, hi))
}
