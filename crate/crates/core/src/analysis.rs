//! Theory-side quantities: the pairwise topology/attribute discrepancy bound,
//! average projected feature values and the empirical margin loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featgraph::{self, FeatGraphError};
use crate::graphio::Graph;
use crate::numcore::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("feature dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("normalization divisor must be >= 1")]
    BadNormalization,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{scores} score rows for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("gamma must be >= 0, got {0}")]
    BadGamma(f64),
    #[error(transparent)]
    FeatGraph(#[from] FeatGraphError),
}

/// Both halves of the bound, each already divided by `normalization`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub topo_term: f64,
    pub attr_term: f64,
    pub total: f64,
    pub normalization: usize,
}

/// `Σ_i Σ_j ||a_i − b_j||²` over all row pairs, via the centred expansion
/// `n_b Σ||a_i − ā||² + n_a Σ||b_j − b̄||² + n_a n_b ||ā − b̄||²`.
/// Every term is a non-negative sum, so no cancellation occurs. Memory is O(d).
pub fn pairwise_sq_dist_sum(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.cols(), b.cols());
    let (na, nb) = (a.rows(), b.rows());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let mean = |m: &Matrix| -> Vec<f64> {
        let mut mu = vec![0.0; m.cols()];
        for i in 0..m.rows() {
            for (acc, v) in mu.iter_mut().zip(m.row(i)) {
                *acc += v;
            }
        }
        let n = m.rows() as f64;
        mu.iter_mut().for_each(|v| *v /= n);
        mu
    };
    let scatter = |m: &Matrix, mu: &[f64]| -> f64 {
        (0..m.rows())
            .map(|i| m.row(i).iter().zip(mu).map(|(v, c)| (v - c).powi(2)).sum::<f64>())
            .sum()
    };
    let (ma, mb) = (mean(a), mean(b));
    let gap: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).powi(2)).sum();
    nb as f64 * scatter(a, &ma) + na as f64 * scatter(b, &mb) + (na * nb) as f64 * gap
}

/// Topology term over raw `A·X` rows and attribute term over raw `X` rows,
/// each summed over every source–target node pair and divided by `normalize_by`.
pub fn proposition1_bound(gs: &Graph, gt: &Graph, normalize_by: usize) -> Result<BoundReport, AnalysisError> {
    if gs.feature_dim() != gt.feature_dim() {
        return Err(AnalysisError::DimMismatch(gs.feature_dim(), gt.feature_dim()));
    }
    if normalize_by == 0 {
        return Err(AnalysisError::BadNormalization);
    }
    let ax_s = gs.adjacency().matmul(gs.features()).expect("graph invariant: n x n times n x d");
    let ax_t = gt.adjacency().matmul(gt.features()).expect("graph invariant: n x n times n x d");
    let z = normalize_by as f64;
    let topo_term = pairwise_sq_dist_sum(&ax_s, &ax_t) / z;
    let attr_term = pairwise_sq_dist_sum(gs.features(), gt.features()) / z;
    Ok(BoundReport {
        topo_term,
        attr_term,
        total: topo_term + attr_term,
        normalization: normalize_by,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureView {
    Topology,
    Attribute,
}

/// `Σ|A·X| / (d·N)` for an arbitrary propagation matrix `A`.
pub fn avg_abs_propagated(adjacency: &Matrix, x: &Matrix) -> f64 {
    let f = adjacency.matmul(x).expect("propagation shape");
    if f.is_empty() {
        return 0.0;
    }
    f.as_slice().iter().map(|v| v.abs()).sum::<f64>() / f.len() as f64
}

/// Mean absolute entry of `A·X` (topology) or `Â·X` with `Â` the raw 0/1 kNN
/// feature-graph adjacency (attribute).
pub fn avg_feature_value(g: &Graph, view: FeatureView, k: usize) -> Result<f64, AnalysisError> {
    Ok(match view {
        FeatureView::Topology => avg_abs_propagated(g.adjacency(), g.features()),
        FeatureView::Attribute => {
            let knn = featgraph::feature_graph(g.features(), k)?;
            avg_abs_propagated(&knn, g.features())
        }
    })
}

/// Fraction of rows whose true-class score does not exceed the best other
/// class score by more than `gamma`.
pub fn empirical_margin_loss(scores: &Matrix, labels: &[usize], gamma: f64) -> Result<f64, AnalysisError> {
    if !(gamma >= 0.0) {
        return Err(AnalysisError::BadGamma(gamma));
    }
    if scores.rows() != labels.len() {
        return Err(AnalysisError::LengthMismatch {
            scores: scores.rows(),
            labels: labels.len(),
        });
    }
    let c = scores.cols();
    let mut fails = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(AnalysisError::LabelOutOfRange { label: y, classes: c });
        }
        let row = scores.row(i);
        let best_other = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if row[y] <= gamma + best_other {
            fails += 1;
        }
    }
    Ok(if labels.is_empty() { 0.0 } else { fails as f64 / labels.len() as f64 })
}

/// Fractional ranks (1-based); ties share their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of fractional ranks).
/// Returns NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman: length mismatch");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
