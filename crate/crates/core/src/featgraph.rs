//! Attribute-view kNN graph construction and symmetric normalization of
//! propagation matrices.

use thiserror::Error;

use crate::graphio::Graph;
use crate::numcore::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatGraphError {
    #[error("k = {k} outside [1, {max}] for {n} nodes")]
    BadK { k: usize, n: usize, max: usize },
    #[error("adjacency has negative entry {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("adjacency must be square, got {0}x{1}")]
    NotSquare(usize, usize),
}

/// Normalized propagation matrices for both views of one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMatrices {
    pub topo_norm: Matrix,
    pub feat_norm: Matrix,
    pub k: usize,
}

impl ViewMatrices {
    pub fn build(graph: &Graph, k: usize) -> Result<Self, FeatGraphError> {
        let knn = feature_graph(graph.features(), k)?;
        Ok(ViewMatrices {
            topo_norm: sym_normalize(graph.adjacency(), true)?,
            feat_norm: sym_normalize(&knn, true)?,
            k,
        })
    }
}

/// Cosine similarity between every pair of rows. Zero-norm rows score 0
/// against everything, themselves included.
pub fn cosine_similarity_matrix(x: &Matrix) -> Matrix {
    let n = x.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut sm = Matrix::zeros(n, n);
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        sm.set(i, i, 1.0);
        for j in (i + 1)..n {
            if norms[j] == 0.0 {
                continue;
            }
            let dot: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
            let s = dot / (norms[i] * norms[j]);
            sm.set(i, j, s);
            sm.set(j, i, s);
        }
    }
    sm
}

/// For each node, the `k` most similar other nodes in descending similarity;
/// equal similarities go to the lower index.
pub fn knn_select(sm: &Matrix, k: usize) -> Result<Vec<Vec<usize>>, FeatGraphError> {
    let n = sm.rows();
    if sm.cols() != n {
        return Err(FeatGraphError::NotSquare(n, sm.cols()));
    }
    if k == 0 || k + 1 > n {
        return Err(FeatGraphError::BadK {
            k,
            n,
            max: n.saturating_sub(1),
        });
    }
    Ok((0..n)
        .map(|i| {
            let row = sm.row(i);
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect())
}

/// 0/1 kNN adjacency, symmetrized by union, zero diagonal.
pub fn knn_graph(sm: &Matrix, k: usize) -> Result<Matrix, FeatGraphError> {
    let n = sm.rows();
    let mut a = Matrix::zeros(n, n);
    for (i, nbrs) in knn_select(sm, k)?.into_iter().enumerate() {
        for j in nbrs {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
    }
    Ok(a)
}

/// kNN feature-graph adjacency straight from node features.
pub fn feature_graph(x: &Matrix, k: usize) -> Result<Matrix, FeatGraphError> {
    knn_graph(&cosine_similarity_matrix(x), k)
}

/// `D^{-1/2} Ã D^{-1/2}` where `Ã = A + I` when `add_self_loops` is set.
/// Without self-loops, zero-degree rows stay zero.
pub fn sym_normalize(a: &Matrix, add_self_loops: bool) -> Result<Matrix, FeatGraphError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(FeatGraphError::NotSquare(n, a.cols()));
    }
    for i in 0..n {
        for j in 0..n {
            let value = a.get(i, j);
            if value < 0.0 {
                return Err(FeatGraphError::NegativeWeight { row: i, col: j, value });
            }
        }
    }
    let mut tilde = a.clone();
    if add_self_loops {
        for i in 0..n {
            tilde.set(i, i, tilde.get(i, i) + 1.0);
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = tilde.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * tilde.get(i, j) * inv_sqrt[j]))
}
