use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::TagGraph;
use crate::numerics::CsrMatrix;

/// Neighborhood aggregation scheme used by the message-passing model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `D̃^{-1/2}(A+I)D̃^{-1/2}`
    #[default]
    Gcn,
    /// `D̃^{-1}(A+I)`, a SAGE-style neighborhood mean.
    Mean,
}

/// Row-sorted CSR matrix over the nodes with self-loops included.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Arc<CsrMatrix>,
}

impl NormalizedAdjacency {
    pub fn build(g: &TagGraph, agg: Aggregation) -> Self {
        match agg {
            Aggregation::Gcn => normalized_adjacency(g),
            Aggregation::Mean => mean_adjacency(g),
        }
    }

    /// `Â = I`: every node sees only itself.
    pub fn identity(n: usize) -> Self {
        NormalizedAdjacency {
            matrix: Arc::new(CsrMatrix::identity(n)),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn shared(&self) -> Arc<CsrMatrix> {
        Arc::clone(&self.matrix)
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.n_rows()
    }
}

fn with_self_loops(g: &TagGraph, weight: impl Fn(usize, usize) -> f64) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for u in 0..n {
        let nb = g.neighbors(u);
        let split = nb.partition_point(|&v| v < u);
        for &v in &nb[..split] {
            indices.push(v);
            values.push(weight(u, v));
        }
        indices.push(u);
        values.push(weight(u, u));
        for &v in &nb[split..] {
            indices.push(v);
            values.push(weight(u, v));
        }
        indptr.push(indices.len());
    }
    let matrix = CsrMatrix::new(n, n, indptr, indices, values).expect("well-formed by construction");
    NormalizedAdjacency {
        matrix: Arc::new(matrix),
    }
}

/// GCN normalization `D̃^{-1/2}(A+I)D̃^{-1/2}`.
pub fn normalized_adjacency(g: &TagGraph) -> NormalizedAdjacency {
    let inv_sqrt: Vec<f64> = (0..g.num_nodes())
        .map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt())
        .collect();
    with_self_loops(g, |u, v| {
        if u == v {
            1.0 / (g.degree(u) + 1) as f64
        } else {
            inv_sqrt[u] * inv_sqrt[v]
        }
    })
}

fn mean_adjacency(g: &TagGraph) -> NormalizedAdjacency {
    with_self_loops(g, |u, _| 1.0 / (g.degree(u) + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taggraph::{Split, Vocabulary};
    use approx::assert_abs_diff_eq;

    fn graph(n: usize, edges: &[(usize, usize)]) -> TagGraph {
        TagGraph::new(
            1,
            Vocabulary::default(),
            vec![vec![0]; n],
            vec![Some(0); n],
            vec![Split::Train; n],
            edges,
        )
        .unwrap()
    }

    #[test]
    fn isolated_node() {
        let a = normalized_adjacency(&graph(1, &[]));
        assert_eq!(a.matrix().get(0, 0), 1.0);
        assert_eq!(a.matrix().nnz(), 1);
    }

    #[test]
    fn single_edge_all_half() {
        let a = normalized_adjacency(&graph(2, &[(0, 1)]));
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(a.matrix().get(r, c), 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn path_of_three() {
        let a = normalized_adjacency(&graph(3, &[(0, 1), (1, 2)]));
        assert_abs_diff_eq!(a.matrix().get(0, 1), 0.40824829, epsilon = 1e-8);
        assert_abs_diff_eq!(a.matrix().get(1, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert!(a.matrix().asymmetry() < 1e-12);
        let cols: Vec<usize> = a.matrix().row(1).map(|(c, _)| c).collect();
        assert_eq!(cols, vec![0, 1, 2]);
    }

    #[test]
    fn mean_rows_sum_to_one() {
        let a = NormalizedAdjacency::build(&graph(3, &[(0, 1), (1, 2)]), Aggregation::Mean);
        for r in 0..3 {
            let s: f64 = a.matrix().row(r).map(|(_, w)| w).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }
}
