//! Degree-normalized adjacency `D^{-1/2} A D^{-1/2}` in CSR form.

use ndarray::{Array2, ArrayView2};

use crate::graph::SimilarityGraph;

/// Sparse symmetric matrix driving GCN propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    /// Entry `(i, j)` is `w_ij / sqrt(d_i d_j)` with `w_ij = 1` or `S(i, j)`.
    /// With `self_loops`, `A + I` is normalized and degrees count the loop.
    pub fn from_graph(g: &SimilarityGraph, self_loops: bool, weighted: bool) -> Self {
        let n = g.n();
        let extra = usize::from(self_loops);
        let deg: Vec<f64> = (0..n).map(|i| (g.degree(i) + extra) as f64).collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            let mut push_loop = self_loops;
            for &(j, s) in g.neighbors(i) {
                if push_loop && j > i {
                    indices.push(i);
                    values.push(1.0 / deg[i]);
                    push_loop = false;
                }
                let w = if weighted { s } else { 1.0 };
                indices.push(j);
                values.push(w / (deg[i] * deg[j]).sqrt());
            }
            if push_loop {
                indices.push(i);
                values.push(1.0 / deg[i]);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    /// An all-zero operator (no propagation).
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Sparse-dense product `Â · m`.
    pub fn matmul(&self, m: &ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(m.nrows(), self.n, "row count mismatch in Â·M");
        let mut out = Array2::zeros((self.n, m.ncols()));
        for i in 0..self.n {
            let mut dst = out.row_mut(i);
            for (j, v) in self.row(i) {
                dst.scaled_add(v, &m.row(j));
            }
        }
        out
    }
}
