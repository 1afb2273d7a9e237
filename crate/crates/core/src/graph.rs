//! Exact KNN search and the sparse symmetric similarity graph built from it.
//!
//! Similarities are cosine similarities of unit rows, stored rounded to six
//! decimals so that the CSV form (`src,dst,similarity`) reloads to exactly the
//! in-memory graph.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};

/// How directed KNN lists become undirected edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrize {
    /// Edge if either endpoint lists the other.
    #[default]
    Union,
    /// Edge only if both endpoints list each other.
    Mutual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub k: usize,
    pub prune_threshold: f64,
    pub symmetrize: Symmetrize,
}

impl GraphOptions {
    pub fn new(k: usize, prune_threshold: f64) -> Self {
        Self {
            k,
            prune_threshold,
            symmetrize: Symmetrize::Union,
        }
    }
}

/// Rounds a similarity onto the six-decimal grid used by the CSV format.
pub fn quantize_similarity(s: f64) -> f64 {
    (s * 1e6).round() / 1e6
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

const QUERY_BLOCK: usize = 64;

/// Exact K nearest neighbors by Euclidean distance, self excluded. Each list
/// is sorted by ascending distance, ties broken by ascending id.
pub fn knn_search(e: &EmbeddingSet, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = e.n();
    if k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut out = Vec::with_capacity(n);
    let mut dist = vec![(0.0f64, 0usize); n - 1];
    for block in (0..n).step_by(QUERY_BLOCK) {
        for i in block..(block + QUERY_BLOCK).min(n) {
            let q = e.row(i);
            let mut slot = 0;
            for (j, row) in e.rows().enumerate() {
                if j != i {
                    dist[slot] = (squared_distance(q, row), j);
                    slot += 1;
                }
            }
            let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k == 0 {
                out.push(Vec::new());
                continue;
            }
            dist.select_nth_unstable_by(k - 1, order);
            let nearest = &mut dist[..k];
            nearest.sort_unstable_by(order);
            out.push(nearest.iter().map(|&(_, j)| j).collect());
        }
    }
    Ok(out)
}

/// Undirected weighted graph kept as sorted per-node neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SimilarityGraph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from undirected edges. Either orientation is accepted;
    /// a repeated edge must carry the same similarity.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, s) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
            }
            if !s.is_finite() || !(-1.0..=1.0).contains(&s) {
                return Err(Error::InvalidParameter(format!(
                    "similarity {s} on edge ({i}, {j}) outside [-1, 1]"
                )));
            }
            adjacency[i].push((j, s));
            adjacency[j].push((i, s));
        }
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_by_key(|&(j, _)| j);
            let mut deduped: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(j, s) in list.iter() {
                match deduped.last() {
                    Some(&(pj, ps)) if pj == j => {
                        if ps != s {
                            return Err(Error::InvalidParameter(format!(
                                "edge ({i}, {j}) listed with similarities {ps} and {s}"
                            )));
                        }
                    }
                    _ => deduped.push((j, s)),
                }
            }
            *list = deduped;
        }
        Ok(Self { adjacency })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Neighbors of `i` sorted by id, with similarities.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn similarity(&self, i: usize, j: usize) -> Option<f64> {
        let list = self.adjacency.get(i)?;
        list.binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|pos| list[pos].1)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.similarity(i, j).is_some()
    }

    /// Every undirected edge once as `(i, j, s)` with `i < j`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, s) in list {
                if i < j {
                    out.push((i, j, s));
                }
            }
        }
        out
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().map(|(i, j, _)| (i, j)).collect()
    }

    /// Copy of the graph without the given edges. Every listed edge must be
    /// present.
    pub fn remove_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        let n = self.n();
        let mut adjacency = self.adjacency.clone();
        for &(i, j) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            for (a, b) in [(i, j), (j, i)] {
                let pos = adjacency[a]
                    .binary_search_by_key(&b, |&(k, _)| k)
                    .map_err(|_| Error::MissingEdge(i, j))?;
                adjacency[a].remove(pos);
            }
        }
        Ok(Self { adjacency })
    }

    /// Keeps only the edges for which `keep` returns true.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize, f64) -> bool) -> Self {
        let kept: Vec<_> = self
            .edges()
            .into_iter()
            .filter(|&(i, j, s)| keep(i, j, s))
            .collect();
        Self::from_edges(self.n(), &kept).expect("subset of a valid graph")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,dst,similarity\n");
        for (i, j, s) in self.edges() {
            writeln!(out, "{i},{j},{s:.6}").expect("write to string");
        }
        out
    }

    /// Parses the CSV form. The node count is not stored in the file, so it is
    /// passed in; the loader re-symmetrizes and validates every edge.
    pub fn from_csv(text: &str, n: usize) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "src,dst,similarity" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `src,dst,similarity`".into(),
                })
            }
        }
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let i: usize = fields[0].trim().parse().map_err(|e| err(format!("src: {e}")))?;
            let j: usize = fields[1].trim().parse().map_err(|e| err(format!("dst: {e}")))?;
            let s: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| err(format!("similarity: {e}")))?;
            if i >= j {
                return Err(err(format!("expected src < dst, found {i},{j}")));
            }
            edges.push((i, j, s));
        }
        Self::from_edges(n, &edges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, n)
    }
}

fn check_unit_rows(e: &EmbeddingSet) -> Result<()> {
    for i in 0..e.n() {
        let norm2 = e.dot(i, i);
        if (norm2 - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidParameter(format!(
                "row {i} has squared norm {norm2}; normalize embeddings first"
            )));
        }
    }
    Ok(())
}

/// KNN graph with union symmetrization and similarity pruning.
pub fn build_graph(e: &EmbeddingSet, k: usize, prune_threshold: f64) -> Result<SimilarityGraph> {
    build_graph_with(e, &GraphOptions::new(k, prune_threshold))
}

/// Similarity is symmetric, so pruning commutes with symmetrization.
pub fn build_graph_with(e: &EmbeddingSet, opts: &GraphOptions) -> Result<SimilarityGraph> {
    check_unit_rows(e)?;
    let knn = knn_search(e, opts.k)?;
    let n = e.n();
    let mut edges = Vec::new();
    for (i, list) in knn.iter().enumerate() {
        for &j in list {
            let listed_back = || knn[j].contains(&i);
            let keep = match opts.symmetrize {
                // Emit each edge once: from the lower id, or from i when j does
                // not list i back.
                Symmetrize::Union => i < j || !listed_back(),
                Symmetrize::Mutual => i < j && listed_back(),
            };
            if !keep {
                continue;
            }
            let s = quantize_similarity(e.dot(i, j)).clamp(-1.0, 1.0);
            if s >= opts.prune_threshold {
                edges.push((i, j, s));
            }
        }
    }
    SimilarityGraph::from_edges(n, &edges)
}
