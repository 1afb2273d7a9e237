//! Edge re-scoring from shared neighborhoods.
//!
//! For an edge `(i, j)` with common neighbors `K = N(i) ∩ N(j)`:
//!
//! - `Product`: `Σ_k S(i,k)·S(j,k)`
//! - `Sum`: `Σ_k S(i,k) + S(j,k)`
//! - `Weighted`: `Σ_k α_i S(i,k) + α_j S(j,k)` with `α_i = |K| / |N(i)|`
//! - `GcnWeighted`: the `Weighted` score, intended for graphs already pruned by
//!   the GCN edge classifier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoringMethod {
    Product,
    Sum,
    Weighted,
    GcnWeighted,
}

impl ScoringMethod {
    pub const ALL: [ScoringMethod; 4] = [
        ScoringMethod::Product,
        ScoringMethod::Sum,
        ScoringMethod::Weighted,
        ScoringMethod::GcnWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoringMethod::Product => "PRODUCT",
            ScoringMethod::Sum => "SUM",
            ScoringMethod::Weighted => "WEIGHTED",
            ScoringMethod::GcnWeighted => "GCN_WEIGHTED",
        }
    }

    fn combine(self, s_ik: f64, s_jk: f64, alpha_i: f64, alpha_j: f64) -> f64 {
        match self {
            ScoringMethod::Product => s_ik * s_jk,
            ScoringMethod::Sum => s_ik + s_jk,
            ScoringMethod::Weighted | ScoringMethod::GcnWeighted => {
                alpha_i * s_ik + alpha_j * s_jk
            }
        }
    }
}

impl fmt::Display for ScoringMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoringMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoringMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scoring method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeScore {
    pub i: usize,
    pub j: usize,
    pub raw: f64,
    pub common_score: f64,
    pub alpha_i: f64,
    pub alpha_j: f64,
}

fn check_node(g: &SimilarityGraph, node: usize) -> Result<()> {
    if node >= g.n() {
        Err(Error::NodeOutOfRange { node, n: g.n() })
    } else {
        Ok(())
    }
}

/// `N(i) ∩ N(j)` with the similarities to each endpoint, as `(k, S(i,k), S(j,k))`.
fn shared(g: &SimilarityGraph, i: usize, j: usize) -> Vec<(usize, f64, f64)> {
    let (a, b) = (g.neighbors(i), g.neighbors(j));
    let (mut p, mut q) = (0, 0);
    let mut out = Vec::new();
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let k = a[p].0;
                if k != i && k != j {
                    out.push((k, a[p].1, b[q].1));
                }
                p += 1;
                q += 1;
            }
        }
    }
    out
}

pub fn common_neighbors(g: &SimilarityGraph, i: usize, j: usize) -> Result<Vec<usize>> {
    check_node(g, i)?;
    check_node(g, j)?;
    if i == j {
        return Err(Error::InvalidParameter(format!(
            "common neighbors need distinct nodes, got {i} twice"
        )));
    }
    Ok(shared(g, i, j).into_iter().map(|(k, _, _)| k).collect())
}

/// Scores the existing edge `(i, j)`.
pub fn score_edge(g: &SimilarityGraph, i: usize, j: usize, method: ScoringMethod) -> Result<EdgeScore> {
    check_node(g, i)?;
    check_node(g, j)?;
    let raw = g.similarity(i, j).ok_or(Error::MissingEdge(i, j))?;
    let common = shared(g, i, j);
    let c = common.len() as f64;
    let alpha_i = if common.is_empty() { 0.0 } else { c / g.degree(i) as f64 };
    let alpha_j = if common.is_empty() { 0.0 } else { c / g.degree(j) as f64 };
    let common_score = common
        .iter()
        .map(|&(_, s_ik, s_jk)| method.combine(s_ik, s_jk, alpha_i, alpha_j))
        .sum();
    Ok(EdgeScore {
        i,
        j,
        raw,
        common_score,
        alpha_i,
        alpha_j,
    })
}

/// Scores every edge, in the order of [`SimilarityGraph::edges`].
///
/// Works node by node: the neighbor similarities of `i` are scattered into a
/// dense buffer, then each neighbor `j > i` walks its own list against it.
pub fn score_all_edges(g: &SimilarityGraph, method: ScoringMethod) -> Vec<EdgeScore> {
    let n = g.n();
    let mut sim_to_i = vec![f64::NAN; n];
    let mut out = Vec::with_capacity(g.num_edges());
    let mut buf: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        for &(k, s) in g.neighbors(i) {
            sim_to_i[k] = s;
        }
        let deg_i = g.degree(i) as f64;
        for &(j, raw) in g.neighbors(i) {
            if j < i {
                continue;
            }
            buf.clear();
            for &(k, s_jk) in g.neighbors(j) {
                let s_ik = sim_to_i[k];
                if !s_ik.is_nan() && k != i {
                    buf.push((s_ik, s_jk));
                }
            }
            let c = buf.len() as f64;
            let (alpha_i, alpha_j) = if buf.is_empty() {
                (0.0, 0.0)
            } else {
                (c / deg_i, c / g.degree(j) as f64)
            };
            let common_score = buf
                .iter()
                .map(|&(s_ik, s_jk)| method.combine(s_ik, s_jk, alpha_i, alpha_j))
                .sum();
            out.push(EdgeScore {
                i,
                j,
                raw,
                common_score,
                alpha_i,
                alpha_j,
            });
        }
        for &(k, _) in g.neighbors(i) {
            sim_to_i[k] = f64::NAN;
        }
    }
    out
}
