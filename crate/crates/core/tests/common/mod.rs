//! Shared fixtures and brute-force reference implementations.
#![allow(dead_code)]

use std::collections::BTreeSet;

use gcnrefine::{
    generate_synthetic, EmbeddingSet, LabelAssignment, ScoringMethod, SimilarityGraph, SynthSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The 100 x 50, dim-32 benchmark mixture.
pub fn benchmark(seed: u64) -> (EmbeddingSet, LabelAssignment) {
    generate_synthetic(&SynthSpec {
        num_classes: 100,
        samples_per_class: 50,
        dim: 32,
        noise_sigma: 0.17,
        seed,
    })
    .unwrap()
}

pub fn random_embeddings(rng: &mut impl Rng, n: usize, d: usize) -> EmbeddingSet {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    EmbeddingSet::from_rows(&rows).unwrap().normalize().unwrap()
}

/// Random undirected graph with similarities on the six-decimal grid.
pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> SimilarityGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let s = (rng.random_range(-1.0f64..1.0) * 1e6).round() / 1e6;
                edges.push((i, j, s));
            }
        }
    }
    SimilarityGraph::from_edges(n, &edges).unwrap()
}

/// Edge score written straight from the definition: loop over every node
/// `k`, keep it when both `(i, k)` and `(j, k)` are edges.
pub fn literal_edge_score(g: &SimilarityGraph, i: usize, j: usize, method: ScoringMethod) -> f64 {
    let n = g.n();
    let common: Vec<usize> = (0..n)
        .filter(|&k| k != i && k != j && g.similarity(i, k).is_some() && g.similarity(j, k).is_some())
        .collect();
    let size = common.len() as f64;
    let deg = |v: usize| (0..n).filter(|&u| g.similarity(v, u).is_some()).count() as f64;
    let (alpha_i, alpha_j) = if common.is_empty() {
        (0.0, 0.0)
    } else {
        (size / deg(i), size / deg(j))
    };
    let mut total = 0.0;
    for &k in &common {
        let s_ik = g.similarity(i, k).unwrap();
        let s_jk = g.similarity(j, k).unwrap();
        total += match method {
            ScoringMethod::Product => s_ik * s_jk,
            ScoringMethod::Sum => s_ik + s_jk,
            ScoringMethod::Weighted | ScoringMethod::GcnWeighted => alpha_i * s_ik + alpha_j * s_jk,
        };
    }
    total
}

/// Full sort of every other point by (squared distance, id).
pub fn brute_knn(e: &EmbeddingSet, k: usize) -> Vec<Vec<usize>> {
    (0..e.n())
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..e.n())
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = e
                        .row(i)
                        .iter()
                        .zip(e.row(j))
                        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                        .sum();
                    (d, j)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum()
    };
    for _sweep in 0..100 {
        if off(&a) < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    assert!(off(&a) < 1e-18, "Jacobi did not converge");
    (0..n).map(|i| a[i][i]).collect()
}

/// Undirected edge set with `i < j`.
pub fn edge_set(g: &SimilarityGraph) -> BTreeSet<(usize, usize)> {
    g.edge_pairs().into_iter().map(|(i, j)| (i.min(j), i.max(j))).collect()
}
