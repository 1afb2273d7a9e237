//! Batched kernels against brute-force references.

mod common;

use common::*;
use gcnrefine::cluster::score_all_edges;
use gcnrefine::{build_graph, knn_search, Error, NormalizedAdjacency, ScoringMethod};
use rand::Rng;

#[test]
fn batched_scores_match_literal_definition() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let density = rng.random_range(0.01..0.3);
        let g = random_graph(&mut rng, n, density);
        for method in ScoringMethod::ALL {
            let batched = score_all_edges(&g, method);
            assert_eq!(batched.len(), g.num_edges());
            for s in &batched {
                let want = literal_edge_score(&g, s.i, s.j, method);
                assert!(
                    (s.common_score - want).abs() <= 1e-9,
                    "{method} ({}, {}): {} vs {want}",
                    s.i,
                    s.j,
                    s.common_score
                );
            }
        }
    }
}

#[test]
fn scores_on_knn_graphs_match_literal_definition() {
    let mut rng = rng(12);
    for _ in 0..5 {
        let e = random_embeddings(&mut rng, 120, 8);
        let g = build_graph(&e, 10, -1.0).unwrap();
        for s in score_all_edges(&g, ScoringMethod::Weighted) {
            let want = literal_edge_score(&g, s.i, s.j, ScoringMethod::Weighted);
            assert!((s.common_score - want).abs() <= 1e-9);
        }
    }
}

#[test]
fn knn_matches_full_sort() {
    let mut rng = rng(13);
    for n in [10, 100, 1000] {
        let e = random_embeddings(&mut rng, n, 16);
        for k in [1, 5, 50] {
            if k >= n {
                assert!(matches!(knn_search(&e, k), Err(Error::KTooLarge { .. })));
                continue;
            }
            assert_eq!(knn_search(&e, k).unwrap(), brute_knn(&e, k), "n={n} k={k}");
        }
    }
}

#[test]
fn knn_breaks_ties_by_id() {
    // Four copies of the same point and one far away.
    let rows = vec![vec![1.0f32, 0.0]; 4]
        .into_iter()
        .chain([vec![-1.0, 0.0]])
        .collect::<Vec<_>>();
    let e = gcnrefine::EmbeddingSet::from_rows(&rows).unwrap();
    let nn = knn_search(&e, 3).unwrap();
    assert_eq!(nn[2], vec![0, 1, 3]);
    assert_eq!(nn, brute_knn(&e, 3));
}

#[test]
fn normalized_adjacency_spectrum_is_bounded() {
    let mut rng = rng(14);
    for trial in 0..20 {
        let n = rng.random_range(2..=30);
        let g = random_graph(&mut rng, n, 0.3);
        for (self_loops, weighted) in [(false, false), (true, false), (false, true), (true, true)] {
            let a = NormalizedAdjacency::from_graph(&g, self_loops, weighted).to_dense();
            let dense: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(dense[i][j], dense[j][i], "asymmetric at ({i}, {j})");
                }
            }
            let eig = jacobi_eigenvalues(dense);
            let max = eig.iter().fold(f64::MIN, |m, &v| m.max(v.abs()));
            assert!(max <= 1.0 + 1e-9, "trial {trial}: spectral radius {max}");
        }
    }
}

#[test]
fn unweighted_adjacency_entries_match_degrees() {
    let mut rng = rng(15);
    let g = random_graph(&mut rng, 40, 0.2);
    let a = NormalizedAdjacency::from_graph(&g, false, false);
    for (i, j, _) in g.edges() {
        let want = 1.0 / ((g.degree(i) * g.degree(j)) as f64).sqrt();
        assert!((a.get(i, j) - want).abs() < 1e-15);
    }
}
