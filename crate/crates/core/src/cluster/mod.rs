//! Common-neighbor edge scoring, threshold clustering and class selection.

mod kmeans;
mod scoring;
mod selection;
mod union_find;

pub use kmeans::{kmeans, KMeansResult};
pub use scoring::{common_neighbors, score_all_edges, score_edge, EdgeScore, ScoringMethod};
pub use selection::{class_quality, select_reliable_classes};
pub use union_find::DisjointSet;

use crate::graph::SimilarityGraph;
use crate::labels::{ClusterId, LabelAssignment};

/// Connected components of the graph formed by edges scoring at least
/// `score_threshold`. Components get dense ids by ascending smallest member.
pub fn cluster_by_threshold(
    g: &SimilarityGraph,
    method: ScoringMethod,
    score_threshold: f64,
) -> LabelAssignment {
    let scores = score_all_edges(g, method);
    cluster_scored(g.n(), &scores, score_threshold)
}

/// Same as [`cluster_by_threshold`] over precomputed scores.
pub fn cluster_scored(n: usize, scores: &[EdgeScore], score_threshold: f64) -> LabelAssignment {
    let mut sets = DisjointSet::new(n);
    for s in scores {
        if s.common_score >= score_threshold {
            sets.union(s.i, s.j);
        }
    }
    components_to_labels(&mut sets)
}

pub(crate) fn components_to_labels(sets: &mut DisjointSet) -> LabelAssignment {
    let n = sets.len();
    let mut root_id = vec![ClusterId::MAX; n];
    let mut next: ClusterId = 0;
    let labels = (0..n)
        .map(|i| {
            let r = sets.find(i);
            if root_id[r] == ClusterId::MAX {
                root_id[r] = next;
                next += 1;
            }
            root_id[r]
        })
        .collect();
    LabelAssignment::new(labels)
}
