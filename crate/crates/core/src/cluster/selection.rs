//! Picks the most trustworthy clusters as GCN training data.

use std::collections::BTreeMap;

use crate::cluster::{score_all_edges, ScoringMethod};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::labels::{ClusterId, LabelAssignment, UNASSIGNED};

/// Mean `method` score over edges whose endpoints share a cluster. Clusters
/// without internal edges score 0.
pub fn class_quality(
    labels: &LabelAssignment,
    g: &SimilarityGraph,
    method: ScoringMethod,
) -> BTreeMap<ClusterId, f64> {
    let mut acc: BTreeMap<ClusterId, (f64, usize)> = labels
        .cluster_sizes()
        .keys()
        .map(|&c| (c, (0.0, 0)))
        .collect();
    for s in score_all_edges(g, method) {
        let (a, b) = (labels.get(s.i), labels.get(s.j));
        if a == b && a != UNASSIGNED {
            let e = acc.get_mut(&a).expect("label present in sizes");
            e.0 += s.common_score;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(c, (sum, count))| (c, if count == 0 { 0.0 } else { sum / count as f64 }))
        .collect()
}

/// Ranks clusters of at least `min_size` members by quality (ties: lower id
/// first) and keeps them until the retained sample count first reaches
/// `target_fraction * n`. Everything else becomes [`UNASSIGNED`]; retained ids
/// are compacted.
pub fn select_reliable_classes(
    labels: &LabelAssignment,
    g: &SimilarityGraph,
    method: ScoringMethod,
    target_fraction: f64,
    min_size: usize,
) -> Result<LabelAssignment> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target_fraction = {target_fraction} outside (0, 1]"
        )));
    }
    if labels.len() != g.n() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: g.n(),
        });
    }
    let quality = class_quality(labels, g, method);
    let sizes = labels.cluster_sizes();
    let mut ranked: Vec<(ClusterId, f64)> = quality
        .into_iter()
        .filter(|(c, _)| sizes[c] >= min_size)
        .collect();
    if ranked.is_empty() {
        return Err(Error::EmptySelection);
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let target = target_fraction * labels.len() as f64;
    let mut kept = Vec::new();
    let mut covered = 0usize;
    for (c, _) in ranked {
        if covered as f64 >= target {
            break;
        }
        covered += sizes[&c];
        kept.push(c);
    }
    kept.sort_unstable();
    let retained = labels
        .labels()
        .iter()
        .map(|l| if kept.binary_search(l).is_ok() { *l } else { UNASSIGNED })
        .collect();
    Ok(LabelAssignment::new(retained).compact())
}
