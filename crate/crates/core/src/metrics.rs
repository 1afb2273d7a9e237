//! Partition agreement (NMI) and edge-level precision/recall.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::{ClusterId, LabelAssignment};

/// Normalized mutual information, normalized by the arithmetic mean of the
/// two entropies. Two single-cluster partitions score 1.0.
pub fn nmi(a: &LabelAssignment, b: &LabelAssignment) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    a.require_assigned()?;
    b.require_assigned()?;
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidParameter("nmi of empty assignments".into()));
    }

    let mut joint: BTreeMap<(ClusterId, ClusterId), usize> = BTreeMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *joint.entry((x, y)).or_insert(0) += 1;
    }
    let nf = n as f64;
    // p * ln(1/p) with p = count / n, written so identical partitions produce
    // bit-identical entropy and information sums.
    let entropy = |sizes: &BTreeMap<ClusterId, usize>| -> f64 {
        sizes
            .values()
            .map(|&c| {
                let c = c as f64;
                (c / nf) * (nf / c).ln()
            })
            .sum()
    };
    let ha = entropy(a.cluster_sizes());
    let hb = entropy(b.cluster_sizes());
    let sa = a.cluster_sizes();
    let sb = b.cluster_sizes();
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            let ax = sa[&x] as f64;
            let by = sb[&y] as f64;
            (c / nf) * ((nf * c) / (ax * by)).ln()
        })
        .sum();

    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let denom = (ha + hb) / 2.0;
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Precision and recall of a predicted edge set against truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    /// Candidate edges whose endpoints share a truth label.
    pub candidate_positives: usize,
    /// `None` when the predicted set is empty.
    pub precision: Option<f64>,
    /// `None` when no candidate edge is positive.
    pub recall: Option<f64>,
}

fn canonical_edges(edges: &[(usize, usize)], n: usize) -> Result<BTreeSet<(usize, usize)>> {
    edges
        .iter()
        .map(|&(i, j)| {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            Ok((i.min(j), i.max(j)))
        })
        .collect()
}

/// An edge is a true positive iff both endpoints share a truth label. Recall
/// is measured against the positives among `candidates` (the unpruned graph).
pub fn edge_metrics(
    predicted: &[(usize, usize)],
    candidates: &[(usize, usize)],
    truth: &LabelAssignment,
) -> Result<EdgeMetrics> {
    truth.require_assigned()?;
    let n = truth.len();
    let predicted = canonical_edges(predicted, n)?;
    let candidates = canonical_edges(candidates, n)?;
    let same = |&(i, j): &(usize, usize)| truth.get(i) == truth.get(j);

    let tp = predicted.iter().filter(|e| same(e)).count();
    let fp = predicted.len() - tp;
    let cand_pos = candidates.iter().filter(|e| same(e)).count();
    Ok(EdgeMetrics {
        true_positives: tp,
        false_positives: fp,
        candidate_positives: cand_pos,
        precision: (!predicted.is_empty()).then(|| tp as f64 / predicted.len() as f64),
        recall: (cand_pos > 0).then(|| (tp as f64 / cand_pos as f64).min(1.0)),
    })
}
