//! Class-based subgraph sampling for GCN training.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::NormalizedAdjacency;
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::gcn::model::EdgeTerm;
use crate::graph::{build_graph, SimilarityGraph};
use crate::labels::{ClusterId, LabelAssignment};

/// How `Â` is formed from a similarity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdjacencyMode {
    pub self_loops: bool,
    pub weighted: bool,
}

impl AdjacencyMode {
    pub fn normalize(&self, g: &SimilarityGraph) -> NormalizedAdjacency {
        NormalizedAdjacency::from_graph(g, self.self_loops, self.weighted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Classes per subgraph (anchor included).
    pub n1: usize,
    /// Samples drawn per class.
    pub n2: usize,
    /// KNN k inside a subgraph.
    pub k_sub: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Loss weight of negative edges; `None` uses the positive/negative ratio
    /// of the training batch.
    pub neg_weight: Option<f64>,
    pub seed: u64,
    /// Similarity floor applied to subgraph edges.
    pub prune_threshold: f64,
    pub adjacency: AdjacencyMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n1: 5,
            n2: 25,
            k_sub: 30,
            epochs: 50,
            learning_rate: 0.2,
            neg_weight: None,
            seed: 0,
            prune_threshold: 0.5,
            adjacency: AdjacencyMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n1 == 0 || self.n2 == 0 || self.k_sub == 0 {
            return bad("n1, n2 and k_sub must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {}", self.learning_rate));
        }
        if let Some(w) = self.neg_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("neg_weight = {w} must be > 0"));
            }
        }
        Ok(())
    }
}

/// A labeled training graph. Node ids inside are local (`0..len`).
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// Parent ids of the local nodes.
    pub nodes: Vec<usize>,
    pub labels: Vec<ClusterId>,
    pub graph: SimilarityGraph,
    pub a_hat: NormalizedAdjacency,
    pub features: Array2<f64>,
    /// `(i, j, positive)` for every graph edge, `i < j`.
    pub edges: Vec<(usize, usize, bool)>,
}

impl Subgraph {
    /// Builds the KNN graph over `features` and labels each edge by label
    /// agreement.
    pub fn from_embeddings(
        nodes: Vec<usize>,
        features: &EmbeddingSet,
        labels: Vec<ClusterId>,
        k_sub: usize,
        prune_threshold: f64,
        adjacency: AdjacencyMode,
    ) -> Result<Self> {
        if labels.len() != features.n() || nodes.len() != features.n() {
            return Err(Error::LengthMismatch {
                left: features.n(),
                right: labels.len(),
            });
        }
        let graph = if features.n() < 2 {
            SimilarityGraph::empty(features.n())
        } else {
            build_graph(features, k_sub.min(features.n() - 1), prune_threshold)?
        };
        Ok(Self::from_graph(nodes, features.to_array(), labels, graph, adjacency))
    }

    pub fn from_graph(
        nodes: Vec<usize>,
        features: Array2<f64>,
        labels: Vec<ClusterId>,
        graph: SimilarityGraph,
        adjacency: AdjacencyMode,
    ) -> Self {
        let edges = graph
            .edges()
            .into_iter()
            .map(|(i, j, _)| (i, j, labels[i] == labels[j]))
            .collect();
        Self {
            nodes,
            labels,
            a_hat: adjacency.normalize(&graph),
            graph,
            features,
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.edges.iter().filter(|e| e.2).count()
    }

    pub fn negatives(&self) -> usize {
        self.edges.len() - self.positives()
    }

    /// Loss terms: every edge in both orders, negatives weighted by
    /// `neg_weight`.
    pub fn terms(&self, neg_weight: f64) -> Vec<EdgeTerm> {
        let mut out = Vec::with_capacity(2 * self.edges.len());
        for &(i, j, pos) in &self.edges {
            let (target, weight) = if pos { (1.0, 1.0) } else { (0.0, neg_weight) };
            out.push(EdgeTerm { a: i, b: j, target, weight });
            out.push(EdgeTerm { a: j, b: i, target, weight });
        }
        out
    }

    /// Positive/negative count ratio; 1 when there are no negatives.
    pub fn balance_weight(&self) -> f64 {
        balance_weight([self])
    }
}

pub fn balance_weight<'a>(subgraphs: impl IntoIterator<Item = &'a Subgraph>) -> f64 {
    let (pos, neg) = subgraphs
        .into_iter()
        .fold((0, 0), |(p, n), s| (p + s.positives(), n + s.negatives()));
    if neg == 0 || pos == 0 {
        1.0
    } else {
        pos as f64 / neg as f64
    }
}

/// Mean of the unit rows of each class, keyed by class id.
fn class_centroids(e: &EmbeddingSet, labels: &LabelAssignment) -> Vec<(ClusterId, Vec<f64>)> {
    labels
        .members()
        .into_iter()
        .map(|(c, members)| {
            let mut acc = vec![0.0; e.d()];
            for &i in &members {
                for (a, &v) in acc.iter_mut().zip(e.row(i)) {
                    *a += f64::from(v);
                }
            }
            (c, acc)
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The anchor class plus its `n1 - 1` nearest classes by centroid cosine,
/// `min(n2, size)` samples from each, KNN with `k_sub` among the sample.
pub fn sample_subgraph(
    e: &EmbeddingSet,
    labels: &LabelAssignment,
    cfg: &TrainConfig,
    anchor: ClusterId,
) -> Result<Subgraph> {
    if labels.len() != e.n() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: e.n(),
        });
    }
    let centroids = class_centroids(e, labels);
    let anchor_centroid = centroids
        .iter()
        .find(|(c, _)| *c == anchor)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::InvalidParameter(format!("anchor class {anchor} has no members")))?;
    if cfg.n1 > centroids.len() {
        return Err(Error::InvalidParameter(format!(
            "n1 = {} exceeds the {} available classes",
            cfg.n1,
            centroids.len()
        )));
    }
    let mut others: Vec<(ClusterId, f64)> = centroids
        .iter()
        .filter(|(c, _)| *c != anchor)
        .map(|(c, v)| (*c, cosine(&anchor_centroid, v)))
        .collect();
    others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut classes = vec![anchor];
    classes.extend(others.iter().take(cfg.n1 - 1).map(|(c, _)| *c));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::from(anchor) + 1);
    let members = labels.members();
    let mut nodes = Vec::new();
    let mut node_labels = Vec::new();
    for c in classes {
        let pool = &members[&c];
        let take = cfg.n2.min(pool.len());
        let mut picked: Vec<usize> = sample(&mut rng, pool.len(), take)
            .into_iter()
            .map(|p| pool[p])
            .collect();
        picked.sort_unstable();
        node_labels.extend(std::iter::repeat_n(c, picked.len()));
        nodes.extend(picked);
    }
    let features = e.select(&nodes);
    Subgraph::from_embeddings(
        nodes,
        &features,
        node_labels,
        cfg.k_sub,
        cfg.prune_threshold,
        cfg.adjacency,
    )
}
