//! Full-graph edge pruning with a trained model, and the refine composite.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_by_threshold, select_reliable_classes, ScoringMethod};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::gcn::model::{logistic, GcnModel};
use crate::gcn::subgraph::{sample_subgraph, AdjacencyMode, Subgraph, TrainConfig};
use crate::gcn::train::train;
use crate::graph::SimilarityGraph;
use crate::labels::LabelAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeProbability {
    pub src: usize,
    pub dst: usize,
    pub probability: f64,
}

pub fn edge_report_csv(report: &[EdgeProbability]) -> String {
    let mut out = String::from("src,dst,probability\n");
    for e in report {
        writeln!(out, "{},{},{:.6}", e.src, e.dst, e.probability).expect("write to string");
    }
    out
}

pub fn save_edge_report(report: &[EdgeProbability], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, edge_report_csv(report)).map_err(|e| Error::io(path, e))
}

/// Edge probabilities for every edge of `g` from one forward pass.
pub fn edge_probabilities(
    model: &GcnModel,
    g: &SimilarityGraph,
    e: &EmbeddingSet,
    adjacency: AdjacencyMode,
) -> Result<Vec<EdgeProbability>> {
    if g.n() != e.n() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, embeddings have {} rows",
            g.n(),
            e.n()
        )));
    }
    let a_hat = adjacency.normalize(g);
    let act = model.forward(&a_hat, &e.to_array())?;
    let edges = g.edges();
    let logits = model.ordered_logits(act.output(), edges.iter().map(|&(i, j, _)| (i, j)));
    Ok(edges
        .into_iter()
        .zip(logits)
        .map(|((i, j, _), logit)| EdgeProbability {
            src: i,
            dst: j,
            probability: logistic(logit),
        })
        .collect())
}

/// Removes every edge whose predicted probability is below `p_cut`.
pub fn infer_prune(
    model: &GcnModel,
    g: &SimilarityGraph,
    e: &EmbeddingSet,
    p_cut: f64,
    adjacency: AdjacencyMode,
) -> Result<(SimilarityGraph, Vec<EdgeProbability>)> {
    let report = edge_probabilities(model, g, e, adjacency)?;
    let dropped: Vec<(usize, usize)> = report
        .iter()
        .filter(|p| p.probability < p_cut)
        .map(|p| (p.src, p.dst))
        .collect();
    Ok((g.remove_edges(&dropped)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Threshold for re-clustering the pruned graph.
    pub score_threshold: f64,
    pub p_cut: f64,
    pub target_fraction: f64,
    pub min_class_size: usize,
    /// Hidden and output sizes; the input size comes from the embeddings.
    pub layer_dims: Vec<usize>,
    /// Width of the edge head's hidden layer; 0 for a linear head.
    pub head_hidden: usize,
    pub train: TrainConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            score_threshold: 7.5,
            p_cut: 0.5,
            target_fraction: 0.6,
            min_class_size: 20,
            layer_dims: vec![64, 64],
            head_hidden: 32,
            train: TrainConfig::default(),
        }
    }
}

impl RefineConfig {
    pub fn model_dims(&self, input: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.layer_dims.iter().copied()).collect()
    }

    /// A freshly initialized model for `input`-dimensional embeddings.
    pub fn init_model(&self, input: usize, seed: u64) -> Result<GcnModel> {
        GcnModel::with_head(&self.model_dims(input), self.head_hidden, seed)
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub labels: LabelAssignment,
    /// Classes used as training data.
    pub retained: Option<LabelAssignment>,
    /// `None` when there was nothing to train on and pruning was skipped.
    pub model: Option<GcnModel>,
    pub pruned: SimilarityGraph,
    pub edge_report: Vec<EdgeProbability>,
    pub loss_trace: Vec<f64>,
    pub subgraphs: usize,
}

/// Prune with a trained model, then re-cluster with common-neighbor weighted
/// scores on the pruned graph.
pub fn refine_with_model(
    g: &SimilarityGraph,
    e: &EmbeddingSet,
    model: &GcnModel,
    cfg: &RefineConfig,
) -> Result<(LabelAssignment, SimilarityGraph, Vec<EdgeProbability>)> {
    let (pruned, report) = infer_prune(model, g, e, cfg.p_cut, cfg.train.adjacency)?;
    let labels = cluster_by_threshold(&pruned, ScoringMethod::GcnWeighted, cfg.score_threshold);
    Ok((labels, pruned, report))
}

/// One subgraph per retained class, anchors in ascending id order.
pub fn build_training_subgraphs(
    e: &EmbeddingSet,
    retained: &LabelAssignment,
    cfg: &TrainConfig,
) -> Result<Vec<Subgraph>> {
    let classes: Vec<_> = retained.cluster_sizes().keys().copied().collect();
    let cfg = TrainConfig {
        n1: cfg.n1.min(classes.len()),
        ..cfg.clone()
    };
    classes
        .into_iter()
        .map(|anchor| sample_subgraph(e, retained, &cfg, anchor))
        .collect()
}

/// Selects reliable classes from `labels`, trains `model` on subgraphs drawn
/// from them, prunes `g` and re-clusters. When no class survives selection or
/// no subgraph has both edge classes, the graph is re-clustered unpruned.
pub fn refine(
    g: &SimilarityGraph,
    e: &EmbeddingSet,
    labels: &LabelAssignment,
    model: &GcnModel,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    let unpruned = |retained: Option<LabelAssignment>| RefineOutcome {
        labels: cluster_by_threshold(g, ScoringMethod::GcnWeighted, cfg.score_threshold),
        retained,
        model: None,
        pruned: g.clone(),
        edge_report: Vec::new(),
        loss_trace: Vec::new(),
        subgraphs: 0,
    };
    let retained = match select_reliable_classes(
        labels,
        g,
        ScoringMethod::Weighted,
        cfg.target_fraction,
        cfg.min_class_size,
    ) {
        Ok(r) => r,
        Err(Error::EmptySelection) => {
            warn!("no class reached min_class_size = {}; skipping GCN pruning", cfg.min_class_size);
            return Ok(unpruned(None));
        }
        Err(err) => return Err(err),
    };
    let subgraphs = build_training_subgraphs(e, &retained, &cfg.train)?;
    if !subgraphs.iter().any(|s| s.positives() > 0 && s.negatives() > 0) {
        warn!("no training subgraph has both edge classes; skipping GCN pruning");
        return Ok(unpruned(Some(retained)));
    }
    let outcome = train(model, &subgraphs, &cfg.train)?;
    info!(
        "trained on {} subgraphs, loss {:.4} -> {:.4}",
        outcome.used_subgraphs,
        outcome.loss_trace.first().copied().unwrap_or(f64::NAN),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    let mut trained = outcome.model;
    trained.round_to_f32();
    let (labels, pruned, report) = refine_with_model(g, e, &trained, cfg)?;
    Ok(RefineOutcome {
        labels,
        retained: Some(retained),
        model: Some(trained),
        pruned,
        edge_report: report,
        loss_trace: outcome.loss_trace,
        subgraphs: outcome.used_subgraphs,
    })
}
