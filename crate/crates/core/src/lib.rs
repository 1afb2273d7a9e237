//! Pseudo-label refinement over embedding vectors.
//!
//! The pipeline builds an exact KNN similarity graph, re-scores edges by their
//! shared neighborhoods, clusters by connected components, trains a GCN edge
//! classifier on the most reliable clusters, prunes the graph with it and
//! clusters again. A small set of DINO-style loss functions lives in [`dino`].

pub mod adjacency;
pub mod cluster;
pub mod config;
pub mod dino;
pub mod embedding;
pub mod gcn;
pub mod error;
pub mod graph;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use adjacency::NormalizedAdjacency;
pub use config::PipelineConfig;
pub use cluster::{cluster_by_threshold, score_edge, EdgeScore, ScoringMethod};
pub use embedding::EmbeddingSet;
pub use error::{Error, Result};
pub use graph::{build_graph, knn_search, SimilarityGraph};
pub use labels::{ClusterId, LabelAssignment, UNASSIGNED};
pub use metrics::{edge_metrics, nmi, EdgeMetrics};
pub use pipeline::{run_ablation, run_pipeline, AblationTable, PipelineReport, PipelineRun};
pub use synth::{generate_synthetic, SynthSpec};
