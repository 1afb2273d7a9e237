//! GCN edge classifier: subgraph sampling, training, and graph pruning.

mod infer;
mod model;
mod subgraph;
mod train;

pub use infer::{
    build_training_subgraphs, edge_probabilities, edge_report_csv, infer_prune, refine,
    refine_with_model, save_edge_report, EdgeProbability, RefineConfig, RefineOutcome,
};
pub use model::{grad_norm, logistic, Activations, EdgeTerm, GcnLayer, GcnModel, HiddenHead, GCN1_MAGIC};
pub use subgraph::{balance_weight, sample_subgraph, AdjacencyMode, Subgraph, TrainConfig};
pub use train::{gradient_check, gradient_check_with, train, GradCheckReport, TrainOutcome, GRAD_CHECK_FLOOR};
