//! Flat JSON pipeline configuration with `key=value` overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cluster::ScoringMethod;
use crate::error::{Error, Result};
use crate::gcn::{AdjacencyMode, RefineConfig, TrainConfig};
use crate::graph::{GraphOptions, Symmetrize};

/// Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_graph: usize,
    pub prune_threshold: f64,
    pub symmetrize: Symmetrize,
    pub scoring_method: ScoringMethod,
    /// Threshold for the initial clustering.
    pub score_threshold: f64,
    /// Threshold for re-clustering the GCN-pruned graph. Pruning removes
    /// neighbors, so common-neighbor scores sit lower than on the full graph.
    pub gcn_score_threshold: f64,
    pub target_fraction: f64,
    pub min_class_size: usize,
    /// GCN layer sizes after the input; the input size is the embedding dim.
    pub gcn_dims: Vec<usize>,
    /// Hidden width of the edge head; 0 makes it a single linear unit.
    pub head_hidden: usize,
    pub n1: usize,
    pub n2: usize,
    pub k_sub: usize,
    pub subgraph_prune_threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `null` weights negatives by the positive/negative ratio.
    pub neg_weight: Option<f64>,
    pub self_loops: bool,
    pub weighted_adjacency: bool,
    pub p_cut: f64,
    pub iterations: usize,
    pub seed: u64,
    /// K values swept by the ablation.
    pub ablation_k: Vec<usize>,
    /// Ablation thresholds are swept geometrically over
    /// `[lo * K, hi * K]` with this many points.
    pub threshold_grid: ThresholdGrid,
    pub kmeans_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl ThresholdGrid {
    /// Thresholds for a graph built with `k` neighbors, ascending.
    pub fn thresholds(&self, k: usize) -> Vec<f64> {
        let (lo, hi) = (self.lo * k as f64, self.hi * k as f64);
        if self.steps == 1 {
            return vec![lo];
        }
        (0..self.steps)
            .map(|s| lo * (hi / lo).powf(s as f64 / (self.steps - 1) as f64))
            .collect()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let refine = RefineConfig::default();
        Self {
            k_graph: 50,
            prune_threshold: 0.5,
            symmetrize: Symmetrize::Union,
            scoring_method: ScoringMethod::Weighted,
            score_threshold: 12.0,
            gcn_score_threshold: refine.score_threshold,
            target_fraction: refine.target_fraction,
            min_class_size: refine.min_class_size,
            gcn_dims: refine.layer_dims,
            head_hidden: refine.head_hidden,
            n1: train.n1,
            n2: train.n2,
            k_sub: train.k_sub,
            subgraph_prune_threshold: train.prune_threshold,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            neg_weight: train.neg_weight,
            self_loops: train.adjacency.self_loops,
            weighted_adjacency: train.adjacency.weighted,
            p_cut: refine.p_cut,
            iterations: 3,
            seed: 0,
            ablation_k: vec![10, 50, 100],
            threshold_grid: ThresholdGrid {
                lo: 0.01,
                hi: 2.0,
                steps: 80,
            },
            kmeans_max_iter: 100,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Applies `key=value` overrides. Values are parsed as JSON, falling back
    /// to a plain string, so `scoring_method=SUM` and `gcn_dims=[32,32]` both
    /// work.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        let map = doc.as_object_mut().expect("config is an object");
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            if !map.contains_key(key) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
            map.insert(key.to_string(), value);
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is not finite")))
            }
        };
        if self.k_graph == 0 {
            return bad("k_graph must be >= 1".into());
        }
        if !(-1.0..=1.0).contains(&self.prune_threshold) {
            return bad(format!("prune_threshold = {} outside [-1, 1]", self.prune_threshold));
        }
        if !(-1.0..=1.0).contains(&self.subgraph_prune_threshold) {
            return bad(format!(
                "subgraph_prune_threshold = {} outside [-1, 1]",
                self.subgraph_prune_threshold
            ));
        }
        finite("score_threshold", self.score_threshold)?;
        finite("gcn_score_threshold", self.gcn_score_threshold)?;
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return bad(format!("target_fraction = {} outside (0, 1]", self.target_fraction));
        }
        if self.min_class_size == 0 {
            return bad("min_class_size must be >= 1".into());
        }
        if self.gcn_dims.is_empty() || self.gcn_dims.contains(&0) {
            return bad(format!("gcn_dims = {:?} must be non-empty and positive", self.gcn_dims));
        }
        if self.n1 == 0 || self.n2 == 0 || self.k_sub == 0 {
            return bad("n1, n2 and k_sub must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {} must be finite and >= 0", self.learning_rate));
        }
        if let Some(w) = self.neg_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("neg_weight = {w} must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_cut) {
            return bad(format!("p_cut = {} outside [0, 1]", self.p_cut));
        }
        if self.ablation_k.contains(&0) {
            return bad("ablation_k entries must be >= 1".into());
        }
        let g = &self.threshold_grid;
        if !(g.lo > 0.0 && g.hi >= g.lo && g.hi.is_finite()) || g.steps == 0 {
            return bad(format!("threshold_grid {g:?} needs 0 < lo <= hi and steps >= 1"));
        }
        Ok(())
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            k: self.k_graph,
            prune_threshold: self.prune_threshold,
            symmetrize: self.symmetrize,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n1: self.n1,
            n2: self.n2,
            k_sub: self.k_sub,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            neg_weight: self.neg_weight,
            seed: self.seed,
            prune_threshold: self.subgraph_prune_threshold,
            adjacency: AdjacencyMode {
                self_loops: self.self_loops,
                weighted: self.weighted_adjacency,
            },
        }
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            score_threshold: self.gcn_score_threshold,
            p_cut: self.p_cut,
            target_fraction: self.target_fraction,
            min_class_size: self.min_class_size,
            layer_dims: self.gcn_dims.clone(),
            head_hidden: self.head_hidden,
            train: self.train_config(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = PipelineConfig {
            seed: 7,
            neg_weight: Some(0.5),
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = PipelineConfig::from_json(r#"{"k_grpah": 10}"#).unwrap_err();
        assert!(err.to_string().contains("k_grpah"), "{err}");
    }

    #[test]
    fn out_of_range_is_rejected() {
        for doc in [
            r#"{"k_graph": 0}"#,
            r#"{"prune_threshold": 1.5}"#,
            r#"{"target_fraction": 0}"#,
            r#"{"p_cut": 2}"#,
            r#"{"neg_weight": -1}"#,
            r#"{"gcn_dims": []}"#,
            r#"{"learning_rate": -0.1}"#,
        ] {
            assert!(matches!(PipelineConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn overrides() {
        let cfg = PipelineConfig::default()
            .with_overrides(&["scoring_method=SUM", "gcn_dims=[16, 8]", "seed=3", "neg_weight=null"])
            .unwrap();
        assert_eq!(cfg.scoring_method, ScoringMethod::Sum);
        assert_eq!(cfg.gcn_dims, vec![16, 8]);
        assert_eq!(cfg.seed, 3);
        assert!(PipelineConfig::default().with_overrides(&["nope=1"]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["k_graph"]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["k_graph=0"]).is_err());
    }

    #[test]
    fn threshold_grid_scales_with_k() {
        let g = ThresholdGrid {
            lo: 0.1,
            hi: 1.0,
            steps: 3,
        };
        let t = g.thresholds(10);
        assert_eq!(t.len(), 3);
        assert!((t[0] - 1.0).abs() < 1e-12 && (t[2] - 10.0).abs() < 1e-12);
        assert!((t[1] - 10f64.sqrt()).abs() < 1e-12);
    }
}
