//! End-to-end runs: the iterated refine loop and the method/K ablation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use serde::Serialize;

use crate::cluster::{cluster_by_threshold, cluster_scored, kmeans, score_all_edges, ScoringMethod};
use crate::config::PipelineConfig;
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::gcn::{refine, GcnModel};
use crate::graph::{build_graph_with, SimilarityGraph};
use crate::labels::LabelAssignment;
use crate::metrics::{edge_metrics, nmi};

/// Written at the top of every report.
pub const ITERATION_NOTE: &str = "Embeddings are fixed: each iteration re-selects reliable classes from the \
previous labels, retrains the GCN from scratch, prunes the original graph and re-clusters. The encoder is \
not retrained.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    /// 0 is the initial clustering of the unpruned graph.
    pub iteration: usize,
    pub num_clusters: usize,
    pub singletons: usize,
    pub nmi: Option<f64>,
    /// Edges of the graph this iteration clustered.
    pub edges: usize,
    /// Against the initial graph's edges as candidates.
    pub edge_precision: Option<f64>,
    pub edge_recall: Option<f64>,
    pub retained_classes: usize,
    pub retained_samples: usize,
    pub subgraphs: usize,
    pub gcn_pruned: bool,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub note: String,
    pub samples: usize,
    pub dim: usize,
    pub config: PipelineConfig,
    pub iterations: Vec<IterationReport>,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.note);
        let _ = writeln!(
            out,
            "# samples={} dim={} k_graph={} method={} seed={}",
            self.samples, self.dim, self.config.k_graph, self.config.scoring_method, self.config.seed
        );
        let _ = writeln!(
            out,
            "{:>4} {:>9} {:>10} {:>8} {:>8} {:>9} {:>9} {:>8} {:>10}",
            "iter", "clusters", "singletons", "nmi", "edges", "precision", "recall", "retained", "final_loss"
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        for it in &self.iterations {
            let _ = writeln!(
                out,
                "{:>4} {:>9} {:>10} {:>8} {:>8} {:>9} {:>9} {:>8} {:>10}",
                it.iteration,
                it.num_clusters,
                it.singletons,
                opt(it.nmi),
                it.edges,
                opt(it.edge_precision),
                opt(it.edge_recall),
                it.retained_classes,
                opt(it.loss_trace.last().copied()),
            );
        }
        out
    }
}

/// A finished run: the report plus every artifact needed to resume a stage.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub graph: SimilarityGraph,
    /// One entry per iteration, index 0 being the initial clustering.
    pub labels: Vec<LabelAssignment>,
    pub models: Vec<Option<GcnModel>>,
}

fn summarize(
    iteration: usize,
    labels: &LabelAssignment,
    clustered: &SimilarityGraph,
    full: &SimilarityGraph,
    truth: Option<&LabelAssignment>,
) -> Result<IterationReport> {
    let (nmi_value, precision, recall) = match truth {
        Some(t) => {
            let m = edge_metrics(&clustered.edge_pairs(), &full.edge_pairs(), t)?;
            (Some(nmi(labels, t)?), m.precision, m.recall)
        }
        None => (None, None, None),
    };
    Ok(IterationReport {
        iteration,
        num_clusters: labels.num_clusters(),
        singletons: labels.cluster_sizes().values().filter(|&&s| s == 1).count(),
        nmi: nmi_value,
        edges: clustered.num_edges(),
        edge_precision: precision,
        edge_recall: recall,
        retained_classes: 0,
        retained_samples: 0,
        subgraphs: 0,
        gcn_pruned: false,
        loss_trace: Vec::new(),
    })
}

/// Graph → initial clustering → `iterations` rounds of refine.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    e: &EmbeddingSet,
    truth: Option<&LabelAssignment>,
) -> Result<PipelineRun> {
    cfg.validate().map_err(|err| err.in_stage("config"))?;
    if let Some(t) = truth {
        if t.len() != e.n() {
            return Err(Error::LengthMismatch {
                left: e.n(),
                right: t.len(),
            }
            .in_stage("config"));
        }
    }
    let graph = build_graph_with(e, &cfg.graph_options()).map_err(|err| err.in_stage("graph"))?;
    let initial = cluster_by_threshold(&graph, cfg.scoring_method, cfg.score_threshold);
    let mut reports = vec![summarize(0, &initial, &graph, &graph, truth).map_err(|err| err.in_stage("eval"))?];
    info!(
        "iteration 0: {} clusters, nmi {:?}",
        initial.num_clusters(),
        reports[0].nmi
    );
    let mut labels = vec![initial];
    let mut models = vec![None];

    let refine_cfg = cfg.refine_config();
    for iteration in 1..=cfg.iterations {
        let seed = cfg.seed.wrapping_add(iteration as u64);
        let mut this_cfg = refine_cfg.clone();
        this_cfg.train.seed = seed;
        let model = this_cfg.init_model(e.d(), seed).map_err(|err| err.in_stage("gcn"))?;
        let previous = labels.last().expect("initial labels");
        let out = refine(&graph, e, previous, &model, &this_cfg).map_err(|err| err.in_stage("refine"))?;
        let mut report =
            summarize(iteration, &out.labels, &out.pruned, &graph, truth).map_err(|err| err.in_stage("eval"))?;
        if let Some(r) = &out.retained {
            report.retained_classes = r.num_clusters();
            report.retained_samples = r.len() - r.unassigned_count();
        }
        report.subgraphs = out.subgraphs;
        report.gcn_pruned = out.model.is_some();
        report.loss_trace = out.loss_trace;
        info!(
            "iteration {iteration}: {} clusters, nmi {:?}, {} edges kept",
            report.num_clusters, report.nmi, report.edges
        );
        reports.push(report);
        labels.push(out.labels);
        models.push(out.model);
    }

    Ok(PipelineRun {
        report: PipelineReport {
            note: ITERATION_NOTE.to_string(),
            samples: e.n(),
            dim: e.d(),
            config: cfg.clone(),
            iterations: reports,
        },
        graph,
        labels,
        models,
    })
}

/// `<root>/run/<unix-seconds>-<seed>`, suffixed if it already exists.
pub fn new_run_dir(root: impl AsRef<Path>, seed: u64) -> Result<PathBuf> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let base = root.as_ref().join("run");
    let mut dir = base.join(format!("{stamp}-{seed}"));
    let mut n = 1;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{seed}.{n}"));
        n += 1;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

impl PipelineRun {
    /// Writes `config.json`, `graph.csv`, `labels_iterN.csv`,
    /// `gcn_iterN.bin` (iterations that trained a model), `report.json` and
    /// `report.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.report.config.save(dir.join("config.json"))?;
        self.graph.save(dir.join("graph.csv"))?;
        for (i, l) in self.labels.iter().enumerate() {
            l.save(dir.join(format!("labels_iter{i}.csv")))?;
        }
        for (i, m) in self.models.iter().enumerate() {
            if let Some(m) = m {
                m.save(dir.join(format!("gcn_iter{i}.bin")))?;
            }
        }
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("report.json", self.report.to_json())?;
        write("report.txt", self.report.to_text())
    }
}

/// Best NMI over `thresholds` for one scoring method; ties keep the lowest
/// threshold.
pub fn sweep_thresholds(
    g: &SimilarityGraph,
    method: ScoringMethod,
    thresholds: &[f64],
    truth: &LabelAssignment,
) -> Result<(f64, f64, LabelAssignment)> {
    let scores = score_all_edges(g, method);
    let mut best: Option<(f64, f64, LabelAssignment)> = None;
    for &t in thresholds {
        let labels = cluster_scored(g.n(), &scores, t);
        let v = nmi(&labels, truth)?;
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, t, labels));
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("empty threshold grid".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    /// `method` rows compare scoring methods at `k_graph`; `k_sweep` rows vary K.
    pub section: String,
    pub method: String,
    pub k: usize,
    pub nmi: f64,
    /// Best threshold from the grid; `None` for k-means.
    pub threshold: Option<f64>,
    pub num_clusters: usize,
    /// Precision of the clustered graph's edges.
    pub edge_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, section: &str, method: &str, k: usize) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.section == section && r.method == method && r.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,method,k,nmi,threshold,num_clusters,edge_precision\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{}",
                r.section,
                r.method,
                r.k,
                r.nmi,
                r.threshold.map_or(String::new(), |t| format!("{t:.4}")),
                r.num_clusters,
                r.edge_precision.map_or(String::new(), |p| format!("{p:.6}")),
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<8} {:<13} {:>4} {:>8} {:>10} {:>9} {:>9}\n",
            "section", "method", "k", "nmi", "threshold", "clusters", "precision"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<13} {:>4} {:>8.2} {:>10} {:>9} {:>9}",
                r.section,
                r.method,
                r.k,
                100.0 * r.nmi,
                r.threshold.map_or("-".to_string(), |t| format!("{t:.3}")),
                r.num_clusters,
                r.edge_precision.map_or("-".to_string(), |p| format!("{p:.4}")),
            );
        }
        out
    }
}

/// k-means baseline, the four scoring methods at `k_graph` and a WEIGHTED
/// K sweep. Every graph-based row reports its best threshold on the
/// configured grid; GCN_WEIGHTED refines the best WEIGHTED labels.
pub fn run_ablation(cfg: &PipelineConfig, e: &EmbeddingSet, truth: &LabelAssignment) -> Result<AblationTable> {
    cfg.validate().map_err(|err| err.in_stage("config"))?;
    truth.require_assigned().map_err(|err| err.in_stage("config"))?;
    if truth.len() != e.n() {
        return Err(Error::LengthMismatch {
            left: e.n(),
            right: truth.len(),
        }
        .in_stage("config"));
    }
    let mut rows = Vec::new();
    let classes = truth.num_clusters().min(e.n());
    let km = kmeans(e, classes, cfg.kmeans_max_iter, cfg.seed).map_err(|err| err.in_stage("kmeans"))?;
    rows.push(AblationRow {
        section: "method".into(),
        method: "KMEANS".into(),
        k: classes,
        nmi: nmi(&km.labels, truth).map_err(|err| err.in_stage("eval"))?,
        threshold: None,
        num_clusters: km.labels.num_clusters(),
        edge_precision: None,
    });

    let precision = |g: &SimilarityGraph, full: &SimilarityGraph| -> Result<Option<f64>> {
        Ok(edge_metrics(&g.edge_pairs(), &full.edge_pairs(), truth)?.precision)
    };
    let graph_for = |k: usize| {
        let mut opts = cfg.graph_options();
        opts.k = k.min(e.n().saturating_sub(1)).max(1);
        build_graph_with(e, &opts).map_err(|err| err.in_stage("graph"))
    };

    let g = graph_for(cfg.k_graph)?;
    let grid = cfg.threshold_grid.thresholds(cfg.k_graph);
    let full_precision = precision(&g, &g).map_err(|err| err.in_stage("eval"))?;
    let mut weighted_best = None;
    for method in [ScoringMethod::Product, ScoringMethod::Sum, ScoringMethod::Weighted] {
        let (v, t, labels) = sweep_thresholds(&g, method, &grid, truth).map_err(|err| err.in_stage("cluster"))?;
        info!("{method} at K={}: nmi {v:.4} @ {t:.3}", cfg.k_graph);
        rows.push(AblationRow {
            section: "method".into(),
            method: method.name().into(),
            k: cfg.k_graph,
            nmi: v,
            threshold: Some(t),
            num_clusters: labels.num_clusters(),
            edge_precision: full_precision,
        });
        if method == ScoringMethod::Weighted {
            weighted_best = Some((v, t, labels));
        }
    }
    let (w_nmi, w_thr, w_labels) = weighted_best.expect("weighted row computed");

    let refine_cfg = cfg.refine_config();
    let model = refine_cfg.init_model(e.d(), cfg.seed).map_err(|err| err.in_stage("gcn"))?;
    let out = refine(&g, e, &w_labels, &model, &refine_cfg).map_err(|err| err.in_stage("refine"))?;
    let (v, t, labels) = sweep_thresholds(&out.pruned, ScoringMethod::GcnWeighted, &grid, truth)
        .map_err(|err| err.in_stage("cluster"))?;
    info!("GCN_WEIGHTED at K={}: nmi {v:.4} @ {t:.3}", cfg.k_graph);
    rows.push(AblationRow {
        section: "method".into(),
        method: ScoringMethod::GcnWeighted.name().into(),
        k: cfg.k_graph,
        nmi: v,
        threshold: Some(t),
        num_clusters: labels.num_clusters(),
        edge_precision: precision(&out.pruned, &g).map_err(|err| err.in_stage("eval"))?,
    });

    for &k in &cfg.ablation_k {
        let (v, t, n, p) = if k == cfg.k_graph {
            (w_nmi, w_thr, w_labels.num_clusters(), full_precision)
        } else {
            let gk = graph_for(k)?;
            let (v, t, labels) = sweep_thresholds(&gk, ScoringMethod::Weighted, &cfg.threshold_grid.thresholds(k), truth)
                .map_err(|err| err.in_stage("cluster"))?;
            (v, t, labels.num_clusters(), precision(&gk, &gk).map_err(|err| err.in_stage("eval"))?)
        };
        info!("WEIGHTED at K={k}: nmi {v:.4} @ {t:.3}");
        rows.push(AblationRow {
            section: "k_sweep".into(),
            method: ScoringMethod::Weighted.name().into(),
            k,
            nmi: v,
            threshold: Some(t),
            num_clusters: n,
            edge_precision: p,
        });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthSpec};

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            k_graph: 10,
            score_threshold: 3.0,
            gcn_score_threshold: 3.0,
            gcn_dims: vec![8, 8],
            head_hidden: 8,
            k_sub: 8,
            n2: 15,
            epochs: 5,
            min_class_size: 5,
            iterations: 2,
            ablation_k: vec![5, 10],
            ..PipelineConfig::default()
        }
    }

    fn data(sigma: f64) -> (EmbeddingSet, LabelAssignment) {
        generate_synthetic(&SynthSpec {
            num_classes: 5,
            samples_per_class: 15,
            dim: 12,
            noise_sigma: sigma,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn zero_noise_pipeline_is_perfect_and_stable() {
        let (e, truth) = data(0.0);
        let run = run_pipeline(&small_cfg(), &e, Some(&truth)).unwrap();
        assert_eq!(run.report.iterations.len(), 3);
        for it in &run.report.iterations {
            assert_eq!(it.nmi, Some(1.0), "{it:?}");
        }
    }

    #[test]
    fn zero_iterations_reports_initial_only() {
        let (e, truth) = data(0.1);
        let cfg = PipelineConfig {
            iterations: 0,
            ..small_cfg()
        };
        let run = run_pipeline(&cfg, &e, Some(&truth)).unwrap();
        assert_eq!(run.report.iterations.len(), 1);
        assert_eq!(run.labels.len(), 1);
    }

    #[test]
    fn report_is_deterministic() {
        let (e, truth) = data(0.2);
        let a = run_pipeline(&small_cfg(), &e, Some(&truth)).unwrap();
        let b = run_pipeline(&small_cfg(), &e, Some(&truth)).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert!(a.report.to_text().starts_with("# Embeddings are fixed"));
    }

    #[test]
    fn bad_config_fails_in_config_stage() {
        let (e, _) = data(0.1);
        let cfg = PipelineConfig {
            k_graph: 0,
            ..small_cfg()
        };
        let err = run_pipeline(&cfg, &e, None).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "config", .. }), "{err}");
    }

    #[test]
    fn zero_noise_ablation_is_perfect() {
        let (e, truth) = data(0.0);
        let table = run_ablation(&small_cfg(), &e, &truth).unwrap();
        assert_eq!(table.rows.len(), 7);
        for r in &table.rows {
            assert_eq!(r.nmi, 1.0, "{r:?}");
        }
        let csv = table.to_csv();
        assert!(csv.starts_with("section,method,k,nmi"));
        assert_eq!(csv.lines().count(), 8);
        assert!(table.row("method", "GCN_WEIGHTED", 10).is_some());
    }
}
