use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gcnrefine::cluster::{select_reliable_classes, ScoringMethod};
use gcnrefine::dino::{run_dino_demo, DinoDemoConfig};
use gcnrefine::gcn::{build_training_subgraphs, infer_prune, refine, save_edge_report, train, GcnModel};
use gcnrefine::graph::{build_graph_with, Symmetrize};
use gcnrefine::pipeline::{new_run_dir, run_ablation, run_pipeline};
use gcnrefine::{
    cluster_by_threshold, edge_metrics, generate_synthetic, nmi, EmbeddingSet, Error, LabelAssignment,
    PipelineConfig, Result, SimilarityGraph, SynthSpec,
};

#[derive(Parser)]
#[command(name = "gcnrefine", version, about = "Pseudo-label refinement with similarity graphs and GCN edge pruning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override, repeatable: `--set key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic embedding set with ground-truth labels.
    Synth {
        #[arg(long, default_value_t = 100)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.17)]
        sigma: f64,
        /// Output directory for `embeddings.emb` and `labels.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Threshold clustering of a graph's common-neighbor scores.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        method: Option<ScoringMethod>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Gcn(GcnCommand),
    /// Select reliable classes, train a GCN, prune the graph and re-cluster.
    Refine {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Output directory for labels, pruned graph, model and edge report.
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Method comparison and K sweep against ground truth.
    Ablation {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Directory for `ablation.csv` and `ablation.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Toy self-distillation run; prints the loss trace.
    DinoDemo {
        /// JSON demo configuration (separate from the pipeline config).
        #[arg(long)]
        demo_config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Build the KNN similarity graph of an embedding set.
    Build {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        prune: Option<f64>,
        /// Keep only mutual nearest neighbors.
        #[arg(long)]
        mutual: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GcnCommand {
    /// Train the edge classifier on subgraphs of the most reliable classes.
    Train {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Prune a graph with a trained model.
    Infer {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        p_cut: Option<f64>,
        /// Pruned graph CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-edge probability CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Full iterated run into `<out>/run/<timestamp>-<seed>/`.
    Run {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// NMI between two label files.
    Nmi {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Precision and recall of a graph's edges against candidate edges.
    Edges {
        #[arg(long)]
        graph: PathBuf,
        /// Candidate graph; defaults to `--graph`.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let base = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let mut cfg = base.with_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);
    let cfg = load_config(&cli.common).map_err(stage("config"))?;
    match cli.command {
        Command::Synth {
            classes,
            per_class,
            dim,
            sigma,
            out,
        } => {
            let spec = SynthSpec {
                num_classes: classes,
                samples_per_class: per_class,
                dim,
                noise_sigma: sigma,
                seed: cfg.seed,
            };
            let (e, labels) = generate_synthetic(&spec).map_err(stage("synth"))?;
            ensure_dir(&out).map_err(stage("synth"))?;
            e.save(out.join("embeddings.emb")).map_err(stage("synth"))?;
            labels.save(out.join("labels.csv")).map_err(stage("synth"))?;
            println!("wrote {} x {} embeddings to {}", e.n(), e.d(), out.display());
        }
        Command::Graph(GraphCommand::Build {
            embeddings,
            k,
            prune,
            mutual,
            out,
        }) => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let mut opts = cfg.graph_options();
            opts.k = k.unwrap_or(opts.k);
            opts.prune_threshold = prune.unwrap_or(opts.prune_threshold);
            if mutual {
                opts.symmetrize = Symmetrize::Mutual;
            }
            let g = build_graph_with(&e, &opts).map_err(stage("graph"))?;
            g.save(&out).map_err(stage("graph"))?;
            println!("{} nodes, {} edges", g.n(), g.num_edges());
        }
        Command::Cluster {
            embeddings,
            graph,
            method,
            threshold,
            out,
        } => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let g = SimilarityGraph::load(&graph, e.n()).map_err(stage("load"))?;
            let labels = cluster_by_threshold(
                &g,
                method.unwrap_or(cfg.scoring_method),
                threshold.unwrap_or(cfg.score_threshold),
            );
            labels.save(&out).map_err(stage("cluster"))?;
            println!("{} clusters", labels.num_clusters());
        }
        Command::Gcn(GcnCommand::Train {
            embeddings,
            graph,
            labels,
            out,
        }) => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let g = SimilarityGraph::load(&graph, e.n()).map_err(stage("load"))?;
            let labels = LabelAssignment::load(&labels).map_err(stage("load"))?;
            let rc = cfg.refine_config();
            let retained = select_reliable_classes(
                &labels,
                &g,
                ScoringMethod::Weighted,
                rc.target_fraction,
                rc.min_class_size,
            )
            .map_err(stage("select"))?;
            let subgraphs = build_training_subgraphs(&e, &retained, &rc.train).map_err(stage("sample"))?;
            let model = rc.init_model(e.d(), cfg.seed).map_err(stage("gcn"))?;
            let outcome = train(&model, &subgraphs, &rc.train).map_err(stage("train"))?;
            let mut trained = outcome.model;
            trained.round_to_f32();
            trained.save(&out).map_err(stage("train"))?;
            for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
                println!("epoch {epoch} loss {loss:.6}");
            }
        }
        Command::Gcn(GcnCommand::Infer {
            embeddings,
            graph,
            model,
            p_cut,
            out,
            report,
        }) => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let g = SimilarityGraph::load(&graph, e.n()).map_err(stage("load"))?;
            let model = GcnModel::load(&model).map_err(stage("load"))?;
            let rc = cfg.refine_config();
            let (pruned, edges) = infer_prune(&model, &g, &e, p_cut.unwrap_or(rc.p_cut), rc.train.adjacency)
                .map_err(stage("infer"))?;
            pruned.save(&out).map_err(stage("infer"))?;
            if let Some(path) = report {
                save_edge_report(&edges, path).map_err(stage("infer"))?;
            }
            println!("kept {} of {} edges", pruned.num_edges(), g.num_edges());
        }
        Command::Refine {
            embeddings,
            graph,
            labels,
            out,
        } => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let g = SimilarityGraph::load(&graph, e.n()).map_err(stage("load"))?;
            let labels = LabelAssignment::load(&labels).map_err(stage("load"))?;
            let rc = cfg.refine_config();
            let model = rc.init_model(e.d(), cfg.seed).map_err(stage("gcn"))?;
            let outcome = refine(&g, &e, &labels, &model, &rc).map_err(stage("refine"))?;
            ensure_dir(&out).map_err(stage("refine"))?;
            outcome.labels.save(out.join("labels.csv")).map_err(stage("refine"))?;
            outcome.pruned.save(out.join("graph_pruned.csv")).map_err(stage("refine"))?;
            if let Some(m) = &outcome.model {
                m.save(out.join("gcn.bin")).map_err(stage("refine"))?;
                save_edge_report(&outcome.edge_report, out.join("edges.csv")).map_err(stage("refine"))?;
            }
            println!(
                "{} clusters, {} of {} edges kept",
                outcome.labels.num_clusters(),
                outcome.pruned.num_edges(),
                g.num_edges()
            );
        }
        Command::Pipeline(PipelineCommand::Run { embeddings, truth, out }) => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let truth = truth
                .map(|p| LabelAssignment::load(&p))
                .transpose()
                .map_err(stage("load"))?;
            let run = run_pipeline(&cfg, &e, truth.as_ref())?;
            let dir = new_run_dir(&out, cfg.seed).map_err(stage("write"))?;
            run.write_to(&dir).map_err(stage("write"))?;
            print!("{}", run.report.to_text());
            println!("run directory: {}", dir.display());
        }
        Command::Ablation { embeddings, truth, out } => {
            let e = EmbeddingSet::load(&embeddings).map_err(stage("load"))?;
            let truth = LabelAssignment::load(&truth).map_err(stage("load"))?;
            let table = run_ablation(&cfg, &e, &truth)?;
            ensure_dir(&out).map_err(stage("write"))?;
            write_text(&out.join("ablation.csv"), &table.to_csv()).map_err(stage("write"))?;
            write_text(&out.join("ablation.txt"), &table.to_text()).map_err(stage("write"))?;
            print!("{}", table.to_text());
        }
        Command::DinoDemo {
            demo_config,
            epochs,
            learning_rate,
        } => {
            let mut demo = match demo_config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
                        .map_err(stage("config"))?;
                    serde_json::from_str::<DinoDemoConfig>(&text)
                        .map_err(|e| Error::Config(e.to_string()))
                        .map_err(stage("config"))?
                }
                None => DinoDemoConfig::default(),
            };
            demo.seed = cfg.seed;
            demo.epochs = epochs.unwrap_or(demo.epochs);
            demo.learning_rate = learning_rate.unwrap_or(demo.learning_rate);
            let report = run_dino_demo(&demo).map_err(stage("dino"))?;
            for (step, loss) in report.loss_trace.iter().enumerate() {
                println!("step {step} loss {loss:.6}");
            }
        }
        Command::Eval(EvalCommand::Nmi { pred, truth }) => {
            let pred = LabelAssignment::load(&pred).map_err(stage("load"))?;
            let truth = LabelAssignment::load(&truth).map_err(stage("load"))?;
            println!("{:.6}", nmi(&pred, &truth).map_err(stage("eval"))?);
        }
        Command::Eval(EvalCommand::Edges {
            graph,
            candidates,
            truth,
        }) => {
            let truth = LabelAssignment::load(&truth).map_err(stage("load"))?;
            let g = SimilarityGraph::load(&graph, truth.len()).map_err(stage("load"))?;
            let c = match candidates {
                Some(p) => SimilarityGraph::load(&p, truth.len()).map_err(stage("load"))?,
                None => g.clone(),
            };
            let m = edge_metrics(&g.edge_pairs(), &c.edge_pairs(), &truth).map_err(stage("eval"))?;
            let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
            println!("precision {}", fmt(m.precision));
            println!("recall {}", fmt(m.recall));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                // Stage errors already include their source in the message.
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!("\n  caused by: {s}"));
                }
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
