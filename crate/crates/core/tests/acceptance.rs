//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use gcnrefine::cluster::score_all_edges;
use gcnrefine::dino::{cross_entropy, ema_update, entropy, run_dino_demo, temperature_softmax, DinoDemoConfig};
use gcnrefine::graph::build_graph_with;
use gcnrefine::pipeline::sweep_thresholds;
use gcnrefine::gcn::{gradient_check, AdjacencyMode, GcnModel, Subgraph};
use gcnrefine::{
    knn_search, nmi, run_ablation, run_pipeline, AblationTable, ClusterId, LabelAssignment, PipelineConfig,
    ScoringMethod,
};
use rand::seq::SliceRandom;
use rand::Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pts(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.2}", 100.0 * x)).collect();
    format!("[{}]", parts.join(" "))
}

struct Benchmark {
    tables: Vec<AblationTable>,
    elapsed: Duration,
}

fn run_benchmark() -> Benchmark {
    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let tables = SEEDS
        .iter()
        .map(|&seed| {
            let (e, truth) = benchmark(seed);
            run_ablation(&PipelineConfig { seed, ..cfg.clone() }, &e, &truth).expect("ablation runs")
        })
        .collect();
    Benchmark {
        tables,
        elapsed: start.elapsed(),
    }
}

fn method_nmi(b: &Benchmark, method: &str) -> Vec<f64> {
    let k = PipelineConfig::default().k_graph;
    b.tables.iter().map(|t| t.row("method", method, k).unwrap().nmi).collect()
}

/// Graph construction plus the three threshold sweeps, timed on their own.
fn time_method_comparison(b: &Benchmark) -> (Duration, bool) {
    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let mut consistent = true;
    for (&seed, table) in SEEDS.iter().zip(&b.tables) {
        let (e, truth) = benchmark(seed);
        let g = build_graph_with(&e, &cfg.graph_options()).unwrap();
        let grid = cfg.threshold_grid.thresholds(cfg.k_graph);
        for method in [ScoringMethod::Product, ScoringMethod::Sum, ScoringMethod::Weighted] {
            let (v, _, _) = sweep_thresholds(&g, method, &grid, &truth).unwrap();
            consistent &= table.row("method", method.name(), cfg.k_graph).unwrap().nmi == v;
        }
    }
    (start.elapsed(), consistent)
}

fn c1_ordering(b: &Benchmark) -> Outcome {
    let (p, s, w) = (method_nmi(b, "PRODUCT"), method_nmi(b, "SUM"), method_nmi(b, "WEIGHTED"));
    let (elapsed, consistent) = time_method_comparison(b);
    let margin = 100.0 * (mean(&w) - mean(&p).max(mean(&s)));
    let baseline_ok = (0.85..=0.95).contains(&mean(&w));
    outcome(
        margin >= 0.5 && baseline_ok && consistent && elapsed < Duration::from_secs(120),
        format!(
            "mean NMI PRODUCT {:.2}, SUM {:.2}, WEIGHTED {:.2} (margin {margin:.2} pts, need >= 0.5); \
             WEIGHTED per seed {}; 5-seed comparison time {:.1}s",
            100.0 * mean(&p),
            100.0 * mean(&s),
            100.0 * mean(&w),
            pts(&w),
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_refinement(b: &Benchmark) -> Outcome {
    let (w, g) = (method_nmi(b, "WEIGHTED"), method_nmi(b, "GCN_WEIGHTED"));
    let gain = 100.0 * (mean(&g) - mean(&w));
    outcome(
        gain >= 0.3 && b.elapsed < Duration::from_secs(300),
        format!(
            "mean NMI WEIGHTED {:.2} -> GCN_WEIGHTED {:.2} (gain {gain:.2} pts, need >= 0.3); per seed {}; \
             full 5-seed ablation time {:.1}s",
            100.0 * mean(&w),
            100.0 * mean(&g),
            pts(&g),
            b.elapsed.as_secs_f64()
        ),
    )
}

fn c3_k_sweep(b: &Benchmark) -> Outcome {
    let ks = PipelineConfig::default().ablation_k;
    let by_k: Vec<(usize, f64)> = ks
        .iter()
        .map(|&k| {
            let v: Vec<f64> = b.tables.iter().map(|t| t.row("k_sweep", "WEIGHTED", k).unwrap().nmi).collect();
            (k, mean(&v))
        })
        .collect();
    let best = by_k.iter().map(|x| x.1).fold(f64::MIN, f64::max);
    let at_100 = by_k.iter().find(|x| x.0 == 100).map(|x| x.1).unwrap();
    let drop = 100.0 * (best - at_100);
    let listing: Vec<String> = by_k.iter().map(|(k, v)| format!("K={k}: {:.2}", 100.0 * v)).collect();
    outcome(
        drop >= 1.0,
        format!("{} (K=100 is {drop:.2} pts below best, need >= 1.0)", listing.join(", ")),
    )
}

fn c7_precision(b: &Benchmark) -> Outcome {
    let k = PipelineConfig::default().k_graph;
    let pairs: Vec<(f64, f64)> = b
        .tables
        .iter()
        .map(|t| {
            (
                t.row("method", "WEIGHTED", k).unwrap().edge_precision.unwrap(),
                t.row("method", "GCN_WEIGHTED", k).unwrap().edge_precision.unwrap(),
            )
        })
        .collect();
    let listing: Vec<String> = pairs.iter().map(|(a, b)| format!("{a:.4}->{b:.4}")).collect();
    outcome(
        pairs.iter().all(|(before, after)| after > before),
        format!("edge precision before->after pruning per seed: {}", listing.join(", ")),
    )
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(404);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut done = 0;
    while done < 20 {
        let n = rng.random_range(4..=20);
        let e = random_embeddings(&mut rng, n, 6);
        let labels: Vec<ClusterId> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let k = rng.random_range(1..n).min(6);
        let adjacency = AdjacencyMode {
            self_loops: true,
            weighted: rng.random_bool(0.5),
        };
        let s = Subgraph::from_embeddings((0..n).collect(), &e, labels, k, -1.0, adjacency).unwrap();
        if s.positives() == 0 || s.negatives() == 0 {
            continue;
        }
        let hidden = if done % 2 == 0 { 8 } else { 0 };
        let model = GcnModel::with_head(&[6, 10, 8], hidden, done as u64).unwrap();
        let r = gradient_check(&model, &s, 1e-4).unwrap();
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
        done += 1;
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && t < Duration::from_secs(30),
        format!(
            "max relative error {worst:.2e} over 20 subgraphs, {checked} parameters (need < 1e-4); {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn c5_scoring_oracle() -> Outcome {
    let mut rng = rng(505);
    let mut worst: f64 = 0.0;
    let mut edges = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let density = rng.random_range(0.01..0.3);
        let g = random_graph(&mut rng, n, density);
        for method in ScoringMethod::ALL {
            for s in score_all_edges(&g, method) {
                worst = worst.max((s.common_score - literal_edge_score(&g, s.i, s.j, method)).abs());
                edges += 1;
            }
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max |batched - literal| {worst:.2e} over {edges} scored edges on 50 graphs (need <= 1e-9)"),
    )
}

fn c6_knn() -> Outcome {
    let mut rng = rng(606);
    let mut pass = true;
    let mut notes = Vec::new();
    for n in [10, 100, 1000] {
        let e = random_embeddings(&mut rng, n, 16);
        for k in [1, 5, 50] {
            if k >= n {
                let rejected = knn_search(&e, k).is_err();
                pass &= rejected;
                notes.push(format!("n={n} k={k}: {}", if rejected { "rejected (k >= n)" } else { "NOT rejected" }));
                continue;
            }
            let same = knn_search(&e, k).unwrap() == brute_knn(&e, k);
            pass &= same;
            notes.push(format!("n={n} k={k}: {}", if same { "exact" } else { "MISMATCH" }));
        }
    }
    outcome(pass, notes.join(", "))
}

fn c8_nmi() -> Outcome {
    let mut rng = rng(808);
    let mut identity = true;
    let mut perm_worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..300);
        let a: Vec<ClusterId> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let b: Vec<ClusterId> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let la = LabelAssignment::new(a.clone());
        identity &= nmi(&la, &la).unwrap() == 1.0;
        let base = nmi(&la, &LabelAssignment::new(b.clone())).unwrap();
        let mut relabel: Vec<ClusterId> = (0..10).collect();
        relabel.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let pa = LabelAssignment::new(order.iter().map(|&i| relabel[a[i] as usize] + 100).collect());
        let pb = LabelAssignment::new(order.iter().map(|&i| b[i]).collect());
        perm_worst = perm_worst.max((nmi(&pa, &pb).unwrap() - base).abs());
    }
    let mut independent_worst: f64 = 0.0;
    for (p, q, m) in [(2, 2, 10), (3, 4, 5), (5, 7, 3), (10, 10, 2)] {
        let n = p * q * m;
        let a = LabelAssignment::new((0..n).map(|i| (i % p) as ClusterId).collect());
        let b = LabelAssignment::new((0..n).map(|i| ((i / p) % q) as ClusterId).collect());
        independent_worst = independent_worst.max(nmi(&a, &b).unwrap());
    }
    outcome(
        identity && independent_worst < 1e-9 && perm_worst < 1e-12,
        format!(
            "identity exact: {identity}; independent max {independent_worst:.1e} (need < 1e-9); \
             permutation max deviation {perm_worst:.1e} over 100 pairs"
        ),
    )
}

fn c9_dino() -> Outcome {
    let mut rng = rng(909);
    let (mut shift, mut sharpen, mut ce_gap, mut ce_eq) = (0.0f64, true, f64::MAX, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c = rng.random_range(-50.0..50.0);
        let tau = rng.random_range(0.05..2.0);
        let a = temperature_softmax(&z, tau).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let b = temperature_softmax(&shifted, tau).unwrap();
        shift = shift.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));

        let soft = temperature_softmax(&z, 2.0 * tau).unwrap();
        let max = |p: &[f64]| p.iter().copied().fold(0.0, f64::max);
        sharpen &= max(&a) >= max(&soft) - 1e-12 && entropy(&a) <= entropy(&soft) + 1e-12;

        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p_s = temperature_softmax(&s, 1.0).unwrap();
        ce_gap = ce_gap.min(cross_entropy(&a, &p_s).unwrap() - entropy(&a));
        ce_eq = ce_eq.max((cross_entropy(&a, &a).unwrap() - entropy(&a)).abs());
    }

    let m = 0.9;
    let student = vec![1.0, -2.0, 0.5];
    let mut teacher = vec![-1.0, 3.0, 0.0];
    let mut ratio_err: f64 = 0.0;
    for _ in 0..30 {
        let before: Vec<f64> = teacher.iter().zip(&student).map(|(t, s)| t - s).collect();
        ema_update(&mut teacher, &student, m).unwrap();
        for (i, (t, s)) in teacher.iter().zip(&student).enumerate() {
            ratio_err = ratio_err.max(((t - s) / before[i] - m).abs());
        }
    }
    let demo = run_dino_demo(&DinoDemoConfig::default()).unwrap();
    outcome(
        shift < 1e-12 && sharpen && ce_gap >= -1e-9 && ce_eq <= 1e-9 && ratio_err < 1e-12 && demo.final_loss < demo.initial_loss,
        format!(
            "shift dev {shift:.1e}; sharpening monotone: {sharpen}; min CE-H {ce_gap:.2e}; |CE(p,p)-H| {ce_eq:.1e}; \
             EMA ratio err {ratio_err:.1e}; demo loss {:.4} -> {:.4}",
            demo.initial_loss, demo.final_loss
        ),
    )
}

fn c10_determinism() -> Outcome {
    let (e, truth) = benchmark(10);
    let cfg = PipelineConfig {
        seed: 10,
        ..PipelineConfig::default()
    };
    let a = run_pipeline(&cfg, &e, Some(&truth)).unwrap().report.to_json();
    let b = run_pipeline(&cfg, &e, Some(&truth)).unwrap().report.to_json();
    outcome(
        a.as_bytes() == b.as_bytes(),
        format!("two pipeline runs, report.json {} bytes each, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!("criterion {id:>2} {name:<24} {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    let bench = run_benchmark();
    report(1, "scoring-method ordering", c1_ordering(&bench));
    report(2, "gcn refinement gain", c2_refinement(&bench));
    report(3, "k over-sizing", c3_k_sweep(&bench));
    report(4, "gradient check", c4_gradients());
    report(5, "edge scoring oracle", c5_scoring_oracle());
    report(6, "knn exactness", c6_knn());
    report(7, "edge pruning precision", c7_precision(&bench));
    report(8, "nmi sanity", c8_nmi());
    report(9, "dino loss suite", c9_dino());
    report(10, "determinism", c10_determinism());
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
