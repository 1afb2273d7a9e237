//! Full-batch gradient descent on the edge loss, and a finite-difference
//! check of the analytic gradient.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcn::model::{Activations, EdgeTerm, GcnModel};
use crate::gcn::subgraph::{balance_weight, Subgraph, TrainConfig};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GcnModel,
    /// Mean pre-update loss over the subgraphs, one entry per epoch.
    pub loss_trace: Vec<f64>,
    pub used_subgraphs: usize,
    pub skipped_subgraphs: usize,
    pub neg_weight: f64,
}

/// Trains on a fixed list of subgraphs: each epoch takes one gradient step per
/// subgraph, in order. Subgraphs without both edge classes are skipped.
pub fn train(model: &GcnModel, subgraphs: &[Subgraph], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let usable: Vec<&Subgraph> = subgraphs
        .iter()
        .filter(|s| s.positives() > 0 && s.negatives() > 0)
        .collect();
    let skipped = subgraphs.len() - usable.len();
    if skipped > 0 {
        warn!("skipping {skipped} subgraph(s) lacking positive or negative edges");
    }
    if usable.is_empty() {
        return Err(Error::InvalidParameter(
            "no subgraph has both positive and negative edges".into(),
        ));
    }
    let neg_weight = cfg
        .neg_weight
        .unwrap_or_else(|| balance_weight(usable.iter().copied()));
    let batches: Vec<Vec<EdgeTerm>> = usable.iter().map(|s| s.terms(neg_weight)).collect();

    let mut model = model.clone();
    let mut params = model.params();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for (s, terms) in usable.iter().zip(&batches) {
            let (loss, grad) = model.loss_and_gradient(&s.a_hat, &s.features, terms)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            epoch_loss += loss;
            if cfg.learning_rate != 0.0 {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
                model.set_params(&params)?;
            }
        }
        trace.push(epoch_loss / usable.len() as f64);
    }
    if !model.is_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            learning_rate: cfg.learning_rate,
        });
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
        used_subgraphs: usable.len(),
        skipped_subgraphs: skipped,
        neg_weight,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU, where central
    /// differences are not meaningful.
    pub skipped_kinks: usize,
}

/// Gradients below this magnitude are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares [`GcnModel::backward`] with central differences.
pub fn gradient_check(model: &GcnModel, subgraph: &Subgraph, epsilon: f64) -> Result<GradCheckReport> {
    gradient_check_with(model, subgraph, epsilon, |m, s, act, terms| {
        m.backward(&s.a_hat, &s.features, act, terms)
    })
}

/// Same as [`gradient_check`] with a caller-supplied analytic gradient.
pub fn gradient_check_with<F>(
    model: &GcnModel,
    subgraph: &Subgraph,
    epsilon: f64,
    analytic: F,
) -> Result<GradCheckReport>
where
    F: Fn(&GcnModel, &Subgraph, &Activations, &[EdgeTerm]) -> Vec<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
    }
    let terms = subgraph.terms(subgraph.balance_weight());
    let act = model.forward(&subgraph.a_hat, &subgraph.features)?;
    let grad = analytic(model, subgraph, &act, &terms);
    let params = model.params();
    if grad.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, model has {} parameters",
            grad.len(),
            params.len()
        )));
    }

    let mut probe = model.clone();
    let mut eval = |values: &[f64]| -> Result<(f64, Vec<bool>)> {
        probe.set_params(values)?;
        let act = probe.forward(&subgraph.a_hat, &subgraph.features)?;
        Ok((probe.edge_loss(act.output(), &terms), probe.relu_mask(&act, &terms)))
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut shifted = params.clone();
    for k in 0..params.len() {
        shifted[k] = params[k] + epsilon;
        let (up, mask_up) = eval(&shifted)?;
        shifted[k] = params[k] - epsilon;
        let (down, mask_down) = eval(&shifted)?;
        shifted[k] = params[k];
        if mask_up != mask_down {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let abs = (numeric - grad[k]).abs();
        let rel = abs / numeric.abs().max(grad[k].abs()).max(GRAD_CHECK_FLOOR);
        report.max_absolute_error = report.max_absolute_error.max(abs);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingSet;
    use crate::gcn::subgraph::AdjacencyMode;
    use crate::gcn::model::grad_norm;
    use crate::synth::{generate_synthetic, SynthSpec};

    fn small_subgraph(seed: u64) -> Subgraph {
        let (e, l) = generate_synthetic(&SynthSpec {
            num_classes: 2,
            samples_per_class: 5,
            dim: 6,
            noise_sigma: 0.4,
            seed,
        })
        .unwrap();
        Subgraph::from_embeddings(
            (0..10).collect(),
            &e,
            l.labels().to_vec(),
            4,
            -1.0,
            AdjacencyMode::default(),
        )
        .unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let s = small_subgraph(1);
        let m = GcnModel::new(&[6, 5, 4], 2).unwrap();
        let r = gradient_check(&m, &s, 1e-4).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        assert!(r.checked > m.num_params() / 2);
    }

    #[test]
    fn hidden_head_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let s = small_subgraph(10 + seed);
            let m = GcnModel::with_head(&[6, 5, 4], 7, seed).unwrap();
            let r = gradient_check(&m, &s, 1e-4).unwrap();
            assert!(r.max_relative_error < 1e-4, "{r:?}");
            assert!(r.checked > m.num_params() / 2);
        }
    }

    #[test]
    fn all_zero_model_and_features_is_flat() {
        let mut s = small_subgraph(2);
        s.features.fill(0.0);
        let m = GcnModel::zeros(&[6, 4]).unwrap();
        let terms = s.terms(s.balance_weight());
        let act = m.forward(&s.a_hat, &s.features).unwrap();
        let grad = m.backward(&s.a_hat, &s.features, &act, &terms);
        assert!(grad_norm(&grad) < 1e-12);
        let r = gradient_check(&m, &s, 1e-4).unwrap();
        assert!(r.max_absolute_error < 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let s = small_subgraph(3);
        let m = GcnModel::new(&[6, 5, 4], 5).unwrap();
        let r = gradient_check_with(&m, &s, 1e-4, |m, s, act, terms| {
            let mut g = m.backward(&s.a_hat, &s.features, act, terms);
            for v in g.iter_mut().step_by(3) {
                *v *= 1.5;
            }
            g
        })
        .unwrap();
        assert!(r.max_relative_error > 1e-2, "{r:?}");
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let s = small_subgraph(4);
        let m = GcnModel::new(&[6, 4], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&m, &[s], &cfg).unwrap();
        assert_eq!(out.model, m);
        assert!(out.loss_trace.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.loss_trace.len(), 5);
    }

    #[test]
    fn training_reduces_loss() {
        let s = small_subgraph(6);
        let m = GcnModel::new(&[6, 8, 8], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let out = train(&m, &[s], &cfg).unwrap();
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
    }

    #[test]
    fn needs_mixed_edges() {
        let e = EmbeddingSet::from_rows(&[vec![1.0, 0.0], vec![0.96, 0.28], vec![0.8, 0.6]]).unwrap();
        let s = Subgraph::from_embeddings(vec![0, 1, 2], &e, vec![0, 0, 0], 2, -1.0, AdjacencyMode::default())
            .unwrap();
        let m = GcnModel::new(&[2, 2], 0).unwrap();
        assert!(train(&m, &[s], &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let s = small_subgraph(7);
        let m = GcnModel::new(&[6, 8], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e300,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &[s], &cfg), Err(Error::Divergence { .. })));
    }
}
