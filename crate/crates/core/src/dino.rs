//! Self-distillation loss stack on plain vectors: temperature softmax,
//! cross-entropy, the multi-crop loss and the EMA teacher update, plus a toy
//! two-cluster training loop that exercises them end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `softmax(logits / tau)`, computed after subtracting the max logit.
pub fn temperature_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("temperature {tau} must be > 0")));
    }
    if logits.is_empty() {
        return Err(Error::InvalidParameter("softmax of an empty vector".into()));
    }
    if let Some(col) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| ((z - max) / tau).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|v| v / total).collect())
}

/// `-Σ p_t log p_s`, with `p_s` clamped below by [`PROB_FLOOR`].
pub fn cross_entropy(p_t: &[f64], p_s: &[f64]) -> Result<f64> {
    if p_t.len() != p_s.len() {
        return Err(Error::LengthMismatch {
            left: p_t.len(),
            right: p_s.len(),
        });
    }
    Ok(-p_t
        .iter()
        .zip(p_s)
        .map(|(&t, &s)| if t == 0.0 { 0.0 } else { t * s.max(PROB_FLOOR).ln() })
        .sum::<f64>())
}

/// Shannon entropy in nats; the lower bound of [`cross_entropy`] for fixed `p`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Divide by the number of (teacher, student) pairs.
    #[default]
    Mean,
    /// The bare double sum.
    Sum,
}

/// Multi-crop loss. `teacher_probs[t]` belongs to global crop `t`, and
/// `student_probs` lists every crop with the globals first, in the same order,
/// so pairs with the same index are the same crop and are skipped.
pub fn dino_loss(
    teacher_probs: &[Vec<f64>],
    student_probs: &[Vec<f64>],
    normalization: LossNormalization,
) -> Result<f64> {
    if teacher_probs.is_empty() {
        return Err(Error::InvalidParameter("no teacher (global) crops".into()));
    }
    if student_probs.len() < teacher_probs.len() {
        return Err(Error::LengthMismatch {
            left: teacher_probs.len(),
            right: student_probs.len(),
        });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (t, p_t) in teacher_probs.iter().enumerate() {
        for (s, p_s) in student_probs.iter().enumerate() {
            if s != t {
                total += cross_entropy(p_t, p_s)?;
                pairs += 1;
            }
        }
    }
    Ok(match normalization {
        LossNormalization::Sum => total,
        LossNormalization::Mean if pairs == 0 => 0.0,
        LossNormalization::Mean => total / pairs as f64,
    })
}

/// `teacher ← m · teacher + (1 − m) · student`, in place.
pub fn ema_update(teacher: &mut [f64], student: &[f64], momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::InvalidParameter(format!("momentum {momentum} outside [0, 1]")));
    }
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch {
            left: teacher.len(),
            right: student.len(),
        });
    }
    for (t, &s) in teacher.iter_mut().zip(student) {
        *t = momentum * *t + (1.0 - momentum) * s;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropBatch {
    pub global_crops: Vec<Vec<f64>>,
    pub local_crops: Vec<Vec<f64>>,
}

impl CropBatch {
    pub fn new(global_crops: Vec<Vec<f64>>, local_crops: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = global_crops.first() else {
            return Err(Error::InvalidParameter("a crop batch needs a global crop".into()));
        };
        let dim = first.len();
        if let Some(bad) = global_crops.iter().chain(&local_crops).find(|c| c.len() != dim) {
            return Err(Error::LengthMismatch {
                left: dim,
                right: bad.len(),
            });
        }
        Ok(Self {
            global_crops,
            local_crops,
        })
    }

    pub fn dim(&self) -> usize {
        self.global_crops[0].len()
    }

    /// Globals first, then locals.
    pub fn all_crops(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.global_crops.iter().chain(&self.local_crops)
    }
}

/// Linear map from features to `K` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// Row-major `K x D`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    dim: usize,
}

impl ProjectionHead {
    pub fn new(dim: usize, outputs: usize, seed: u64) -> Result<Self> {
        if outputs < 2 || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "projection head needs K >= 2 outputs and a positive input size, got {outputs} x {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let weight = (0..outputs * dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            weight,
            bias: vec![0.0; outputs],
            dim,
        })
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch {
                left: self.dim,
                right: x.len(),
            });
        }
        Ok(self
            .weight
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    pub fn probs(&self, x: &[f64], tau: f64) -> Result<Vec<f64>> {
        temperature_softmax(&self.logits(x)?, tau)
    }

    /// Weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.weight.len() + self.bias.len() {
            return Err(Error::LengthMismatch {
                left: self.weight.len() + self.bias.len(),
                right: values.len(),
            });
        }
        let (w, b) = values.split_at(self.weight.len());
        self.weight.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DinoDemoConfig {
    pub dim: usize,
    pub outputs: usize,
    /// Samples per toy cluster.
    pub samples: usize,
    pub global_crops: usize,
    pub local_crops: usize,
    pub global_noise: f64,
    pub local_noise: f64,
    pub teacher_temperature: f64,
    pub student_temperature: f64,
    pub momentum: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub normalization: LossNormalization,
    pub seed: u64,
}

impl Default for DinoDemoConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            outputs: 4,
            samples: 16,
            global_crops: 2,
            local_crops: 4,
            global_noise: 0.05,
            local_noise: 0.2,
            teacher_temperature: 0.04,
            student_temperature: 0.1,
            momentum: 0.9,
            learning_rate: 0.05,
            epochs: 30,
            normalization: LossNormalization::Mean,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DinoDemoReport {
    /// Mean loss over samples, evaluated before each epoch's updates, plus
    /// one final evaluation after training.
    pub loss_trace: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn crop(x: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(x.iter().map(|&v| v + noise.sample(rng)).collect())
}

fn batch_loss(
    student: &ProjectionHead,
    teacher: &ProjectionHead,
    batch: &CropBatch,
    cfg: &DinoDemoConfig,
) -> Result<f64> {
    let t: Vec<Vec<f64>> = batch
        .global_crops
        .iter()
        .map(|c| teacher.probs(c, cfg.teacher_temperature))
        .collect::<Result<_>>()?;
    let s: Vec<Vec<f64>> = batch
        .all_crops()
        .map(|c| student.probs(c, cfg.student_temperature))
        .collect::<Result<_>>()?;
    dino_loss(&t, &s, cfg.normalization)
}

/// Gradient of the batch loss with respect to the student head. For one pair,
/// `∂CE/∂z = (p_s − p_t) / τ_s` since `p_t` sums to one.
fn student_gradient(
    student: &ProjectionHead,
    teacher: &ProjectionHead,
    batch: &CropBatch,
    cfg: &DinoDemoConfig,
) -> Result<Vec<f64>> {
    let t: Vec<Vec<f64>> = batch
        .global_crops
        .iter()
        .map(|c| teacher.probs(c, cfg.teacher_temperature))
        .collect::<Result<_>>()?;
    let crops: Vec<&Vec<f64>> = batch.all_crops().collect();
    let k = student.outputs();
    let d = student.dim();
    let mut grad = vec![0.0; k * d + k];
    let mut pairs = 0usize;
    for (si, c) in crops.iter().enumerate() {
        let p_s = student.probs(c, cfg.student_temperature)?;
        for (ti, p_t) in t.iter().enumerate() {
            if ti == si {
                continue;
            }
            pairs += 1;
            for o in 0..k {
                let dz = (p_s[o] - p_t[o]) / cfg.student_temperature;
                for (g, &x) in grad[o * d..(o + 1) * d].iter_mut().zip(c.iter()) {
                    *g += dz * x;
                }
                grad[k * d + o] += dz;
            }
        }
    }
    if cfg.normalization == LossNormalization::Mean && pairs > 0 {
        grad.iter_mut().for_each(|g| *g /= pairs as f64);
    }
    Ok(grad)
}

/// Trains a student head by gradient descent against an EMA teacher on crops
/// of two well-separated toy clusters.
pub fn run_dino_demo(cfg: &DinoDemoConfig) -> Result<DinoDemoReport> {
    if cfg.global_crops == 0 || cfg.samples == 0 {
        return Err(Error::InvalidParameter("dino demo needs a global crop and samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: [Vec<f64>; 2] = [
        (0..cfg.dim).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
        (0..cfg.dim).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect(),
    ];
    let mut batches = Vec::with_capacity(2 * cfg.samples);
    for s in 0..2 * cfg.samples {
        let base = crop(&centers[s % 2], cfg.global_noise, &mut rng)?;
        let globals = (0..cfg.global_crops)
            .map(|_| crop(&base, cfg.global_noise, &mut rng))
            .collect::<Result<_>>()?;
        let locals = (0..cfg.local_crops)
            .map(|_| crop(&base, cfg.local_noise, &mut rng))
            .collect::<Result<_>>()?;
        batches.push(CropBatch::new(globals, locals)?);
    }

    let mut student = ProjectionHead::new(cfg.dim, cfg.outputs, cfg.seed)?;
    let mut teacher = student.clone();
    let mean_loss = |student: &ProjectionHead, teacher: &ProjectionHead| -> Result<f64> {
        let mut total = 0.0;
        for b in &batches {
            total += batch_loss(student, teacher, b, cfg)?;
        }
        Ok(total / batches.len() as f64)
    };

    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        trace.push(mean_loss(&student, &teacher)?);
        for b in &batches {
            let grad = student_gradient(&student, &teacher, b, cfg)?;
            let mut params = student.params();
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            student.set_params(&params)?;
            if !student.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            let mut t = teacher.params();
            ema_update(&mut t, &student.params(), cfg.momentum)?;
            teacher.set_params(&t)?;
        }
    }
    trace.push(mean_loss(&student, &teacher)?);
    Ok(DinoDemoReport {
        initial_loss: trace[0],
        final_loss: *trace.last().expect("non-empty"),
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_examples() {
        assert_eq!(temperature_softmax(&[0.0, 0.0], 0.3).unwrap(), vec![0.5, 0.5]);
        let p = temperature_softmax(&[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(p[0], e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p[0], 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(p[1], 0.26894, epsilon = 1e-5);
        // Smoothing limit: at tau = 100 the gap to uniform is still ~2.5e-3.
        let p = temperature_softmax(&[1.0, 0.0], 100.0).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / (1.0 + (-0.01f64).exp()), epsilon = 1e-15);
        assert!((p[0] - 0.5).abs() < 3e-3);
        let p = temperature_softmax(&[1.0, 0.0], 1000.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-3);
        assert!(temperature_softmax(&[1.0], 0.0).is_err());
        assert!(temperature_softmax(&[1.0], -1.0).is_err());
        // Large logits do not overflow.
        let p = temperature_softmax(&[1000.0, 999.0], 0.01).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert_abs_diff_eq!(cross_entropy(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), ln2, epsilon = 1e-15);
        assert_abs_diff_eq!(cross_entropy(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), ln2, epsilon = 1e-15);
        assert!(cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).unwrap().abs() < 1e-9);
        assert!(cross_entropy(&[1.0], &[0.5, 0.5]).is_err());
        // Clamping keeps a zero student probability finite.
        let ce = cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ce, -PROB_FLOOR.ln(), epsilon = 1e-12);
    }

    #[test]
    fn dino_loss_examples() {
        let p = vec![0.2, 0.3, 0.5];
        // One global, one local, identical distributions.
        let l = dino_loss(&[p.clone()], &[p.clone(), p.clone()], LossNormalization::Mean).unwrap();
        assert_abs_diff_eq!(l, entropy(&p), epsilon = 1e-15);

        // Two globals, no locals: pairs (t0, s1) and (t1, s0).
        let t = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let s = vec![vec![0.7, 0.3], vec![0.2, 0.8]];
        let by_hand = -(0.9 * 0.2f64.ln() + 0.1 * 0.8f64.ln()) - (0.4 * 0.7f64.ln() + 0.6 * 0.3f64.ln());
        let sum = dino_loss(&t, &s, LossNormalization::Sum).unwrap();
        assert_abs_diff_eq!(sum, by_hand, epsilon = 1e-12);
        assert_abs_diff_eq!(dino_loss(&t, &s, LossNormalization::Mean).unwrap(), by_hand / 2.0, epsilon = 1e-12);

        let one_hot = vec![1.0, 0.0];
        let l = dino_loss(&[one_hot.clone()], &vec![one_hot.clone(); 4], LossNormalization::Mean).unwrap();
        assert!(l.abs() < 1e-9);
        assert!(dino_loss(&[], &[one_hot], LossNormalization::Mean).is_err());
    }

    #[test]
    fn ema_examples() {
        let mut t = vec![0.0, 5.0];
        ema_update(&mut t, &[1.0, -1.0], 0.0).unwrap();
        assert_eq!(t, vec![1.0, -1.0]);
        let mut t = vec![0.0, 5.0];
        ema_update(&mut t, &[1.0, -1.0], 1.0).unwrap();
        assert_eq!(t, vec![0.0, 5.0]);
        let mut t = vec![0.0];
        ema_update(&mut t, &[1.0], 0.9).unwrap();
        assert_abs_diff_eq!(t[0], 0.1, epsilon = 1e-15);
        assert!(ema_update(&mut t, &[1.0, 2.0], 0.5).is_err());
        assert!(ema_update(&mut t, &[1.0], 1.5).is_err());
    }

    #[test]
    fn crop_batch_validation() {
        assert!(CropBatch::new(vec![], vec![vec![1.0]]).is_err());
        assert!(CropBatch::new(vec![vec![1.0, 2.0]], vec![vec![1.0]]).is_err());
        let b = CropBatch::new(vec![vec![1.0, 2.0]], vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(b.all_crops().count(), 2);
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let cfg = DinoDemoConfig::default();
        let student = ProjectionHead::new(3, 3, 1).unwrap();
        let teacher = ProjectionHead::new(3, 3, 2).unwrap();
        let batch = CropBatch::new(
            vec![vec![0.3, -0.2, 0.5], vec![0.1, 0.4, -0.3]],
            vec![vec![-0.2, 0.2, 0.2]],
        )
        .unwrap();
        let grad = student_gradient(&student, &teacher, &batch, &cfg).unwrap();
        let params = student.params();
        let eps = 1e-6;
        for k in 0..params.len() {
            let mut probe = student.clone();
            let mut p = params.clone();
            p[k] += eps;
            probe.set_params(&p).unwrap();
            let up = batch_loss(&probe, &teacher, &batch, &cfg).unwrap();
            p[k] -= 2.0 * eps;
            probe.set_params(&p).unwrap();
            let down = batch_loss(&probe, &teacher, &batch, &cfg).unwrap();
            let numeric = (up - down) / (2.0 * eps);
            assert!((numeric - grad[k]).abs() < 1e-5 * numeric.abs().max(1.0), "{k}: {numeric} vs {}", grad[k]);
        }
    }

    #[test]
    fn demo_reduces_loss() {
        let r = run_dino_demo(&DinoDemoConfig::default()).unwrap();
        assert!(r.final_loss < r.initial_loss, "{r:?}");
        assert_eq!(r.loss_trace.len(), DinoDemoConfig::default().epochs + 1);
        assert_eq!(run_dino_demo(&DinoDemoConfig::default()).unwrap(), r);
    }

    #[test]
    fn demo_edge_cases() {
        let flat = run_dino_demo(&DinoDemoConfig {
            learning_rate: 0.0,
            ..DinoDemoConfig::default()
        })
        .unwrap();
        assert!(flat.loss_trace.windows(2).all(|w| w[0] == w[1]));
        let none = run_dino_demo(&DinoDemoConfig {
            epochs: 0,
            ..DinoDemoConfig::default()
        })
        .unwrap();
        assert_eq!(none.loss_trace.len(), 1);
        assert_eq!(none.initial_loss, none.final_loss);
    }
}
