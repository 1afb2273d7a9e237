//! Synthetic embeddings with known class structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::labels::{ClusterId, LabelAssignment};

/// Parameters of a synthetic mixture: unit class centers on the sphere,
/// per-component Gaussian noise, then renormalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.samples_per_class == 0 || self.dim == 0 {
            return Err(Error::InvalidParameter(
                "num_classes, samples_per_class and dim must be positive".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma = {} must be finite and >= 0",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Draws a synthetic set. Samples are laid out class by class.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(EmbeddingSet, LabelAssignment)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;

    let mut centers = Vec::with_capacity(spec.num_classes);
    while centers.len() < spec.num_classes {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            centers.push(v.into_iter().map(|x| x / norm).collect::<Vec<_>>());
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let mut v: Vec<f64> = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
            let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            while norm < 1e-12 {
                v = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
                norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            }
            data.extend(v.iter().map(|x| (x / norm) as f32));
            labels.push(class as ClusterId);
        }
    }
    let emb = EmbeddingSet::from_flat(n, d, data)?;
    Ok((emb, LabelAssignment::new(labels)))
}
