//! Lloyd's k-means, used only as an evaluation baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::labels::{ClusterId, LabelAssignment};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: LabelAssignment,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    pub inertia: f64,
}

fn sq_dist(a: &[f32], c: &[f64]) -> f64 {
    a.iter()
        .zip(c)
        .map(|(&x, &y)| {
            let d = f64::from(x) - y;
            d * d
        })
        .sum()
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or `max_iter` is reached.
pub fn kmeans(e: &EmbeddingSet, k: usize, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    let n = e.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..={n}")));
    }
    let d = e.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let to_f64 = |row: &[f32]| row.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();

    let mut centroids = vec![to_f64(e.row(rng.random_range(0..n)))];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(e.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = to_f64(e.row(pick));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(e.row(i), &c));
        }
        centroids.push(c);
    }

    let mut assign = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let row = e.row(i);
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(row, &centroids[a]).total_cmp(&sq_dist(row, &centroids[b])))
                .expect("k >= 1");
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(e.row(i)) {
                *s += f64::from(v);
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let inertia = (0..n).map(|i| sq_dist(e.row(i), &centroids[assign[i]])).sum();
    let labels = LabelAssignment::new(assign.iter().map(|&c| c as ClusterId).collect()).compact();
    Ok(KMeansResult {
        labels,
        centroids,
        iterations,
        inertia,
    })
}
