//! Synthetic completion instances: Gaussian factor model plus noise, with
//! a uniformly random set of missing entries.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::splr::ObservedMatrix;

#[derive(Debug, Clone)]
pub struct Instance {
    pub observed: ObservedMatrix,
    /// Noise-free `GHᵀ`.
    pub truth: Array2<f64>,
    /// Missing positions with their noise-free values.
    pub held_out: Vec<(usize, usize, f64)>,
}

impl Instance {
    /// RMSE of `predict` against the held-out truth.
    pub fn test_rmse<F: Fn(usize, usize) -> f64>(&self, predict: F) -> f64 {
        if self.held_out.is_empty() {
            return 0.0;
        }
        let sse: f64 = self.held_out.iter().map(|&(i, j, t)| (predict(i, j) - t).powi(2)).sum();
        (sse / self.held_out.len() as f64).sqrt()
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// `X = GHᵀ + noise_sd·E` with iid standard normal `G`, `H`, `E`; exactly
/// `round(missing_frac·m·n)` entries are hidden.
pub fn simulate_instance(
    m: usize,
    n: usize,
    true_rank: usize,
    missing_frac: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Instance> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig("simulated matrix must be nonempty".into()));
    }
    if !(0.0..1.0).contains(&missing_frac) {
        return Err(Error::InvalidConfig(format!(
            "missing fraction must be in [0, 1), got {missing_frac}"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise sd must be finite and >= 0, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gaussian(m, true_rank, &mut rng);
    let h = gaussian(n, true_rank, &mut rng);
    let truth = g.dot(&h.t());
    let mut idx: Vec<usize> = (0..m * n).collect();
    idx.shuffle(&mut rng);
    let n_missing = ((missing_frac * (m * n) as f64).round() as usize).min(m * n - 1);
    let mut missing = vec![false; m * n];
    for &k in &idx[..n_missing] {
        missing[k] = true;
    }
    let mut triplets = Vec::with_capacity(m * n - n_missing);
    let mut held_out = Vec::with_capacity(n_missing);
    for i in 0..m {
        for j in 0..n {
            let t = truth[[i, j]];
            if missing[i * n + j] {
                held_out.push((i, j, t));
            } else {
                let e: f64 = StandardNormal.sample(&mut rng);
                triplets.push((i, j, t + noise_sd * e));
            }
        }
    }
    let observed = ObservedMatrix::from_triplets(m, n, triplets)?;
    Ok(Instance {
        observed,
        truth,
        held_out,
    })
}
