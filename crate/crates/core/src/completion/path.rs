//! Regularization path: a decreasing λ sequence, each fit warm-started
//! from the previous solution with a few spare dimensions.

use super::{fit_in, lambda_max_in, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::splr::{with_threads, ObservedMatrix};

/// Highest and lowest automatic λ as fractions of `λ_max`.
const AUTO_HI: f64 = 0.95;
const AUTO_LO: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSpec {
    List(Vec<f64>),
    /// `K` values log-spaced from `0.95 λ_max` down to `0.05 λ_max`.
    Auto(usize),
}

/// `k` log-spaced values in `[0.05 λ_max, 0.95 λ_max]`, largest first.
pub fn auto_lambdas(lmax: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![AUTO_HI * lmax],
        _ => {
            let (hi, lo) = (AUTO_HI.ln(), AUTO_LO.ln());
            (0..k)
                .map(|i| lmax * (hi + (lo - hi) * i as f64 / (k - 1) as f64).exp())
                .collect()
        }
    }
}

fn check_list(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::EmptyLambdaList);
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "path lambdas must be finite and > 0, got {bad}"
        )));
    }
    if let Some(w) = lambdas.windows(2).find(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig(format!(
            "path lambdas must be strictly decreasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Fits every λ of the path. `base_cfg.rank` is the operating rank of the
/// first fit; later fits use the previous solution rank plus
/// `rank_increment`, capped at `min(m, n)`.
pub fn fit_path(
    x: &ObservedMatrix,
    base_cfg: &FitConfig,
    spec: &LambdaSpec,
    rank_increment: usize,
) -> Result<Vec<FitResult>> {
    let (m, n) = (x.nrows(), x.ncols());
    base_cfg.validate(m, n)?;
    with_threads(base_cfg.threads, |exec| {
        let lmax = lambda_max_in(x, exec)?;
        let lambdas = match spec {
            LambdaSpec::List(l) => l.clone(),
            LambdaSpec::Auto(0) => return Err(Error::EmptyLambdaList),
            LambdaSpec::Auto(k) => auto_lambdas(lmax, *k),
        };
        check_list(&lambdas)?;
        let cap = m.min(n);
        let mut fits: Vec<FitResult> = Vec::with_capacity(lambdas.len());
        for &lambda in &lambdas {
            let mut cfg = base_cfg.clone();
            cfg.lambda = lambda;
            if let Some(prev) = fits.last() {
                let q = prev.factors.nonzero_rank();
                cfg.rank = (q + rank_increment).clamp(1, cap);
                cfg.warm_start = (q > 0).then(|| prev.factors.truncated(q));
            }
            fits.push(fit_in(x, &cfg, Some(lmax), exec)?);
        }
        Ok(fits)
    })?
}
