//! The original softImpute iteration: impute the missing entries with the
//! current model, then replace the model by the rank-restricted
//! soft-thresholded SVD of the imputed matrix.

use std::time::Instant;

use super::{prepare, FitConfig, FitResult};
use crate::diagnostics::{training_loss, IterTrace, TraceRow};
use crate::error::Result;
use crate::soft_svd::{cleanup, frobenius_delta, soft_svd_in, SoftSvdConfig};
use crate::splr::{scale_columns, with_threads, Exec, FactorPair, ObservedMatrix, SplrMatrix};

pub fn fit_softimpute(x: &ObservedMatrix, cfg: &FitConfig) -> Result<FitResult> {
    with_threads(cfg.threads, |exec| run(x, cfg, None, exec))?
}

/// `X̂ = P_Ω(X) + P_Ω^⊥(M)` in sparse-plus-low-rank form.
fn imputed(x: &ObservedMatrix, model: &FactorPair, exec: &Exec) -> Result<SplrMatrix> {
    let ud = scale_columns(&model.u, model.d.iter().copied());
    SplrMatrix::from_residual(x, ud.view(), model.v.view(), exec)
}

fn h_of(x: &ObservedMatrix, model: &FactorPair, lambda: f64, exec: &Exec) -> Result<f64> {
    let ud = scale_columns(&model.u, model.d.iter().copied());
    Ok(training_loss(x, ud.view(), model.v.view(), exec)? + lambda * model.nuclear_norm())
}

pub(crate) fn run(x: &ObservedMatrix, cfg: &FitConfig, lmax: Option<f64>, exec: &Exec) -> Result<FitResult> {
    let start = Instant::now();
    let lmax = match prepare(x, cfg, lmax, start, exec)? {
        Ok(l) => l,
        Err(zero) => return Ok(zero),
    };
    let lambda = cfg.lambda;
    let (m, n) = (x.nrows(), x.ncols());
    let mut model = match &cfg.warm_start {
        Some(w) => crate::soft_svd::pad_factors(w, cfg.rank, cfg.seed)?,
        None => FactorPair::zero(m, n),
    };
    let mut trace = IterTrace::new();
    let h0 = h_of(x, &model, lambda, exec)?;
    trace.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        f: h0,
        h: h0,
        frob_delta: f64::NAN,
        eta: f64::NAN,
        rank: model.rank_estimate(),
        flops: exec.ops(),
    });
    let inner = SoftSvdConfig {
        rank: cfg.rank,
        lambda,
        tol: cfg.inner_tol.unwrap_or(cfg.tol),
        max_iter: cfg.inner_max_iter,
        seed: cfg.seed,
        // Thresholding inside the loop would zero out components for good;
        // the ridge iterates keep them small but alive.
        final_cleanup: false,
        warm_start: None,
        zero_check: false,
        threads: 1,
    };
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter {
        let xhat = imputed(x, &model, exec)?;
        let warm = (model.rank() > 0 && model.d.iter().any(|&d| d > 0.0)).then(|| model.clone());
        let res = soft_svd_in(
            &xhat,
            &SoftSvdConfig {
                warm_start: warm,
                ..inner.clone()
            },
            exec,
        )?;
        let new_model = res.factors;
        let h = h_of(x, &new_model, lambda, exec)?;
        let delta = frobenius_delta(&model, &new_model)?;
        trace.push(TraceRow {
            iter,
            seconds: start.elapsed().as_secs_f64(),
            f: h,
            h,
            frob_delta: delta,
            eta: f64::NAN,
            rank: new_model.rank_estimate(),
            flops: exec.ops(),
        });
        model = new_model;
        iterations = iter;
        if delta <= cfg.tol {
            converged = true;
            break;
        }
    }
    let factors = if cfg.final_cleanup && model.rank() > 0 {
        let xhat = imputed(x, &model, exec)?;
        let cleaned = cleanup(&xhat, &model, lambda, exec)?;
        let h = h_of(x, &cleaned, lambda, exec)?;
        trace.push(TraceRow {
            iter: iterations + 1,
            seconds: start.elapsed().as_secs_f64(),
            f: h,
            h,
            frob_delta: frobenius_delta(&model, &cleaned)?,
            eta: f64::NAN,
            rank: cleaned.rank_estimate(),
            flops: exec.ops(),
        });
        cleaned
    } else {
        model
    };
    Ok(FitResult {
        algorithm: cfg.algorithm,
        lambda,
        factors,
        trace,
        steps: Vec::new(),
        converged,
        iterations,
        lambda_max: lmax,
    })
}
