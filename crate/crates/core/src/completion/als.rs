//! Plain alternating least squares on the observed entries: every row of
//! `A` and of `B` is its own ridge regression.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{prepare, FitConfig, FitResult};
use crate::dense::{cholesky_cost, cholesky_in_place, cholesky_solve, svd_of_product};
use crate::diagnostics::{training_loss, IterTrace, TraceRow};
use crate::error::{Error, Result};
use crate::soft_svd::{cleanup, frobenius_delta, pad_factors, random_orthonormal};
use crate::splr::{with_threads, Exec, FactorPair, ObservedMatrix, SplrMatrix};

const BLOCK_ROWS: usize = 64;

pub fn fit_als(x: &ObservedMatrix, cfg: &FitConfig) -> Result<FitResult> {
    with_threads(cfg.threads, |exec| run(x, cfg, None, exec))?
}

/// Solves, for each output row `t`,
/// `min_β ½ Σ_{p ∈ rows(t)} (x_p − design[other_p] · β)² + λ/2 ‖β‖²`.
/// Returns the new rows and the total ridge gap measured from `old`.
#[allow(clippy::too_many_arguments)]
fn ridge_rows<P, It>(
    nrows: usize,
    positions: P,
    other: &[usize],
    values: &[f64],
    design: &Array2<f64>,
    old: &Array2<f64>,
    lambda: f64,
    exec: &Exec,
) -> Result<(Array2<f64>, f64)>
where
    P: Fn(usize) -> It + Sync,
    It: Iterator<Item = usize>,
{
    let r = design.ncols();
    let design = design.as_standard_layout();
    let ds = design.as_slice().expect("standard layout");
    let old = old.as_standard_layout();
    let os = old.as_slice().expect("standard layout");
    let failed = AtomicBool::new(false);
    let body = |t: usize, out_row: &mut [f64], gap: &mut f64| {
        let mut g = vec![0.0; r * r];
        let mut rhs = vec![0.0; r];
        for p in positions(t) {
            let dv = &ds[other[p] * r..(other[p] + 1) * r];
            let xv = values[p];
            for a in 0..r {
                rhs[a] += xv * dv[a];
                for b in 0..=a {
                    g[a * r + b] += dv[a] * dv[b];
                }
            }
        }
        for a in 0..r {
            g[a * r + a] += lambda;
        }
        if cholesky_in_place(&mut g, r).is_err() {
            failed.store(true, Ordering::Relaxed);
            return;
        }
        cholesky_solve(&g, r, &mut rhs);
        out_row.copy_from_slice(&rhs);
        // ½ eᵀ (G + λI) e = ½ ‖Lᵀ e‖².
        let old_row = &os[t * r..(t + 1) * r];
        let mut s = 0.0;
        for i in 0..r {
            let mut y = 0.0;
            for k in i..r {
                y += g[k * r + i] * (old_row[k] - rhs[k]);
            }
            s += y * y;
        }
        *gap = 0.5 * s;
    };
    let mut out = Array2::zeros((nrows, r));
    let mut gaps = vec![0.0; nrows];
    if r > 0 {
        let out_s = out.as_slice_mut().expect("fresh array");
        if exec.is_parallel() {
            out_s
                .par_chunks_mut(BLOCK_ROWS * r)
                .zip(gaps.par_chunks_mut(BLOCK_ROWS))
                .enumerate()
                .for_each(|(blk, (chunk, gchunk))| {
                    for (k, (row, gap)) in chunk.chunks_mut(r).zip(gchunk.iter_mut()).enumerate() {
                        body(blk * BLOCK_ROWS + k, row, gap);
                    }
                });
        } else {
            for (t, (row, gap)) in out_s.chunks_mut(r).zip(gaps.iter_mut()).enumerate() {
                body(t, row, gap);
            }
        }
    }
    if failed.load(Ordering::Relaxed) {
        return Err(Error::InvalidConfig("ALS ridge system not positive definite".into()));
    }
    let nnz = values.len() as u64;
    let r64 = r as u64;
    exec.count(nnz * (r64 * (r64 + 1) / 2 + r64) + nrows as u64 * (cholesky_cost(r) + r64 * r64));
    Ok((out, gaps.iter().sum()))
}

fn sq_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn run(x: &ObservedMatrix, cfg: &FitConfig, lmax: Option<f64>, exec: &Exec) -> Result<FitResult> {
    let start = Instant::now();
    let lmax = match prepare(x, cfg, lmax, start, exec)? {
        Ok(l) => l,
        Err(zero) => return Ok(zero),
    };
    let lambda = cfg.lambda;
    let (m, n) = (x.nrows(), x.ncols());
    let (mut a, mut b) = match &cfg.warm_start {
        Some(w) => {
            let f = pad_factors(w, cfg.rank, cfg.seed)?;
            (f.a(), f.b())
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (random_orthonormal(m, cfg.rank, &mut rng)?, Array2::zeros((n, cfg.rank)))
        }
    };
    let pattern = x.pattern().clone();
    let evaluate = |a: &Array2<f64>, b: &Array2<f64>| -> Result<(f64, f64, FactorPair)> {
        let loss = training_loss(x, a.view(), b.view(), exec)?;
        let fp = svd_of_product(a.view(), b.view())?;
        exec.count(((m + n) * cfg.rank * cfg.rank * 3) as u64);
        let f = loss + 0.5 * lambda * (sq_norm(a) + sq_norm(b));
        let h = loss + lambda * fp.nuclear_norm();
        Ok((f, h, fp))
    };

    let mut trace = IterTrace::new();
    let (f0, h0, mut model) = evaluate(&a, &b)?;
    trace.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        f: f0,
        h: h0,
        frob_delta: f64::NAN,
        eta: f64::NAN,
        rank: model.rank_estimate(),
        flops: exec.ops(),
    });
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter {
        let (b_new, gap_b) = ridge_rows(
            n,
            |j| pattern.col_positions(j).iter().copied(),
            pattern.rows(),
            x.values(),
            &a,
            &b,
            lambda,
            exec,
        )?;
        b = b_new;
        let (a_new, gap_a) = ridge_rows(
            m,
            |i| pattern.row_range(i),
            pattern.cols(),
            x.values(),
            &b,
            &a,
            lambda,
            exec,
        )?;
        a = a_new;
        let (f, h, fp) = evaluate(&a, &b)?;
        let delta = frobenius_delta(&model, &fp)?;
        trace.push(TraceRow {
            iter,
            seconds: start.elapsed().as_secs_f64(),
            f,
            h,
            frob_delta: delta,
            eta: gap_a + gap_b,
            rank: fp.rank_estimate(),
            flops: exec.ops(),
        });
        model = fp;
        iterations = iter;
        if delta <= cfg.tol {
            converged = true;
            break;
        }
    }
    let factors = if cfg.final_cleanup {
        let xstar = SplrMatrix::from_residual(x, a.view(), b.view(), exec)?;
        let cleaned = cleanup(&xstar, &model, lambda, exec)?;
        let ud = crate::splr::scale_columns(&cleaned.u, cleaned.d.iter().copied());
        let h = training_loss(x, ud.view(), cleaned.v.view(), exec)? + lambda * cleaned.nuclear_norm();
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
