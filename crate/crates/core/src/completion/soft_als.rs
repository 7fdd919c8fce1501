//! softImpute-ALS: alternating ridge regressions against the imputed matrix
//! `X* = P_Ω(X) + P_Ω^⊥(ABᵀ)`, refreshed after every half-step, with the
//! factors put back into SVD form each time.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{prepare, FitConfig, FitResult};
use crate::dense::svd_skinny;
use crate::diagnostics::{IterTrace, StepStats, TraceRow};
use crate::error::Result;
use crate::soft_svd::{cleanup, frobenius_delta, pad_factors, random_orthonormal};
use crate::splr::{
    project_product, rank_estimate, scale_columns, sparse_mul_left, sparse_mul_right, with_threads, Exec, FactorPair,
    ObservedMatrix, SplrMatrix,
};

/// Measures of one half-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfStep {
    /// Ridge gap `½‖G(E)‖² + λ/2 ‖E‖²` with `E` the change of the updated
    /// factor and `G` the design.
    pub gap: f64,
    /// `‖E‖²`.
    pub step_sq: f64,
    /// `‖E Gᵀ‖²`.
    pub proj_sq: f64,
    /// Squared partial gradient of F before the update.
    pub grad_sq: f64,
    pub ell_lo: f64,
    pub ell_hi: f64,
}

/// Solver state: `A = U diag(√d_a)`, `B = V diag(√d_b)` with orthonormal
/// `U`, `V`, and the residual `P_Ω(X − ABᵀ)` on the observed entries.
///
/// After any half-step `d_a = d_b`, i.e. the pair is in SVD form. The cold
/// start is `A = U` (random orthonormal), `B = 0`.
pub struct SoftImputeAls<'a> {
    x: &'a ObservedMatrix,
    lambda: f64,
    u: Array2<f64>,
    da: Array1<f64>,
    v: Array2<f64>,
    db: Array1<f64>,
    resid: Vec<f64>,
    exec: &'a Exec,
}

impl<'a> SoftImputeAls<'a> {
    /// Cold start at operating rank `rank`.
    pub fn cold(x: &'a ObservedMatrix, rank: usize, lambda: f64, seed: u64, exec: &'a Exec) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_orthonormal(x.nrows(), rank, &mut rng)?;
        let v = random_orthonormal(x.ncols(), rank, &mut rng)?;
        let mut s = SoftImputeAls {
            x,
            lambda,
            u,
            da: Array1::ones(rank),
            v,
            db: Array1::zeros(rank),
            resid: Vec::new(),
            exec,
        };
        s.refresh_residual();
        Ok(s)
    }

    /// Warm start from a model, padded or truncated to `rank`.
    pub fn warm(
        x: &'a ObservedMatrix,
        prior: &FactorPair,
        rank: usize,
        lambda: f64,
        seed: u64,
        exec: &'a Exec,
    ) -> Result<Self> {
        let f = pad_factors(prior, rank, seed)?;
        let mut s = SoftImputeAls {
            x,
            lambda,
            u: f.u,
            da: f.d.clone(),
            v: f.v,
            db: f.d,
            resid: Vec::new(),
            exec,
        };
        s.refresh_residual();
        Ok(s)
    }

    pub fn a(&self) -> Array2<f64> {
        scale_columns(&self.u, self.da.iter().map(|x| x.sqrt()))
    }

    pub fn b(&self) -> Array2<f64> {
        scale_columns(&self.v, self.db.iter().map(|x| x.sqrt()))
    }

    /// Current `F(A, B)`.
    pub fn objective(&self) -> f64 {
        self.loss() + 0.5 * self.lambda * (self.da.sum() + self.db.sum())
    }

    /// `½‖P_Ω(X − ABᵀ)‖²`.
    pub fn loss(&self) -> f64 {
        0.5 * self.resid.iter().map(|r| r * r).sum::<f64>()
    }

    /// `H(ABᵀ)`; equals [`Self::objective`] in SVD form.
    pub fn nuclear_objective(&self) -> f64 {
        let prod: f64 = self.da.iter().zip(&self.db).map(|(a, b)| (a * b).sqrt()).sum();
        self.loss() + self.lambda * prod
    }

    /// The current product `ABᵀ` in SVD form (exact whenever the state is;
    /// at the cold start the product is zero).
    pub fn model(&self) -> FactorPair {
        let d = self.da.iter().zip(&self.db).map(|(a, b)| (a * b).sqrt()).collect();
        FactorPair::new_unchecked(self.u.clone(), d, self.v.clone())
    }

    fn refresh_residual(&mut self) {
        let w: Vec<f64> = self.da.iter().zip(&self.db).map(|(a, b)| (a * b).sqrt()).collect();
        let uw = scale_columns(&self.u, w);
        let fitted = project_product(self.x.pattern(), uw.view(), self.v.view(), self.exec);
        self.resid = self.x.values().iter().zip(&fitted).map(|(x, f)| x - f).collect();
    }

    /// Updates `B` by ridge regression of `X*ᵀ` on `A`, then rotates both
    /// factors into SVD form.
    pub fn b_step(&mut self) -> Result<HalfStep> {
        let pattern = self.x.pattern();
        let w = sparse_mul_left(pattern, &self.resid, self.u.view(), self.exec);
        let (upd, d, rot, stats) = half_step(w, &self.v, &self.db, &self.da, self.lambda, self.exec)?;
        self.u = self.u.dot(&rot);
        self.exec.count((self.u.nrows() * rot.nrows() * rot.ncols()) as u64);
        self.v = upd;
        self.da = d.clone();
        self.db = d;
        self.refresh_residual();
        Ok(stats)
    }

    /// Updates `A` by ridge regression of `X*` on `B`, then rotates.
    pub fn a_step(&mut self) -> Result<HalfStep> {
        let pattern = self.x.pattern();
        let w = sparse_mul_right(pattern, &self.resid, self.v.view(), self.exec);
        let (upd, d, rot, stats) = half_step(w, &self.u, &self.da, &self.db, self.lambda, self.exec)?;
        self.v = self.v.dot(&rot);
        self.exec.count((self.v.nrows() * rot.nrows() * rot.ncols()) as u64);
        self.u = upd;
        self.da = d.clone();
        self.db = d;
        self.refresh_residual();
        Ok(stats)
    }

    /// Imputed matrix at the current state.
    pub fn imputed(&self) -> SplrMatrix {
        let w: Vec<f64> = self.da.iter().zip(&self.db).map(|(a, b)| (a * b).sqrt()).collect();
        SplrMatrix::from_parts_unchecked(
            self.x.pattern().clone(),
            self.resid.clone(),
            scale_columns(&self.u, w),
            self.v.clone(),
        )
    }

    /// Soft-thresholded SVD of `X* V`.
    pub fn cleaned(&self) -> Result<FactorPair> {
        cleanup(&self.imputed(), &self.model(), self.lambda, self.exec)
    }
}

/// One ridge half-step. `w` is the sparse residual times the design basis;
/// the updated factor is `upd_basis diag(√upd_d)` and the design has Gram
/// matrix `diag(design_d)`.
///
/// Returns the new orthonormal basis of the updated side, the new `d`, the
/// rotation for the design basis, and the half-step measures.
/// Updated factor, new `d`, rotation of the fixed side, step statistics.
type HalfStepOut = (Array2<f64>, Array1<f64>, Array2<f64>, HalfStep);

fn half_step(
    mut w: Array2<f64>,
    upd_basis: &Array2<f64>,
    upd_d: &Array1<f64>,
    design_d: &Array1<f64>,
    lambda: f64,
    exec: &Exec,
) -> Result<HalfStepOut> {
    let r = w.ncols();
    let p = w.nrows();
    // Low-rank part of X*·design: upd_basis diag(√(d_upd d_design)).
    for k in 0..r {
        let c = (upd_d[k] * design_d[k]).sqrt();
        if c != 0.0 {
            w.column_mut(k).scaled_add(c, &upd_basis.column(k));
        }
    }
    // Ridge solution: tilde = w diag(√d/(d + λ)); current = upd diag(√d_upd).
    let mut col_sq = vec![0.0; r];
    for (k, sq) in col_sq.iter_mut().enumerate() {
        let ridge = design_d[k].sqrt() / (design_d[k] + lambda);
        let cur = upd_d[k].sqrt();
        *sq = w
            .column(k)
            .iter()
            .zip(upd_basis.column(k))
            .map(|(&wi, &ui)| {
                let e = cur * ui - ridge * wi;
                e * e
            })
            .sum();
    }
    exec.count((3 * p * r) as u64);
    let step_sq: f64 = col_sq.iter().sum();
    let proj_sq: f64 = col_sq.iter().zip(design_d).map(|(e, d)| e * d).sum();
    let grad_sq: f64 = col_sq.iter().zip(design_d).map(|(e, d)| e * (d + lambda).powi(2)).sum();
    let ell_lo = design_d.iter().copied().fold(f64::INFINITY, f64::min);
    let ell_hi = design_d.iter().copied().fold(0.0, f64::max);

    for (mut col, d) in w.axis_iter_mut(Axis(1)).zip(design_d) {
        col *= d / (d + lambda);
    }
    let svd = svd_skinny(w.view())?;
    exec.count((3 * p * r * r) as u64);
    Ok((
        svd.u,
        svd.s,
        svd.v,
        HalfStep {
            gap: 0.5 * proj_sq + 0.5 * lambda * step_sq,
            step_sq,
            proj_sq,
            grad_sq,
            ell_lo,
            ell_hi,
        },
    ))
}

pub fn fit_softimpute_als(x: &ObservedMatrix, cfg: &FitConfig) -> Result<FitResult> {
    with_threads(cfg.threads, |exec| run(x, cfg, None, exec))?
}

pub(crate) fn run(x: &ObservedMatrix, cfg: &FitConfig, lmax: Option<f64>, exec: &Exec) -> Result<FitResult> {
    let start = Instant::now();
    let lmax = match prepare(x, cfg, lmax, start, exec)? {
        Ok(l) => l,
        Err(zero) => return Ok(zero),
    };
    let lambda = cfg.lambda;
    let mut state = match &cfg.warm_start {
        Some(w) => SoftImputeAls::warm(x, w, cfg.rank, lambda, cfg.seed, exec)?,
        None => SoftImputeAls::cold(x, cfg.rank, lambda, cfg.seed, exec)?,
    };
    let mut trace = IterTrace::new();
    let mut f_prev = state.objective();
    trace.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        f: f_prev,
        h: state.nuclear_objective(),
        frob_delta: f64::NAN,
        eta: f64::NAN,
        rank: rank_estimate(state.model().d.as_slice().expect("contiguous")),
        flops: exec.ops(),
    });
    let mut steps = Vec::new();
    let mut model = state.model();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter {
        let hb = state.b_step()?;
        let f_half = state.objective();
        let ha = state.a_step()?;
        let f_after = state.objective();
        let new_model = state.model();
        let delta = frobenius_delta(&model, &new_model)?;
        let eta = hb.gap + ha.gap;
        steps.push(StepStats {
            eta,
            dnorm: hb.step_sq + ha.step_sq,
            dproj: hb.proj_sq + ha.proj_sq,
            grad_sq: hb.grad_sq + ha.grad_sq,
            ell_lo: hb.ell_lo.min(ha.ell_lo),
            ell_hi: hb.ell_hi.max(ha.ell_hi),
            f_before: f_prev,
            f_half,
            f_after,
        });
        trace.push(TraceRow {
            iter,
            seconds: start.elapsed().as_secs_f64(),
            f: f_after,
            h: state.nuclear_objective(),
            frob_delta: delta,
            eta,
            rank: new_model.rank_estimate(),
            flops: exec.ops(),
        });
        f_prev = f_after;
        model = new_model;
        iterations = iter;
        if delta <= cfg.tol {
            converged = true;
            break;
        }
    }
    let factors = if cfg.final_cleanup {
        let cleaned = state.cleaned()?;
        let h = crate::diagnostics::training_loss(
            x,
            scale_columns(&cleaned.u, cleaned.d.iter().copied()).view(),
            cleaned.v.view(),
            exec,
        )? + lambda * cleaned.nuclear_norm();
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
        steps,
        converged,
        iterations,
        lambda_max: lmax,
    })
}
