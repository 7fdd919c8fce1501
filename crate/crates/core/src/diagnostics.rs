//! Objectives, majorizer values, step-size measures, rate bounds and the
//! stationarity certificate.
//!
//! Everything here evaluates on the observed entries or on skinny factors
//! except the surrogate values, which are dense and refused beyond
//! [`DENSE_LIMIT`] entries.

use ndarray::{Array2, ArrayView2};

use crate::dense::{solve_right_spd, svd_of_product};
use crate::error::{mismatch, Error, Result};
use crate::soft_svd::{frobenius_delta, soft_svd_in, SoftSvdConfig};
use crate::splr::{project_product, scale_columns, Exec, FactorPair, LinearOperator, ObservedMatrix, SplrMatrix};

/// Largest `m · n` accepted by dense evaluations.
pub const DENSE_LIMIT: usize = 250_000;

pub(crate) fn check_dense(m: usize, n: usize) -> Result<()> {
    if m.saturating_mul(n) > DENSE_LIMIT {
        Err(Error::TooLarge {
            rows: m,
            cols: n,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// One row of an iteration trace. Row 0 is the starting point; row `k`
/// holds the iterate after `k` updates and, in `eta`, the proximity measure
/// of the transition into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub seconds: f64,
    pub f: f64,
    pub h: f64,
    pub frob_delta: f64,
    pub eta: f64,
    pub rank: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterTrace {
    pub rows: Vec<TraceRow>,
}

impl IterTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(self.rows.last().is_none_or(|last| last.iter < row.iter));
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f).collect()
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h).collect()
    }

    /// Largest increase between consecutive values (0 for a monotone trace).
    pub fn max_increase(values: &[f64]) -> f64 {
        values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Keeps every `every`-th row plus the first and last.
    pub fn thinned(&self, every: usize) -> IterTrace {
        if every <= 1 {
            return self.clone();
        }
        let n = self.rows.len();
        IterTrace {
            rows: self
                .rows
                .iter()
                .enumerate()
                .filter(|(k, _)| k % every == 0 || *k + 1 == n)
                .map(|(_, r)| *r)
                .collect(),
        }
    }
}

/// Step measures of one softImpute-ALS iteration, split over its two
/// half-steps, for the rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Sum of the two ridge gaps; lower bound on the objective decrease.
    pub eta: f64,
    /// `‖A − Ã‖² + ‖B − B̃‖²`.
    pub dnorm: f64,
    /// `‖(A − Ã) Bᵀ‖² + ‖A (B − B̃)ᵀ‖²` with the design used in each half.
    pub dproj: f64,
    /// Squared partial gradients of F at the start of each half-step.
    pub grad_sq: f64,
    /// Extreme eigenvalues of the Gram matrices of the two designs.
    pub ell_lo: f64,
    pub ell_hi: f64,
    /// F before, between and after the half-steps.
    pub f_before: f64,
    pub f_half: f64,
    pub f_after: f64,
}

/// `½ ‖P_Ω(X − A Bᵀ)‖²_F`.
pub fn training_loss(x: &ObservedMatrix, a: ArrayView2<f64>, b: ArrayView2<f64>, exec: &Exec) -> Result<f64> {
    check_factor_shapes(x, a, b)?;
    let fitted = project_product(x.pattern(), a, b, exec);
    Ok(0.5
        * x.values()
            .iter()
            .zip(&fitted)
            .map(|(v, f)| (v - f) * (v - f))
            .sum::<f64>())
}

fn check_factor_shapes(x: &ObservedMatrix, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.nrows() != x.nrows() || b.nrows() != x.ncols() || a.ncols() != b.ncols() {
        return Err(mismatch(
            "factor shapes",
            format!("{}xr and {}xr", x.nrows(), x.ncols()),
            format!("{:?} and {:?}", a.dim(), b.dim()),
        ));
    }
    Ok(())
}

fn sq_norm(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `F(A, B) = ½‖P_Ω(X − ABᵀ)‖² + λ/2 (‖A‖² + ‖B‖²)`.
pub fn objective_f(x: &ObservedMatrix, a: ArrayView2<f64>, b: ArrayView2<f64>, lambda: f64) -> Result<f64> {
    let loss = training_loss(x, a, b, &Exec::serial())?;
    Ok(loss + 0.5 * lambda * (sq_norm(a) + sq_norm(b)))
}

/// `H(M) = ½‖P_Ω(X − M)‖² + λ ‖M‖_*` for `M` in SVD form.
pub fn objective_h(x: &ObservedMatrix, model: &FactorPair, lambda: f64) -> Result<f64> {
    let ud = scale_columns(&model.u, model.d.iter().copied());
    let loss = training_loss(x, ud.view(), model.v.view(), &Exec::serial())?;
    Ok(loss + lambda * model.nuclear_norm())
}

/// `‖A Bᵀ‖_*` without forming the product.
pub fn nuclear_norm_of_product(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    Ok(svd_of_product(a, b)?.nuclear_norm())
}

/// Which factor a surrogate is a function of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Majorizer of `F` in one factor, anchored at `(A, B)`:
/// `Q_A(Z) = ½‖X* − Z Bᵀ‖² + λ/2 (‖Z‖² + ‖B‖²)` and symmetrically for `B`,
/// with `X* = P_Ω(X) + P_Ω^⊥(A Bᵀ)`. Dense; test scale only.
pub fn surrogate_q(
    z: ArrayView2<f64>,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    x: &ObservedMatrix,
    lambda: f64,
    side: Side,
) -> Result<f64> {
    check_dense(x.nrows(), x.ncols())?;
    check_factor_shapes(x, a, b)?;
    let expected = match side {
        Side::A => a.dim(),
        Side::B => b.dim(),
    };
    if z.dim() != expected {
        return Err(mismatch(
            "surrogate argument",
            format!("{expected:?}"),
            format!("{:?}", z.dim()),
        ));
    }
    let mut xstar = a.dot(&b.t());
    for (i, j, v) in x.entries() {
        xstar[[i, j]] = v;
    }
    let fit = match side {
        Side::A => z.dot(&b.t()),
        Side::B => a.dot(&z.t()),
    };
    let loss = 0.5 * (&xstar - &fit).iter().map(|e| e * e).sum::<f64>();
    let penalty = match side {
        Side::A => sq_norm(z) + sq_norm(b),
        Side::B => sq_norm(a) + sq_norm(z),
    };
    Ok(loss + 0.5 * lambda * penalty)
}

/// `‖E Gᵀ‖²_F` from the two `r × r` Gram matrices.
fn weighted_sq(e: ArrayView2<f64>, g: ArrayView2<f64>) -> f64 {
    let ee = e.t().dot(&e);
    let gg = g.t().dot(&g);
    (&ee * &gg).sum()
}

/// Proximity measure between `(A, B)` and its one-sweep update
/// `(A⁺, B⁺)` (A first):
/// `½(‖(A−A⁺)Bᵀ‖² + ‖A⁺(B−B⁺)ᵀ‖²) + λ/2 (‖A−A⁺‖² + ‖B−B⁺‖²)`.
pub fn eta(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    a_plus: ArrayView2<f64>,
    b_plus: ArrayView2<f64>,
    lambda: f64,
) -> Result<f64> {
    if a.dim() != a_plus.dim() || b.dim() != b_plus.dim() || a.ncols() != b.ncols() {
        return Err(mismatch(
            "eta",
            format!("{:?} and {:?}", a.dim(), b.dim()),
            format!("{:?} and {:?}", a_plus.dim(), b_plus.dim()),
        ));
    }
    let ea = &a - &a_plus;
    let eb = &b - &b_plus;
    let proj = weighted_sq(ea.view(), b) + weighted_sq(eb.view(), a_plus);
    Ok(0.5 * proj + 0.5 * lambda * (sq_norm(ea.view()) + sq_norm(eb.view())))
}

/// Both sides of the ridge-gap identity
/// `H(β) − H(β*) = ½‖M(β − β*)‖² + λ/2 ‖β − β*‖²`
/// for `H(β) = ½‖y − Mβ‖² + λ/2 ‖β‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeGap {
    /// Right-hand side.
    pub gap: f64,
    /// Left-hand side, from direct evaluation of `H`.
    pub objective_drop: f64,
    pub discrepancy: f64,
}

pub fn ridge_gap(
    design: ArrayView2<f64>,
    response: ArrayView2<f64>,
    lambda: f64,
    beta: ArrayView2<f64>,
    beta_star: ArrayView2<f64>,
) -> Result<RidgeGap> {
    let q = design.ncols();
    if response.nrows() != design.nrows() || beta.dim() != (q, response.ncols()) || beta_star.dim() != beta.dim() {
        return Err(mismatch(
            "ridge_gap",
            format!("design {:?}, response {:?}", design.dim(), response.dim()),
            format!("beta {:?}, beta* {:?}", beta.dim(), beta_star.dim()),
        ));
    }
    let h = |bt: ArrayView2<f64>| {
        let r = &response - &design.dot(&bt);
        0.5 * sq_norm(r.view()) + 0.5 * lambda * sq_norm(bt)
    };
    let objective_drop = h(beta) - h(beta_star);
    let diff = &beta - &beta_star;
    let gap = 0.5 * sq_norm(design.dot(&diff).view()) + 0.5 * lambda * sq_norm(diff.view());
    Ok(RidgeGap {
        gap,
        objective_drop,
        discrepancy: objective_drop - gap,
    })
}

/// `(MᵀM + λI)⁻¹ Mᵀ y`.
pub fn ridge_solution(design: ArrayView2<f64>, response: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    let g = design.t().dot(&design);
    let z = design.t().dot(&response);
    Ok(solve_right_spd(&z.t().to_owned(), &g, lambda)?.t().to_owned())
}

/// One exact alternating sweep on `F`:
/// `A⁺ = X* B (BᵀB + λI)⁻¹` with `X*` built from `(A, B)`, then
/// `B⁺ = X*ᵀ A⁺ (A⁺ᵀA⁺ + λI)⁻¹` with `X*` rebuilt from `(A⁺, B)`.
pub fn fast_als_sweep(
    x: &ObservedMatrix,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    lambda: f64,
    exec: &Exec,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_factor_shapes(x, a, b)?;
    let xstar = SplrMatrix::from_residual(x, a, b, exec)?;
    let gb = b.t().dot(&b);
    let a_plus = solve_right_spd(&xstar.mul_right(b, exec), &gb, lambda)?;
    let xstar = SplrMatrix::from_residual(x, a_plus.view(), b, exec)?;
    let ga = a_plus.t().dot(&a_plus);
    let b_plus = solve_right_spd(&xstar.mul_left(a_plus.view(), exec), &ga, lambda)?;
    Ok((a_plus, b_plus))
}

/// `∂F/∂A = P_Ω(ABᵀ − X) B + λA` and `∂F/∂B = P_Ω(ABᵀ − X)ᵀ A + λB`.
pub fn gradient_f(
    x: &ObservedMatrix,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    lambda: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_factor_shapes(x, a, b)?;
    let exec = Exec::serial();
    let fitted = project_product(x.pattern(), a, b, &exec);
    let resid: Vec<f64> = fitted.iter().zip(x.values()).map(|(f, v)| f - v).collect();
    let r = x.with_values(resid)?;
    let mut ga = r.mul_right(b, &exec);
    ga.scaled_add(lambda, &a);
    let mut gb = r.mul_left(a, &exec);
    gb.scaled_add(lambda, &b);
    Ok((ga, gb))
}

/// Central finite differences of [`objective_f`] with step
/// `1e-4 · (1 + |entry|)`.
pub fn gradient_fd(
    x: &ObservedMatrix,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    lambda: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_factor_shapes(x, a, b)?;
    let mut a_w = a.to_owned();
    let mut b_w = b.to_owned();
    let mut ga = Array2::zeros(a.dim());
    for idx in ndarray::indices(a.dim()) {
        let x0 = a_w[idx];
        let h = 1e-4 * (1.0 + x0.abs());
        a_w[idx] = x0 + h;
        let fp = objective_f(x, a_w.view(), b, lambda)?;
        a_w[idx] = x0 - h;
        let fm = objective_f(x, a_w.view(), b, lambda)?;
        a_w[idx] = x0;
        ga[idx] = (fp - fm) / (2.0 * h);
    }
    let mut gb = Array2::zeros(b.dim());
    for idx in ndarray::indices(b.dim()) {
        let x0 = b_w[idx];
        let h = 1e-4 * (1.0 + x0.abs());
        b_w[idx] = x0 + h;
        let fp = objective_f(x, a, b_w.view(), lambda)?;
        b_w[idx] = x0 - h;
        let fm = objective_f(x, a, b_w.view(), lambda)?;
        b_w[idx] = x0;
        gb[idx] = (fp - fm) / (2.0 * h);
    }
    Ok((ga, gb))
}

/// One right-hand side of the rate bounds with the measured left side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBound {
    /// `min_k` of the measured quantity.
    pub observed: f64,
    pub bound: f64,
    pub satisfied: bool,
}

impl RateBound {
    fn new(observed: f64, bound: f64, slack: f64) -> Self {
        RateBound {
            observed,
            bound,
            satisfied: observed <= bound + slack,
        }
    }
}

/// Finite-run check of the `O(1/K)` rate of softImpute-ALS.
///
/// `f_inf_estimate` is the last recorded F, standing in for the limit, so
/// the check is conservative only in practice.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub k: usize,
    pub min_eta: f64,
    pub sum_eta: f64,
    pub f_first: f64,
    pub f_inf_estimate: f64,
    pub ell_l: f64,
    pub ell_u: f64,
    /// `ℓ^L ≤ 1e-12`; bounds involving it are flagged as vacuous in spirit
    /// although still evaluated with `ℓ^L + λ`.
    pub ell_l_vacuous: bool,
    /// `min η ≤ (F_first − f^∞)/K`.
    pub eta_bound: RateBound,
    /// `min (‖ΔA‖² + ‖ΔB‖²) ≤ 2/(ℓ^L + λ) · (F_first − f^∞)/K`.
    pub step_norm: RateBound,
    /// `min (‖ΔA Bᵀ‖² + ‖A ΔBᵀ‖²) ≤ 2ℓ^U/(λ + ℓ^U) · (F_first − f^∞)/K`.
    pub step_proj: RateBound,
    /// Gradient bound with the Lipschitz constant `ℓ^U + λ` of the partial
    /// gradients: `2(ℓ^U + λ)²/(ℓ^L + λ) · (F_first − f^∞)/K`.
    pub gradient: RateBound,
    /// The same bound with constant `2(ℓ^U)²/(ℓ^L + λ)`, which omits the
    /// ridge term from the Lipschitz constant and can fail for λ > 0.
    pub gradient_printed: RateBound,
}

impl RateReport {
    /// All bounds that are rigorous under their hypotheses.
    pub fn all_satisfied(&self) -> bool {
        self.eta_bound.satisfied && self.step_norm.satisfied && self.step_proj.satisfied && self.gradient.satisfied
    }
}

/// Evaluates the rate bounds from a softImpute-ALS trace (rows `0..=K`)
/// and its per-iteration step statistics (`K` entries).
pub fn rate_report(trace: &IterTrace, steps: &[StepStats], lambda: f64) -> Result<RateReport> {
    let k = steps.len();
    if k == 0 || trace.len() < k + 1 {
        return Err(Error::InvalidConfig(format!(
            "rate report needs K >= 1 steps and K + 1 trace rows, got {k} and {}",
            trace.len()
        )));
    }
    let f_first = trace.rows[0].f;
    let f_inf = trace.rows[k].f;
    let per_iter = (f_first - f_inf) / k as f64;
    let min_of = |sel: fn(&StepStats) -> f64| steps.iter().map(sel).fold(f64::INFINITY, f64::min);
    let ell_l = min_of(|s| s.ell_lo);
    let ell_u = steps.iter().map(|s| s.ell_hi).fold(0.0, f64::max);
    let slack = 1e-12 * f_first.abs().max(1.0);
    let min_eta = min_of(|s| s.eta);
    let sum_eta: f64 = steps.iter().map(|s| s.eta).sum();
    let lower = ell_l + lambda;
    let c_norm = if lower > 0.0 { 2.0 / lower } else { f64::INFINITY };
    let c_proj = if ell_u + lambda > 0.0 {
        2.0 * ell_u / (lambda + ell_u)
    } else {
        0.0
    };
    Ok(RateReport {
        k,
        min_eta,
        sum_eta,
        f_first,
        f_inf_estimate: f_inf,
        ell_l,
        ell_u,
        ell_l_vacuous: ell_l <= 1e-12,
        eta_bound: RateBound::new(min_eta, per_iter, slack),
        step_norm: RateBound::new(min_of(|s| s.dnorm), c_norm * per_iter, slack),
        step_proj: RateBound::new(min_of(|s| s.dproj), c_proj * per_iter, slack),
        gradient: RateBound::new(
            min_of(|s| s.grad_sq),
            c_norm * (ell_u + lambda).powi(2) * per_iter,
            slack,
        ),
        gradient_printed: RateBound::new(min_of(|s| s.grad_sq), c_norm * ell_u * ell_u * per_iter, slack),
    })
}

/// Residuals of the stationarity conditions of the convex problem at
/// `M = U diag(d) Vᵀ`, restricted to the components with `d > 0`:
/// `‖P_Ω(M − X) V + λU‖_F` and `‖Uᵀ P_Ω(M − X) + λVᵀ‖_F`.
pub fn stationarity_residuals(x: &ObservedMatrix, model: &FactorPair, lambda: f64) -> Result<(f64, f64)> {
    let q = model.nonzero_rank();
    let m = model.truncated(q);
    let exec = Exec::serial();
    let ud = scale_columns(&m.u, m.d.iter().copied());
    check_factor_shapes(x, ud.view(), m.v.view())?;
    let fitted = project_product(x.pattern(), ud.view(), m.v.view(), &exec);
    let resid: Vec<f64> = fitted.iter().zip(x.values()).map(|(f, v)| f - v).collect();
    let r = x.with_values(resid)?;
    let mut left = r.mul_right(m.v.view(), &exec);
    left.scaled_add(lambda, &m.u);
    let mut right = r.mul_left(m.u.view(), &exec);
    right.scaled_add(lambda, &m.v);
    Ok((sq_norm(left.view()).sqrt(), sq_norm(right.view()).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for CertStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CertStatus::Pass => "PASS",
            CertStatus::Fail => "FAIL",
            CertStatus::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Outcome of [`certify_optimality`].
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub status: CertStatus,
    /// Relative squared Frobenius distance between the candidate and the
    /// probe solution.
    pub discrepancy: f64,
    pub tolerance: f64,
    /// Thresholded values `(σ − λ)_+ > 0` the probe found beyond the
    /// candidate's rank.
    pub surplus: Vec<f64>,
    pub solution_rank: usize,
    pub probe_rank: usize,
    pub probe_iterations: usize,
    pub stationarity_u: f64,
    pub stationarity_v: f64,
    /// `1 + ‖P_Ω(X)‖_F`, the scale for the stationarity residuals.
    pub data_scale: f64,
}

impl Certificate {
    pub fn to_text(&self) -> String {
        let surplus: Vec<String> = self.surplus.iter().map(|s| format!("{s:.6e}")).collect();
        format!(
            "status = {}\ndiscrepancy = {:.6e}\ntolerance = {:.1e}\nsolution_rank = {}\nprobe_rank = {}\n\
             probe_iterations = {}\nsurplus = [{}]\nstationarity_u = {:.6e}\nstationarity_v = {:.6e}\n\
             data_scale = {:.6e}\n",
            self.status,
            self.discrepancy,
            self.tolerance,
            self.solution_rank,
            self.probe_rank,
            self.probe_iterations,
            surplus.join(", "),
            self.stationarity_u,
            self.stationarity_v,
            self.data_scale,
        )
    }
}

/// Options for the probe solve of [`certify_optimality`].
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub probe_rank_extra: usize,
    pub tolerance: f64,
    pub probe_tol: f64,
    pub probe_max_iter: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            probe_rank_extra: 2,
            tolerance: 1e-5,
            probe_tol: 1e-12,
            probe_max_iter: 5000,
            seed: 7,
            threads: 1,
        }
    }
}

/// Checks that `M = U diag(d) Vᵀ` solves the fully observed soft-SVD
/// problem built from its own imputation `X* = P_Ω(X) + P_Ω^⊥(M)`, which
/// makes it a solution of the convex completion problem.
///
/// The probe runs the rank-restricted soft SVD on `X*` at the candidate's
/// rank plus `probe_rank_extra`, warm-started from the candidate with extra
/// random directions, so any missing component above λ shows up as surplus.
pub fn certify_optimality(
    x: &ObservedMatrix,
    model: &FactorPair,
    lambda: f64,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    if model.nrows() != x.nrows() || model.ncols() != x.ncols() {
        return Err(mismatch(
            "certify_optimality",
            format!("{}x{}", x.nrows(), x.ncols()),
            format!("{}x{}", model.nrows(), model.ncols()),
        ));
    }
    model.validate()?;
    let q = model.nonzero_rank();
    let candidate = model.truncated(q);
    let probe_rank = (q + opts.probe_rank_extra.max(1)).min(x.nrows().min(x.ncols()));
    let ud = scale_columns(&candidate.u, candidate.d.iter().copied());
    let probe = crate::splr::with_threads(opts.threads, |exec| -> Result<_> {
        let xstar = SplrMatrix::from_residual(x, ud.view(), candidate.v.view(), exec)?;
        let cfg = SoftSvdConfig {
            rank: probe_rank,
            lambda,
            tol: opts.probe_tol,
            max_iter: opts.probe_max_iter,
            seed: opts.seed,
            final_cleanup: true,
            warm_start: Some(candidate.clone()),
            zero_check: true,
            threads: 1,
        };
        soft_svd_in(&xstar, &cfg, exec)
    })??;
    let discrepancy = frobenius_delta(&candidate, &probe.factors)?;
    let surplus: Vec<f64> = probe.factors.d.iter().skip(q).copied().filter(|&s| s > 0.0).collect();
    let (su, sv) = stationarity_residuals(x, model, lambda)?;
    let status = if discrepancy <= opts.tolerance && surplus.is_empty() {
        CertStatus::Pass
    } else if !probe.converged {
        CertStatus::Inconclusive
    } else {
        CertStatus::Fail
    };
    Ok(Certificate {
        status,
        discrepancy,
        tolerance: opts.tolerance,
        surplus,
        solution_rank: q,
        probe_rank,
        probe_iterations: probe.iterations,
        stationarity_u: su,
        stationarity_v: sv,
        data_scale: 1.0 + x.frobenius_norm(),
    })
}
