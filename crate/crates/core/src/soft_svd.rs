//! Rank-restricted soft-thresholded SVD by alternating ridge regressions.
//!
//! Solves `min_Z ½‖X − Z‖²_F + λ‖Z‖_*` over rank-`r` matrices for a fully
//! specified `X` (dense, sparse with zeros elsewhere, or sparse plus low
//! rank). Each iteration is one ridge regression per side followed by a
//! small SVD that puts the factors back into SVD form.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::{orthonormalize, svd_skinny};
use crate::diagnostics::{check_dense, IterTrace, TraceRow};
use crate::error::{mismatch, Error, Result};
use crate::splr::{scale_columns, with_threads, Exec, FactorPair, LinearOperator};

#[derive(Debug, Clone)]
pub struct SoftSvdConfig {
    pub rank: usize,
    pub lambda: f64,
    /// Threshold on the relative change of the model between iterations.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Finish by soft-thresholding the SVD of `X V`.
    pub final_cleanup: bool,
    pub warm_start: Option<FactorPair>,
    /// Return the zero model immediately when `λ ≥ σ₁(X)`.
    pub zero_check: bool,
    pub threads: usize,
}

impl SoftSvdConfig {
    pub fn new(rank: usize, lambda: f64) -> Self {
        SoftSvdConfig {
            rank,
            lambda,
            tol: 1e-5,
            max_iter: 300,
            seed: 42,
            final_cleanup: true,
            warm_start: None,
            zero_check: true,
            threads: 1,
        }
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.rank == 0 || self.rank > m.min(n) {
            return Err(Error::InvalidConfig(format!(
                "rank must be in 1..={} for a {m}x{n} matrix, got {}",
                m.min(n),
                self.rank
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if let Some(w) = &self.warm_start {
            if w.nrows() != m || w.ncols() != n {
                return Err(mismatch(
                    "warm start",
                    format!("{m}x{n}"),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
            w.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SoftSvdResult {
    pub factors: FactorPair,
    pub trace: IterTrace,
    pub converged: bool,
    pub iterations: usize,
}

/// Runs the solver, on a private thread pool when `cfg.threads != 1`.
pub fn soft_svd_solve<X>(x: &X, cfg: &SoftSvdConfig) -> Result<SoftSvdResult>
where
    X: LinearOperator + Sync + ?Sized,
{
    with_threads(cfg.threads, |exec| soft_svd_in(x, cfg, exec))?
}

/// Gaussian `p × k` matrix with orthonormalized columns.
pub(crate) fn random_orthonormal(p: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let g = Array2::from_shape_fn((p, k), |_| StandardNormal.sample(rng));
    Ok(orthonormalize(g.view())?.q)
}

/// `k` random unit columns orthogonal to the columns of `basis` and to
/// each other.
pub(crate) fn orthogonal_padding(basis: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let p = basis.nrows();
    let mut g: Array2<f64> = Array2::from_shape_fn((p, k), |_| StandardNormal.sample(rng));
    for _ in 0..2 {
        let proj = basis.dot(&basis.t().dot(&g));
        g -= &proj;
    }
    Ok(orthonormalize(g.view())?.q)
}

/// Brings a prior model to exactly `r` components: truncates, or pads with
/// random orthogonal directions. Padded and dead (`d = 0`) components get
/// the smallest positive `d` of the prior, or 1 if there is none.
pub fn pad_factors(prior: &FactorPair, r: usize, seed: u64) -> Result<FactorPair> {
    let (m, n) = (prior.nrows(), prior.ncols());
    if r > m.min(n) {
        return Err(Error::InvalidConfig(format!(
            "cannot pad to rank {r} in a {m}x{n} matrix"
        )));
    }
    let base = prior.truncated(r);
    let fill = base
        .d
        .iter()
        .copied()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    let fill = if fill.is_finite() { fill } else { 1.0 };
    let extra = r - base.rank();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut u = Array2::zeros((m, r));
    let mut v = Array2::zeros((n, r));
    u.slice_mut(ndarray::s![.., ..base.rank()]).assign(&base.u);
    v.slice_mut(ndarray::s![.., ..base.rank()]).assign(&base.v);
    if extra > 0 {
        u.slice_mut(ndarray::s![.., base.rank()..])
            .assign(&orthogonal_padding(base.u.view(), extra, &mut rng)?);
        v.slice_mut(ndarray::s![.., base.rank()..])
            .assign(&orthogonal_padding(base.v.view(), extra, &mut rng)?);
    }
    let mut d = Array1::from_elem(r, fill);
    for (k, &x) in base.d.iter().enumerate() {
        if x > 0.0 {
            d[k] = x;
        }
    }
    Ok(FactorPair::new_unchecked(u, d, v))
}

/// Starting factors: the padded warm start, or a Gaussian `U`, `V` with
/// `d = 1`.
pub(crate) fn initial_factors(
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
    warm: Option<&FactorPair>,
) -> Result<FactorPair> {
    match warm {
        Some(w) => pad_factors(w, r, seed),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_orthonormal(m, r, &mut rng)?;
            let v = random_orthonormal(n, r, &mut rng)?;
            Ok(FactorPair::new_unchecked(u, Array1::ones(r), v))
        }
    }
}

/// Shrinkage applied to `Xᵀ U` in a half-step: `d/(d + λ)`, which turns
/// the ridge solution `B̃ = Xᵀ U diag(√d/(d + λ))` into `B̃ diag(√d)`.
/// Taken as 1 when λ = 0 so a zero component does not make the system
/// singular.
fn shrink(d: &Array1<f64>, lambda: f64) -> Vec<f64> {
    d.iter()
        .map(|&x| if lambda == 0.0 { 1.0 } else { x / (x + lambda) })
        .collect()
}

/// `½‖X − U diag(d) Vᵀ‖² + λ Σd` given `X V`.
fn objective_from_xv(x_norm_sq: f64, f: &FactorPair, xv: &Array2<f64>, lambda: f64) -> f64 {
    let mut cross = 0.0;
    for k in 0..f.rank() {
        cross += f.d[k] * f.u.column(k).dot(&xv.column(k));
    }
    let fit: f64 = f.d.iter().map(|x| x * x).sum();
    0.5 * (x_norm_sq - 2.0 * cross + fit).max(0.0) + lambda * f.d.sum()
}

/// Solver body on a given execution context.
pub(crate) fn soft_svd_in<X>(x: &X, cfg: &SoftSvdConfig, exec: &Exec) -> Result<SoftSvdResult>
where
    X: LinearOperator + ?Sized,
{
    let (m, n) = (x.nrows(), x.ncols());
    cfg.validate(m, n)?;
    let lambda = cfg.lambda;
    let start = Instant::now();
    let x_norm_sq = x.frobenius_norm_sq();
    let mut f = initial_factors(m, n, cfg.rank, cfg.seed, cfg.warm_start.as_ref())?;
    let mut trace = IterTrace::new();

    if cfg.zero_check && lambda > 0.0 && lambda >= spectral_norm(x, cfg.seed, exec)? {
        let zero = FactorPair::new_unchecked(f.u.clone(), Array1::zeros(cfg.rank), f.v.clone());
        trace.push(TraceRow {
            iter: 0,
            seconds: start.elapsed().as_secs_f64(),
            f: 0.5 * x_norm_sq,
            h: 0.5 * x_norm_sq,
            frob_delta: f64::NAN,
            eta: f64::NAN,
            rank: 0,
            flops: exec.ops(),
        });
        return Ok(SoftSvdResult {
            factors: zero,
            trace,
            converged: true,
            iterations: 0,
        });
    }

    let xv0 = x.mul_right(f.v.view(), exec);
    let f0 = objective_from_xv(x_norm_sq, &f, &xv0, lambda);
    trace.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        f: f0,
        h: f0,
        frob_delta: f64::NAN,
        eta: f64::NAN,
        rank: f.rank_estimate(),
        flops: exec.ops(),
    });

    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter {
        let old = f.clone();
        // B-step: V ← Ṽ, d ← s, U ← U R from  Xᵀ U diag(d/(d+λ)) = Ṽ s Rᵀ.
        let xtu = x.mul_left(f.u.view(), exec);
        let btd = scale_columns(&xtu, shrink(&f.d, lambda));
        let svd = svd_skinny(btd.view())?;
        exec.count((m * cfg.rank * cfg.rank) as u64);
        f = FactorPair::new_unchecked(f.u.dot(&svd.v), svd.s, svd.u);
        // A-step.
        let xv = x.mul_right(f.v.view(), exec);
        let atd = scale_columns(&xv, shrink(&f.d, lambda));
        let svd = svd_skinny(atd.view())?;
        let rot = svd.v;
        f = FactorPair::new_unchecked(svd.u, svd.s, f.v.dot(&rot));
        let xv_new = xv.dot(&rot);
        exec.count(((m + 2 * n) * cfg.rank * cfg.rank) as u64);

        let obj = objective_from_xv(x_norm_sq, &f, &xv_new, lambda);
        let delta = frobenius_delta(&old, &f)?;
        iterations = iter;
        trace.push(TraceRow {
            iter,
            seconds: start.elapsed().as_secs_f64(),
            f: obj,
            h: obj,
            frob_delta: delta,
            eta: f64::NAN,
            rank: f.rank_estimate(),
            flops: exec.ops(),
        });
        if delta <= cfg.tol {
            converged = true;
            break;
        }
    }

    if cfg.final_cleanup {
        let old = f.clone();
        f = cleanup(x, &f, lambda, exec)?;
        let xv = x.mul_right(f.v.view(), exec);
        let obj = objective_from_xv(x_norm_sq, &f, &xv, lambda);
        trace.push(TraceRow {
            iter: iterations + 1,
            seconds: start.elapsed().as_secs_f64(),
            f: obj,
            h: obj,
            frob_delta: frobenius_delta(&old, &f)?,
            eta: f64::NAN,
            rank: f.rank_estimate(),
            flops: exec.ops(),
        });
    }
    Ok(SoftSvdResult {
        factors: f,
        trace,
        converged,
        iterations,
    })
}

/// Soft-thresholds the SVD of `X V`: with `X V = U σ Rᵀ` returns
/// `(U, (σ − λ)_+, V R)`.
pub fn cleanup<X: LinearOperator + ?Sized>(x: &X, f: &FactorPair, lambda: f64, exec: &Exec) -> Result<FactorPair> {
    let xv = x.mul_right(f.v.view(), exec);
    let svd = svd_skinny(xv.view())?;
    let d = svd.s.mapv(|s| (s - lambda).max(0.0));
    Ok(FactorPair::new_unchecked(svd.u, d, f.v.dot(&svd.v)))
}

/// Relative squared Frobenius change `‖M_old − M_new‖² / ‖M_old‖²` from
/// the factors alone, in `O((m + n) r²)`.
///
/// Both models are expressed in joint orthonormal bases from QR of the
/// stacked factors, so the difference is taken on small cores and keeps
/// accuracy far below machine epsilon. Expanding the square instead would
/// floor the result near 1e-16.
///
/// Returns 0 when both models are zero and `+∞` when only the old one is.
pub fn frobenius_delta(old: &FactorPair, new: &FactorPair) -> Result<f64> {
    if old.nrows() != new.nrows() || old.ncols() != new.ncols() {
        return Err(mismatch(
            "frobenius_delta",
            format!("{}x{}", old.nrows(), old.ncols()),
            format!("{}x{}", new.nrows(), new.ncols()),
        ));
    }
    let old_sq: f64 = old.d.iter().map(|x| x * x).sum();
    if old_sq == 0.0 {
        let new_sq: f64 = new.d.iter().map(|x| x * x).sum();
        return Ok(if new_sq == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let (uo, un) = joint_coordinates(&old.u, &new.u)?;
    let (vo, vn) = joint_coordinates(&old.v, &new.v)?;
    let core_old = scale_columns(&uo, old.d.iter().copied()).dot(&vo.t());
    let core_new = scale_columns(&un, new.d.iter().copied()).dot(&vn.t());
    let diff: f64 = (&core_old - &core_new).iter().map(|x| x * x).sum();
    Ok(diff / old_sq)
}

/// Coordinates of `a` and `b` in an orthonormal basis of their joint column
/// span: with `[a, b] = Q R` these are the two column blocks of `R`. When
/// the stacked matrix is wider than tall the basis is the identity.
fn joint_coordinates(a: &Array2<f64>, b: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (ka, kb) = (a.ncols(), b.ncols());
    if ka + kb > a.nrows() {
        return Ok((a.clone(), b.clone()));
    }
    let stacked = ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()])
        .map_err(|e| Error::InvalidConfig(format!("stacking factors: {e}")))?;
    let r = orthonormalize(stacked.view())?.r;
    Ok((
        r.slice(ndarray::s![.., ..ka]).to_owned(),
        r.slice(ndarray::s![.., ka..]).to_owned(),
    ))
}

/// Largest singular value by block subspace iteration with Rayleigh-Ritz
/// extraction (block of up to 8, fixed seed, relative tolerance 1e-8).
pub fn spectral_norm<X: LinearOperator + ?Sized>(x: &X, seed: u64, exec: &Exec) -> Result<f64> {
    let (m, n) = (x.nrows(), x.ncols());
    let k = m.min(n).min(8);
    if k == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = random_orthonormal(n, k, &mut rng)?;
    let mut prev = 0.0;
    for _ in 0..1000 {
        let y = x.mul_right(q.view(), exec);
        let svd = svd_skinny(y.view())?;
        let s1 = svd.s[0];
        if s1 == 0.0 {
            // Either X = 0 or the block is orthogonal to the row space.
            if prev == 0.0 && x.frobenius_norm_sq() == 0.0 {
                return Ok(0.0);
            }
        }
        if (s1 - prev).abs() <= 1e-8 * s1 {
            return Ok(s1);
        }
        prev = s1;
        let z = x.mul_left(y.view(), exec);
        q = orthonormalize(z.view())?.q;
    }
    Ok(prev)
}

/// Closed form: top-`r` SVD of a small dense `X`,
/// soft-thresholded at λ.
pub fn oracle_soft_svd(x: ArrayView2<f64>, r: usize, lambda: f64) -> Result<Array2<f64>> {
    let (m, n) = x.dim();
    check_dense(m, n)?;
    if m.min(n) > 100 {
        return Err(Error::TooLarge {
            rows: m,
            cols: n,
            limit: crate::diagnostics::DENSE_LIMIT,
        });
    }
    let svd = svd_skinny(x)?;
    let r = r.min(svd.s.len());
    let d: Vec<f64> = svd.s.iter().take(r).map(|s| (s - lambda).max(0.0)).collect();
    let u = svd.u.slice(ndarray::s![.., ..r]).to_owned();
    let v = svd.v.slice(ndarray::s![.., ..r]).to_owned();
    Ok(scale_columns(&u, d).dot(&v.t()))
}

/// Singular values of the unregularized fit recovered from a thresholded
/// one: λ added back to each positive value.
pub fn unshrink(d: &Array1<f64>, lambda: f64) -> Array1<f64> {
    d.mapv(|x| if x > 0.0 { x + lambda } else { 0.0 })
}
