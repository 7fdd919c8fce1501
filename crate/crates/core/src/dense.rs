//! Small and skinny dense kernels: soft-thresholding, the diagonal ridge
//! solve, Householder orthonormalization, a one-sided Jacobi SVD for
//! operating-rank sized problems, and a Cholesky solve for the per-row
//! systems of ALS.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::splr::{Exec, FactorPair, LinearOperator};

/// Row-major dense matrix with finite entries.
pub type DenseMatrix = Array2<f64>;

/// `(d_i − λ)_+` elementwise.
pub fn soft_threshold(d: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("threshold must be >= 0, got {lambda}")));
    }
    Ok(d.iter().map(|&x| (x - lambda).max(0.0)).collect())
}

/// Multiresponse ridge regression of `X` on `U diag(scale)` with orthonormal
/// `U`: returns `B̃` (`n × r`) with `B̃ᵀ = (D² + λI)⁻¹ D Uᵀ X`, i.e. column `k`
/// of `Xᵀ U` shrunk by `scale_k / (scale_k² + λ)`.
pub fn ridge_apply<X: LinearOperator + ?Sized>(
    u: ArrayView2<f64>,
    scale: &[f64],
    lambda: f64,
    x: &X,
    exec: &Exec,
) -> Result<Array2<f64>> {
    if u.nrows() != x.nrows() || u.ncols() != scale.len() {
        return Err(crate::error::mismatch(
            "ridge_apply",
            format!("U {}x{}", x.nrows(), scale.len()),
            format!("U {:?}", u.dim()),
        ));
    }
    let factors = ridge_factors(scale, lambda)?;
    let mut out = x.mul_left(u, exec);
    for (mut col, f) in out.columns_mut().into_iter().zip(factors) {
        col *= f;
    }
    Ok(out)
}

/// `scale_k / (scale_k² + λ)`.
pub fn ridge_factors(scale: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ridge penalty must be >= 0, got {lambda}"
        )));
    }
    scale
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let denom = s * s + lambda;
            if denom == 0.0 {
                Err(Error::SingularRidge { component: k })
            } else {
                Ok(s / denom)
            }
        })
        .collect()
}

/// Thin QR factorization `M = Q R` with orthonormal `Q`.
#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub q: Array2<f64>,
    pub r: Array2<f64>,
    /// Columns whose residual after projecting out the earlier ones was
    /// negligible; the matching columns of `Q` are an arbitrary orthonormal
    /// completion.
    pub completed: Vec<usize>,
}

/// Householder QR of a `p × q` matrix with `q ≤ p`, signs fixed so that
/// `diag(R) ≥ 0`.
pub fn orthonormalize(m: ArrayView2<f64>) -> Result<Orthonormalized> {
    let (p, q) = m.dim();
    if q > p {
        return Err(Error::InvalidConfig(format!(
            "orthonormalize needs at least as many rows as columns, got {p}x{q}"
        )));
    }
    check_finite(m)?;
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..q).map(|k| m.column(k).to_vec()).collect();
    let pre_norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(q);
    let mut r = Array2::zeros((q, q));
    let mut completed = Vec::new();

    for k in 0..q {
        let x = &cols[k][k..];
        let alpha = norm(x);
        if alpha <= 1e-12 * (pre_norms[k] + 1.0) {
            completed.push(k);
        }
        let reflector = if alpha == 0.0 {
            None
        } else {
            let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            let mut v = x.to_vec();
            v[0] += sign * alpha;
            let vn = norm(&v);
            if vn == 0.0 {
                None
            } else {
                v.iter_mut().for_each(|e| *e /= vn);
                Some(v)
            }
        };
        if let Some(v) = &reflector {
            for col in cols.iter_mut().skip(k) {
                apply_reflector(v, &mut col[k..]);
            }
        }
        for (j, col) in cols.iter().enumerate().skip(k) {
            r[[k, j]] = col[k];
        }
        reflectors.push(reflector);
    }

    // Q = H_0 H_1 ... H_{q-1} [I_q; 0]
    let mut q_cols: Vec<Vec<f64>> = (0..q)
        .map(|k| {
            let mut e = vec![0.0; p];
            e[k] = 1.0;
            e
        })
        .collect();
    for k in (0..q).rev() {
        if let Some(v) = &reflectors[k] {
            for col in q_cols.iter_mut() {
                apply_reflector(v, &mut col[k..]);
            }
        }
    }
    let mut q_mat = Array2::zeros((p, q));
    for (k, col) in q_cols.iter().enumerate() {
        let flip = if r[[k, k]] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            q_mat[[i, k]] = flip * col[i];
        }
        if flip < 0.0 {
            for j in k..q {
                r[[k, j]] = -r[[k, j]];
            }
        }
    }
    Ok(Orthonormalized { q: q_mat, r, completed })
}

fn apply_reflector(v: &[f64], x: &mut [f64]) {
    let s = 2.0 * v.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    // Scaled to avoid overflow on extreme inputs.
    let big = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if big == 0.0 || !big.is_finite() {
        return big;
    }
    big * x.iter().map(|v| (v / big) * (v / big)).sum::<f64>().sqrt()
}

fn check_finite(m: ArrayView2<f64>) -> Result<()> {
    if let Some(((i, j), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: j });
    }
    Ok(())
}

/// Thin SVD `M = U diag(s) Vᵀ` of a small or skinny matrix.
#[derive(Debug, Clone)]
pub struct SmallSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

impl SmallSvd {
    pub fn reconstruct(&self) -> Array2<f64> {
        crate::splr::scale_columns(&self.u, self.s.iter().copied()).dot(&self.v.t())
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD of a `p × q` matrix: Householder QR, then one-sided Jacobi on the
/// `q × q` triangular factor. Singular values come out nonincreasing and each
/// left singular vector has its largest-magnitude entry positive.
///
/// Wide inputs (`q > p`) are handled through the transpose.
pub fn svd_skinny(m: ArrayView2<f64>) -> Result<SmallSvd> {
    check_finite(m)?;
    let (p, q) = m.dim();
    if q > p {
        let t = svd_skinny(m.t())?;
        let mut out = SmallSvd { u: t.v, s: t.s, v: t.u };
        fix_signs(&mut out);
        return Ok(out);
    }
    if q == 0 {
        return Ok(SmallSvd {
            u: Array2::zeros((p, 0)),
            s: Array1::zeros(0),
            v: Array2::zeros((0, 0)),
        });
    }
    let qr = orthonormalize(m)?;
    let (u_r, s, v) = jacobi_svd_square(&qr.r);
    let mut out = SmallSvd {
        u: qr.q.dot(&u_r),
        s,
        v,
    };
    fix_signs(&mut out);
    Ok(out)
}

/// One-sided (Hestenes) Jacobi on a square matrix.
fn jacobi_svd_square(r: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let k = r.nrows();
    let mut w: Vec<Vec<f64>> = (0..k).map(|j| r.column(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();
    let eps = f64::EPSILON;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..k {
            for j in (i + 1)..k {
                // Work with norms and the cosine rather than raw sums of
                // squares, which underflow for columns near 1e-160.
                let ni = norm(&w[i]);
                let nj = norm(&w[j]);
                if ni == 0.0 || nj == 0.0 {
                    continue;
                }
                let cos: f64 = w[i].iter().zip(&w[j]).map(|(a, b)| (a / ni) * (b / nj)).sum();
                if cos.abs() <= eps {
                    continue;
                }
                rotated = true;
                let zeta = (nj / ni - ni / nj) / (2.0 * cos);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    // Left vectors of singular values at rounding level are noise and, near
    // underflow, not even orthogonal; they are replaced by a completion,
    // which moves the reconstruction by at most that singular value.
    let cutoff = sigma[order[0]] * f64::EPSILON * k as f64;
    let mut u = Array2::zeros((k, k));
    let mut v_out = Array2::zeros((k, k));
    let mut s_out = Array1::zeros(k);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        s_out[dst] = sigma[src];
        for row in 0..k {
            v_out[[row, dst]] = v[src][row];
        }
        if sigma[src] > cutoff {
            for row in 0..k {
                u[[row, dst]] = w[src][row] / sigma[src];
            }
        } else {
            missing.push(dst);
        }
    }
    complete_basis(&mut u, &missing);
    (u, s_out, v_out)
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    for (a, b) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all the
/// other columns, trying standard basis vectors in order.
pub(crate) fn complete_basis(u: &mut Array2<f64>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let p = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|c| !missing.contains(c)).collect();
    let mut candidate = 0;
    for &slot in missing {
        while candidate < p {
            let mut e = Array1::zeros(p);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &c in &filled {
                    let col = u.column(c);
                    let proj = col.dot(&e);
                    e.scaled_add(-proj, &col);
                }
            }
            let n = e.dot(&e).sqrt();
            if n > 1e-8 {
                u.column_mut(slot).assign(&(e / n));
                filled.push(slot);
                break;
            }
        }
    }
}

fn fix_signs(svd: &mut SmallSvd) {
    for k in 0..svd.s.len() {
        let col = svd.u.column(k);
        let mut best = 0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            svd.u.column_mut(k).mapv_inplace(|x| -x);
            svd.v.column_mut(k).mapv_inplace(|x| -x);
        }
    }
}

/// SVD form of a product `A Bᵀ` from its skinny factors: QR of each side,
/// then the SVD of the small core `R_A R_Bᵀ`.
pub fn svd_of_product(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<FactorPair> {
    if a.ncols() != b.ncols() {
        return Err(crate::error::mismatch("svd_of_product", a.ncols(), b.ncols()));
    }
    let (qa, ra) = skinny_qr_or_identity(a)?;
    let (qb, rb) = skinny_qr_or_identity(b)?;
    let core = ra.dot(&rb.t());
    let svd = svd_skinny(core.view())?;
    Ok(FactorPair::new_unchecked(qa.dot(&svd.u), svd.s, qb.dot(&svd.v)))
}

fn skinny_qr_or_identity(a: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    if a.ncols() <= a.nrows() {
        let qr = orthonormalize(a)?;
        Ok((qr.q, qr.r))
    } else {
        Ok((Array2::eye(a.nrows()), a.to_owned()))
    }
}

/// In-place Cholesky factorization of a row-major SPD matrix (lower factor
/// stored in the lower triangle).
pub fn cholesky_in_place(g: &mut [f64], r: usize) -> Result<()> {
    for j in 0..r {
        let mut diag = g[j * r + j];
        for k in 0..j {
            diag -= g[j * r + k] * g[j * r + k];
        }
        if !(diag > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge system not positive definite at pivot {j}"
            )));
        }
        let l = diag.sqrt();
        g[j * r + j] = l;
        for i in (j + 1)..r {
            let mut s = g[i * r + j];
            for k in 0..j {
                s -= g[i * r + k] * g[j * r + k];
            }
            g[i * r + j] = s / l;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], r: usize, b: &mut [f64]) {
    for i in 0..r {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * r + k] * b[k];
        }
        b[i] = s / l[i * r + i];
    }
    for i in (0..r).rev() {
        let mut s = b[i];
        for k in (i + 1)..r {
            s -= l[k * r + i] * b[k];
        }
        b[i] = s / l[i * r + i];
    }
}

/// Multiply-adds for a Cholesky factorization plus one solve of size `r`.
pub fn cholesky_cost(r: usize) -> u64 {
    let r = r as u64;
    r * r * r / 6 + r * r
}

/// `Z (G + λI)⁻¹` for small SPD `G`, solving row by row.
pub fn solve_right_spd(z: &Array2<f64>, g: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    let r = g.nrows();
    let mut l: Vec<f64> = g.iter().copied().collect();
    for k in 0..r {
        l[k * r + k] += lambda;
    }
    cholesky_in_place(&mut l, r)?;
    let mut out = z.as_standard_layout().to_owned();
    for mut row in out.rows_mut() {
        let slice = row.as_slice_mut().expect("standard layout");
        cholesky_solve(&l, r, slice);
    }
    Ok(out)
}
