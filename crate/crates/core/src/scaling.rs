//! Row/column centering and scaling of an incomplete matrix by the method
//! of moments: find `α, β, τ, γ` so that `X̃_ij = (X_ij − α_i − β_j)/(τ_i γ_j)`
//! has observed row and column means 0 and mean squares 1.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, Axis};

use crate::error::{mismatch, Error, Result};
use crate::splr::{project_product, Exec, ObservedMatrix, SplrMatrix};

/// Which lines a centering or scaling component applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Axes {
    #[default]
    None,
    Rows,
    Cols,
    Both,
}

impl Axes {
    pub fn rows(self) -> bool {
        matches!(self, Axes::Rows | Axes::Both)
    }

    pub fn cols(self) -> bool {
        matches!(self, Axes::Cols | Axes::Both)
    }

    fn from_flags(rows: bool, cols: bool) -> Self {
        match (rows, cols) {
            (false, false) => Axes::None,
            (true, false) => Axes::Rows,
            (false, true) => Axes::Cols,
            (true, true) => Axes::Both,
        }
    }
}

impl fmt::Display for Axes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axes::None => "none",
            Axes::Rows => "rows",
            Axes::Cols => "cols",
            Axes::Both => "both",
        })
    }
}

impl FromStr for Axes {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Axes::None),
            "rows" => Ok(Axes::Rows),
            "cols" => Ok(Axes::Cols),
            "both" => Ok(Axes::Both),
            other => Err(Error::InvalidConfig(format!(
                "expected rows|cols|both|none, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScaleFlags {
    pub center: Axes,
    pub scale: Axes,
}

impl ScaleFlags {
    pub fn new(center: Axes, scale: Axes) -> Self {
        ScaleFlags { center, scale }
    }

    pub fn with_rows_cols(center_rows: bool, center_cols: bool, scale_rows: bool, scale_cols: bool) -> Self {
        ScaleFlags {
            center: Axes::from_flags(center_rows, center_cols),
            scale: Axes::from_flags(scale_rows, scale_cols),
        }
    }

    pub fn all() -> Self {
        ScaleFlags {
            center: Axes::Both,
            scale: Axes::Both,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.center == Axes::None && self.scale == Axes::None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub tau: Array1<f64>,
    pub gamma: Array1<f64>,
    pub flags: ScaleFlags,
}

impl ScalingParams {
    pub fn identity(m: usize, n: usize, flags: ScaleFlags) -> Self {
        ScalingParams {
            alpha: Array1::zeros(m),
            beta: Array1::zeros(n),
            tau: Array1::ones(m),
            gamma: Array1::ones(n),
            flags,
        }
    }

    pub fn nrows(&self) -> usize {
        self.alpha.len()
    }

    pub fn ncols(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.len() != self.alpha.len() || self.gamma.len() != self.beta.len() {
            return Err(mismatch(
                "scaling params",
                format!("{} row and {} column entries", self.alpha.len(), self.beta.len()),
                format!("{} and {}", self.tau.len(), self.gamma.len()),
            ));
        }
        let finite = |a: &Array1<f64>| a.iter().all(|v| v.is_finite());
        if !(finite(&self.alpha) && finite(&self.beta)) {
            return Err(Error::InvalidConfig("scaling centers must be finite".into()));
        }
        let positive = |a: &Array1<f64>| a.iter().all(|v| v.is_finite() && *v > 0.0);
        if !(positive(&self.tau) && positive(&self.gamma)) {
            return Err(Error::InvalidConfig("scaling factors must be finite and > 0".into()));
        }
        Ok(())
    }

    fn check_shape(&self, m: usize, n: usize) -> Result<()> {
        if self.nrows() != m || self.ncols() != n {
            return Err(mismatch(
                "scaling params",
                format!("{m}x{n}"),
                format!("{}x{}", self.nrows(), self.ncols()),
            ));
        }
        self.validate()
    }

    #[inline]
    pub fn forward(&self, x: f64, i: usize, j: usize) -> f64 {
        (x - self.alpha[i] - self.beta[j]) / (self.tau[i] * self.gamma[j])
    }

    #[inline]
    pub fn inverse(&self, z: f64, i: usize, j: usize) -> f64 {
        self.tau[i] * self.gamma[j] * z + self.alpha[i] + self.beta[j]
    }

    /// Moves the mean of `α` into `β` and the geometric mean of `τ` into
    /// `γ` when both sides are enabled, which leaves `X̃` unchanged.
    pub fn normalize(&mut self) {
        if self.flags.center == Axes::Both && !self.alpha.is_empty() {
            let shift = self.alpha.mean().unwrap_or(0.0);
            self.alpha -= shift;
            self.beta += shift;
        }
        if self.flags.scale == Axes::Both && !self.tau.is_empty() {
            let c = self.tau.mapv(f64::ln).mean().unwrap_or(0.0).exp();
            self.tau /= c;
            self.gamma *= c;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    /// Sweeps performed.
    pub iterations: usize,
    /// Convergence measure before the first sweep and after each sweep.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl ScaleReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }

    /// First sweep after which the measure is at most `level`.
    pub fn sweeps_to(&self, level: f64) -> Option<usize> {
        self.residuals.iter().position(|&r| r <= level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingOptions {
    pub flags: ScaleFlags,
    pub tol: f64,
    pub max_iter: usize,
}

impl ScalingOptions {
    pub fn new(flags: ScaleFlags) -> Self {
        ScalingOptions {
            flags,
            tol: 1e-10,
            max_iter: 100,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scaling tol must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Sums over the observed part of one row or column of `X̃`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LineMoments {
    pub count: usize,
    /// `Σ X̃`.
    pub sum: f64,
    /// `Σ X̃²`.
    pub sum_sq: f64,
    /// `Σ 1/(τ_i γ_j)`.
    pub weight: f64,
}

impl LineMoments {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn mean_sq(&self) -> f64 {
        self.sum_sq / self.count as f64
    }
}

/// A matrix the incremental estimator can standardize: it only needs the
/// line moments of `X̃` under given parameters.
pub trait ScalingSource {
    fn shape(&self) -> (usize, usize);
    fn row_counts(&self) -> Vec<usize>;
    fn col_counts(&self) -> Vec<usize>;
    fn row_moments(&self, p: &ScalingParams) -> Vec<LineMoments>;
    fn col_moments(&self, p: &ScalingParams) -> Vec<LineMoments>;
}

impl ScalingSource for ObservedMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    fn row_counts(&self) -> Vec<usize> {
        (0..self.nrows()).map(|i| self.pattern().row_count(i)).collect()
    }

    fn col_counts(&self) -> Vec<usize> {
        (0..self.ncols()).map(|j| self.pattern().col_count(j)).collect()
    }

    fn row_moments(&self, p: &ScalingParams) -> Vec<LineMoments> {
        let pat = self.pattern();
        let vals = self.values();
        (0..self.nrows())
            .map(|i| {
                let mut mo = LineMoments::default();
                for q in pat.row_range(i) {
                    accumulate(&mut mo, p, vals[q], i, pat.cols()[q]);
                }
                mo
            })
            .collect()
    }

    fn col_moments(&self, p: &ScalingParams) -> Vec<LineMoments> {
        let pat = self.pattern();
        let vals = self.values();
        (0..self.ncols())
            .map(|j| {
                let mut mo = LineMoments::default();
                for &q in pat.col_positions(j) {
                    accumulate(&mut mo, p, vals[q], pat.rows()[q], j);
                }
                mo
            })
            .collect()
    }
}

fn accumulate(mo: &mut LineMoments, p: &ScalingParams, x: f64, i: usize, j: usize) {
    let z = p.forward(x, i, j);
    mo.count += 1;
    mo.sum += z;
    mo.sum_sq += z * z;
    mo.weight += 1.0 / (p.tau[i] * p.gamma[j]);
}

/// A complete matrix `S + L Rᵀ` (zeros off the sparse pattern). Centering
/// keeps it in this form: `S + [L, −α, −1][R, 1, β]ᵀ`, so every moment is a
/// sparse sum plus a small quadratic form and nothing is densified.
impl ScalingSource for SplrMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.pattern().nrows(), self.pattern().ncols())
    }

    fn row_counts(&self) -> Vec<usize> {
        vec![self.pattern().ncols(); self.pattern().nrows()]
    }

    fn col_counts(&self) -> Vec<usize> {
        vec![self.pattern().nrows(); self.pattern().ncols()]
    }

    fn row_moments(&self, p: &ScalingParams) -> Vec<LineMoments> {
        let (left, right) = centered_factors(self, p);
        splr_moments(self, &left, &right, &p.tau, &p.gamma, true)
    }

    fn col_moments(&self, p: &ScalingParams) -> Vec<LineMoments> {
        let (left, right) = centered_factors(self, p);
        splr_moments(self, &left, &right, &p.tau, &p.gamma, false)
    }
}

fn centered_factors(x: &SplrMatrix, p: &ScalingParams) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = (x.pattern().nrows(), x.pattern().ncols());
    let left = concatenate![
        Axis(1),
        x.left().view(),
        (-&p.alpha).insert_axis(Axis(1)).view(),
        Array2::from_elem((m, 1), -1.0).view()
    ];
    let right = concatenate![
        Axis(1),
        x.right().view(),
        Array2::ones((n, 1)).view(),
        p.beta.view().insert_axis(Axis(1))
    ];
    (left, right)
}

/// Line moments of `D_τ⁻¹ (S + L Rᵀ) D_γ⁻¹` along rows (`rows = true`) or
/// columns.
fn splr_moments(
    x: &SplrMatrix,
    left: &Array2<f64>,
    right: &Array2<f64>,
    tau: &Array1<f64>,
    gamma: &Array1<f64>,
    rows: bool,
) -> Vec<LineMoments> {
    let pat = x.pattern();
    let sparse = x.sparse_values();
    let fitted = project_product(pat, left.view(), right.view(), &Exec::serial());
    // Orient so that "own" indexes the lines and "other" the summed side.
    let (own, other, own_scale, other_scale) = if rows {
        (left, right, tau, gamma)
    } else {
        (right, left, gamma, tau)
    };
    let w = other_scale.mapv(|s| 1.0 / s);
    let w_total = w.sum();
    let other_w = other.t().dot(&w);
    let weighted = other * &(&w * &w).insert_axis(Axis(1));
    let gram = other.t().dot(&weighted);
    let mut sparse_sum = vec![0.0; own.nrows()];
    let mut sparse_sq = vec![0.0; own.nrows()];
    for (q, (&i, &j)) in pat.rows().iter().zip(pat.cols()).enumerate() {
        let (line, k) = if rows { (i, j) } else { (j, i) };
        let s = sparse[q];
        sparse_sum[line] += s * w[k];
        sparse_sq[line] += (s * s + 2.0 * s * fitted[q]) * w[k] * w[k];
    }
    (0..own.nrows())
        .map(|t| {
            let row = own.row(t);
            let inv = 1.0 / own_scale[t];
            let quad = row.dot(&gram.dot(&row));
            LineMoments {
                count: other.nrows(),
                sum: inv * (sparse_sum[t] + row.dot(&other_w)),
                sum_sq: (inv * inv * (sparse_sq[t] + quad)).max(0.0),
                weight: inv * w_total,
            }
        })
        .collect()
}

fn check_lines(counts: &[usize], axis: &'static str, center: bool, scale: bool) -> Result<()> {
    let required = if scale {
        2
    } else if center {
        1
    } else {
        return Ok(());
    };
    match counts.iter().position(|&c| c < required) {
        Some(index) => Err(Error::DegenerateLine {
            axis,
            index,
            count: counts[index],
            required,
        }),
        None => Ok(()),
    }
}

fn check_source<X: ScalingSource + ?Sized>(x: &X, flags: ScaleFlags) -> Result<()> {
    check_lines(&x.row_counts(), "row", flags.center.rows(), flags.scale.rows())?;
    check_lines(&x.col_counts(), "column", flags.center.cols(), flags.scale.cols())
}

fn spread(mean_sq: f64, axis: &'static str, index: usize) -> Result<f64> {
    if mean_sq > 0.0 && mean_sq.is_finite() {
        Ok(mean_sq.sqrt())
    } else {
        Err(Error::ZeroScale { axis, index })
    }
}

/// The monitored residual: squared line means and squared log mean squares
/// of `X̃`, summed over the enabled components only.
pub fn moment_residual<X: ScalingSource + ?Sized>(x: &X, p: &ScalingParams) -> f64 {
    let f = p.flags;
    let mut r = 0.0;
    let mut add = |moments: Vec<LineMoments>, center: bool, scale: bool| {
        for mo in moments.iter().filter(|mo| mo.count > 0) {
            if center {
                r += mo.mean().powi(2);
            }
            if scale {
                r += mo.mean_sq().ln().powi(2);
            }
        }
    };
    if f.center.rows() || f.scale.rows() {
        add(x.row_moments(p), f.center.rows(), f.scale.rows());
    }
    if f.center.cols() || f.scale.cols() {
        add(x.col_moments(p), f.center.cols(), f.scale.cols());
    }
    r
}

/// Direct estimator: cycles the closed-form updates for `α`, `β`, `τ²`,
/// `γ²` over the observed entries until the moment residual is at most
/// `tol`. Non-convergence is reported, not raised.
pub fn fit_scaling(x: &ObservedMatrix, opts: &ScalingOptions) -> Result<(ScalingParams, ScaleReport)> {
    opts.validate()?;
    let flags = opts.flags;
    check_source(x, flags)?;
    let (m, n) = (x.nrows(), x.ncols());
    let pat = x.pattern();
    let vals = x.values();
    let mut p = ScalingParams::identity(m, n, flags);
    let mut residuals = vec![moment_residual(x, &p)];
    let mut iterations = 0;
    while residuals[iterations] > opts.tol && iterations < opts.max_iter {
        if flags.center.rows() {
            for i in 0..m {
                let (mut num, mut den) = (0.0, 0.0);
                for q in pat.row_range(i) {
                    let j = pat.cols()[q];
                    num += (vals[q] - p.beta[j]) / p.gamma[j];
                    den += 1.0 / p.gamma[j];
                }
                p.alpha[i] = num / den;
            }
        }
        if flags.center.cols() {
            for j in 0..n {
                let (mut num, mut den) = (0.0, 0.0);
                for &q in pat.col_positions(j) {
                    let i = pat.rows()[q];
                    num += (vals[q] - p.alpha[i]) / p.tau[i];
                    den += 1.0 / p.tau[i];
                }
                p.beta[j] = num / den;
            }
        }
        if flags.scale.rows() {
            for i in 0..m {
                let range = pat.row_range(i);
                let count = range.len() as f64;
                let ss: f64 = range
                    .map(|q| {
                        let j = pat.cols()[q];
                        ((vals[q] - p.alpha[i] - p.beta[j]) / p.gamma[j]).powi(2)
                    })
                    .sum();
                p.tau[i] = spread(ss / count, "row", i)?;
            }
        }
        if flags.scale.cols() {
            for j in 0..n {
                let qs = pat.col_positions(j);
                let ss: f64 = qs
                    .iter()
                    .map(|&q| {
                        let i = pat.rows()[q];
                        ((vals[q] - p.alpha[i] - p.beta[j]) / p.tau[i]).powi(2)
                    })
                    .sum();
                p.gamma[j] = spread(ss / qs.len() as f64, "column", j)?;
            }
        }
        iterations += 1;
        residuals.push(moment_residual(x, &p));
    }
    p.normalize();
    let converged = residuals[iterations] <= opts.tol;
    Ok((
        p,
        ScaleReport {
            iterations,
            residuals,
            converged,
        },
    ))
}

/// Incremental estimator: each step computes a correction from the
/// currently standardized values `X̃°`, an additive `Δ` for centers and a
/// multiplicative `Δ` for scales, and stops once
/// `Σ Δα² + Σ Δβ² + Σ log² Δτ + Σ log² Δγ ≤ tol`.
pub fn fit_scaling_incremental<X: ScalingSource + ?Sized>(
    x: &X,
    opts: &ScalingOptions,
) -> Result<(ScalingParams, ScaleReport)> {
    opts.validate()?;
    let flags = opts.flags;
    check_source(x, flags)?;
    let (m, n) = x.shape();
    let mut p = ScalingParams::identity(m, n, flags);
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let mut r = 0.0;
        if flags.center.rows() {
            for (i, mo) in x.row_moments(&p).iter().enumerate() {
                let d = mo.sum / mo.weight;
                p.alpha[i] += d;
                r += d * d;
            }
        }
        if flags.center.cols() {
            for (j, mo) in x.col_moments(&p).iter().enumerate() {
                let d = mo.sum / mo.weight;
                p.beta[j] += d;
                r += d * d;
            }
        }
        if flags.scale.rows() {
            for (i, mo) in x.row_moments(&p).iter().enumerate() {
                let d = spread(mo.mean_sq(), "row", i)?;
                p.tau[i] *= d;
                r += d.ln().powi(2);
            }
        }
        if flags.scale.cols() {
            for (j, mo) in x.col_moments(&p).iter().enumerate() {
                let d = spread(mo.mean_sq(), "column", j)?;
                p.gamma[j] *= d;
                r += d.ln().powi(2);
            }
        }
        iterations += 1;
        residuals.push(r);
        if r <= opts.tol {
            converged = true;
            break;
        }
    }
    p.normalize();
    Ok((
        p,
        ScaleReport {
            iterations,
            residuals,
            converged,
        },
    ))
}

/// `X̃` on the same observed pattern.
pub fn apply_scaling(x: &ObservedMatrix, p: &ScalingParams) -> Result<ObservedMatrix> {
    p.check_shape(x.nrows(), x.ncols())?;
    let vals = x.entries().map(|(i, j, v)| p.forward(v, i, j)).collect();
    x.with_values(vals)
}

/// `D_τ⁻¹ (X − α1ᵀ − 1βᵀ) D_γ⁻¹` for a complete splr matrix, again in splr
/// form with two extra low-rank columns.
pub fn apply_scaling_splr(x: &SplrMatrix, p: &ScalingParams) -> Result<SplrMatrix> {
    let (m, n) = x.shape();
    p.check_shape(m, n)?;
    let (mut left, mut right) = centered_factors(x, p);
    for (mut row, t) in left.axis_iter_mut(Axis(0)).zip(&p.tau) {
        row /= *t;
    }
    for (mut row, g) in right.axis_iter_mut(Axis(0)).zip(&p.gamma) {
        row /= *g;
    }
    let pat = x.pattern();
    let sparse = x
        .sparse_values()
        .iter()
        .zip(pat.rows().iter().zip(pat.cols()))
        .map(|(s, (&i, &j))| s / (p.tau[i] * p.gamma[j]))
        .collect();
    SplrMatrix::new(pat.clone(), sparse, left, right)
}

/// Maps a prediction on the standardized scale back to the data scale.
pub fn invert_scaling(z: f64, i: usize, j: usize, p: &ScalingParams) -> Result<f64> {
    if i >= p.nrows() || j >= p.ncols() {
        return Err(Error::IndexOutOfBounds {
            row: i,
            col: j,
            nrows: p.nrows(),
            ncols: p.ncols(),
        });
    }
    Ok(p.inverse(z, i, j))
}
