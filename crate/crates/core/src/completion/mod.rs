//! Missing-data solvers for `min ½‖P_Ω(X − ABᵀ)‖² + λ/2 (‖A‖² + ‖B‖²)`
//! and its convex counterpart with a nuclear-norm penalty, plus the
//! regularization path driver.

mod als;
mod path;
mod soft_als;
mod softimpute;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::diagnostics::{IterTrace, StepStats, TraceRow};
use crate::error::{mismatch, Error, Result};
use crate::soft_svd::spectral_norm;
use crate::splr::{Exec, FactorPair, ObservedMatrix};

pub use als::fit_als;
pub use path::{auto_lambdas, fit_path, LambdaSpec};
pub use soft_als::{fit_softimpute_als, HalfStep, SoftImputeAls};
pub use softimpute::fit_softimpute;

/// Seed of the subspace iteration behind [`lambda_max`].
const LAMBDA_MAX_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    SoftImputeAls,
    Als,
    SoftImpute,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::SoftImputeAls => "softimpute_als",
            Algorithm::Als => "als",
            Algorithm::SoftImpute => "softimpute",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softimpute_als" | "softimpute-als" => Ok(Algorithm::SoftImputeAls),
            "als" => Ok(Algorithm::Als),
            "softimpute" => Ok(Algorithm::SoftImpute),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub algorithm: Algorithm,
    pub rank: usize,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub warm_start: Option<FactorPair>,
    pub final_cleanup: bool,
    /// Iterations between rows when a trace is written out.
    pub trace_every: usize,
    pub threads: usize,
    /// Inner soft-SVD tolerance for softImpute; defaults to `tol`.
    pub inner_tol: Option<f64>,
    pub inner_max_iter: usize,
}

impl FitConfig {
    pub fn new(algorithm: Algorithm, rank: usize, lambda: f64) -> Self {
        FitConfig {
            algorithm,
            rank,
            lambda,
            tol: 1e-5,
            max_iter: 300,
            seed: 42,
            warm_start: None,
            final_cleanup: true,
            trace_every: 1,
            threads: 1,
            inner_tol: None,
            inner_max_iter: 100,
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
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.lambda == 0.0 && self.algorithm != Algorithm::SoftImpute {
            return Err(Error::InvalidConfig(format!(
                "{} needs lambda > 0: without the ridge term the updates are unbounded",
                self.algorithm
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.trace_every == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "max_iter, inner_max_iter and trace_every must be >= 1".into(),
            ));
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
pub struct FitResult {
    pub algorithm: Algorithm,
    pub lambda: f64,
    /// Soft-thresholded model in SVD form.
    pub factors: FactorPair,
    /// Row 0 is the start; one row per iteration; a final row for the
    /// cleanup step when enabled.
    pub trace: IterTrace,
    /// Per-iteration step statistics (softImpute-ALS only).
    pub steps: Vec<StepStats>,
    pub converged: bool,
    pub iterations: usize,
    pub lambda_max: f64,
}

impl FitResult {
    /// Trace rows that belong to iterations, without the cleanup row.
    pub fn iteration_trace(&self) -> IterTrace {
        IterTrace {
            rows: self.trace.rows.iter().take(self.iterations + 1).copied().collect(),
        }
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.h)
    }
}

/// σ₁ of `P_Ω(X)` with zeros elsewhere: the smallest λ whose solution is 0.
pub fn lambda_max(x: &ObservedMatrix) -> Result<f64> {
    lambda_max_in(x, &Exec::serial())
}

pub(crate) fn lambda_max_in(x: &ObservedMatrix, exec: &Exec) -> Result<f64> {
    if x.nnz() == 0 {
        return Ok(0.0);
    }
    spectral_norm(x, LAMBDA_MAX_SEED, exec)
}

/// Runs the configured algorithm.
pub fn fit(x: &ObservedMatrix, cfg: &FitConfig) -> Result<FitResult> {
    match cfg.algorithm {
        Algorithm::SoftImputeAls => fit_softimpute_als(x, cfg),
        Algorithm::Als => fit_als(x, cfg),
        Algorithm::SoftImpute => fit_softimpute(x, cfg),
    }
}

/// Like [`fit`] with a known `λ_max`, on an existing execution context.
pub(crate) fn fit_in(x: &ObservedMatrix, cfg: &FitConfig, lmax: Option<f64>, exec: &Exec) -> Result<FitResult> {
    match cfg.algorithm {
        Algorithm::SoftImputeAls => soft_als::run(x, cfg, lmax, exec),
        Algorithm::Als => als::run(x, cfg, lmax, exec),
        Algorithm::SoftImpute => softimpute::run(x, cfg, lmax, exec),
    }
}

/// Zero model for λ ≥ λ_max: rank 0 and a single trace row.
fn zero_fit(x: &ObservedMatrix, cfg: &FitConfig, lmax: f64, start: Instant, exec: &Exec) -> FitResult {
    let half_sq = 0.5 * x.values().iter().map(|v| v * v).sum::<f64>();
    let mut trace = IterTrace::new();
    trace.push(TraceRow {
        iter: 0,
        seconds: start.elapsed().as_secs_f64(),
        f: half_sq,
        h: half_sq,
        frob_delta: f64::NAN,
        eta: f64::NAN,
        rank: 0,
        flops: exec.ops(),
    });
    FitResult {
        algorithm: cfg.algorithm,
        lambda: cfg.lambda,
        factors: FactorPair::zero(x.nrows(), x.ncols()),
        trace,
        steps: Vec::new(),
        converged: true,
        iterations: 0,
        lambda_max: lmax,
    }
}

/// Shared preamble: validation, `λ_max`, and the zero-model shortcut.
fn prepare(
    x: &ObservedMatrix,
    cfg: &FitConfig,
    lmax: Option<f64>,
    start: Instant,
    exec: &Exec,
) -> Result<std::result::Result<f64, FitResult>> {
    cfg.validate(x.nrows(), x.ncols())?;
    let lmax = match lmax {
        Some(l) => l,
        None => lambda_max_in(x, exec)?,
    };
    if cfg.lambda >= lmax {
        return Ok(Err(zero_fit(x, cfg, lmax, start, exec)));
    }
    Ok(Ok(lmax))
}
