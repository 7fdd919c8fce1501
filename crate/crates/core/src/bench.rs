//! Head-to-head runs of the completion solvers on one instance from the
//! same starting state.

use std::fmt;

use crate::completion::{fit, Algorithm, FitConfig, FitResult};
use crate::diagnostics::IterTrace;
use crate::error::{Error, Result};
use crate::splr::ObservedMatrix;

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub algorithm: Algorithm,
    pub result: FitResult,
}

/// How one solver did against the common target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchLine {
    pub algorithm: Algorithm,
    pub final_f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub total_seconds: f64,
    /// Wall time of the first trace row within the target, if any.
    pub seconds_to_target: Option<f64>,
    pub ops_to_target: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    /// Smallest final objective over the runs.
    pub common_final: f64,
    /// Relative closeness required to count as reaching it.
    pub rel_tol: f64,
    pub lines: Vec<BenchLine>,
}

impl BenchSummary {
    pub fn line(&self, alg: Algorithm) -> Option<&BenchLine> {
        self.lines.iter().find(|l| l.algorithm == alg)
    }
}

impl fmt::Display for BenchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "common_final_F={:.10e} rel_tol={:e}",
            self.common_final, self.rel_tol
        )?;
        writeln!(
            f,
            "{:<15} {:>6} {:>18} {:>10} {:>12} {:>14}",
            "algorithm", "iters", "final_F", "seconds", "to_target_s", "to_target_ops"
        )?;
        for l in &self.lines {
            let secs = l.seconds_to_target.map_or("-".to_string(), |s| format!("{s:.4}"));
            let ops = l.ops_to_target.map_or("-".to_string(), |o| o.to_string());
            writeln!(
                f,
                "{:<15} {:>6} {:>18.10e} {:>10.4} {:>12} {:>14}",
                l.algorithm.to_string(),
                l.iterations,
                l.final_f,
                l.total_seconds,
                secs,
                ops
            )?;
        }
        Ok(())
    }
}

/// Runs each algorithm with `base` (only the algorithm tag changes), so all
/// start from the same seed or warm start.
pub fn run_bench(x: &ObservedMatrix, base: &FitConfig, algorithms: &[Algorithm]) -> Result<Vec<BenchRun>> {
    if algorithms.is_empty() {
        return Err(Error::InvalidConfig("bench needs at least one algorithm".into()));
    }
    algorithms
        .iter()
        .map(|&algorithm| {
            let cfg = FitConfig {
                algorithm,
                ..base.clone()
            };
            Ok(BenchRun {
                algorithm,
                result: fit(x, &cfg)?,
            })
        })
        .collect()
}

/// First trace row with `F ≤ target + rel_tol·|target|`.
pub fn first_within(trace: &IterTrace, target: f64, rel_tol: f64) -> Option<usize> {
    let bound = target + rel_tol * target.abs();
    trace.rows.iter().position(|r| r.f <= bound)
}

pub fn summarize(runs: &[BenchRun], rel_tol: f64) -> BenchSummary {
    let common_final = runs
        .iter()
        .map(|r| r.result.trace.last().map_or(f64::INFINITY, |t| t.f))
        .fold(f64::INFINITY, f64::min);
    let lines = runs
        .iter()
        .map(|run| {
            let trace = &run.result.trace;
            let hit = first_within(trace, common_final, rel_tol);
            BenchLine {
                algorithm: run.algorithm,
                final_f: trace.last().map_or(f64::NAN, |t| t.f),
                iterations: run.result.iterations,
                converged: run.result.converged,
                total_seconds: trace.last().map_or(0.0, |t| t.seconds),
                seconds_to_target: hit.map(|k| trace.rows[k].seconds),
                ops_to_target: hit.map(|k| trace.rows[k].flops),
            }
        })
        .collect();
    BenchSummary {
        common_final,
        rel_tol,
        lines,
    }
}

/// Average counted multiply-adds per iteration, excluding setup and the
/// final cleanup.
pub fn ops_per_iteration(result: &FitResult) -> f64 {
    let rows = &result.trace.rows;
    let k = result.iterations;
    if k == 0 || rows.len() <= k {
        return f64::NAN;
    }
    (rows[k].flops - rows[0].flops) as f64 / k as f64
}

/// Least-squares line through `(x, y)`: `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}
