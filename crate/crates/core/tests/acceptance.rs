//! End-to-end acceptance suite. Prints one PASS / FAIL / SKIP line per
//! criterion (straight to stderr so the lines survive output capture) and
//! fails if any criterion fails.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use softimpute::bench::{linear_fit, ops_per_iteration, run_bench, summarize};
use softimpute::completion::{fit, fit_path, lambda_max, Algorithm, FitConfig, LambdaSpec};
use softimpute::diagnostics::{
    certify_optimality, gradient_f, gradient_fd, objective_f, rate_report, stationarity_residuals, surrogate_q,
    CertStatus, CertifyOptions, IterTrace, Side,
};
use softimpute::io::{load_observed, write_matrix_market, DataFormat};
use softimpute::scaling::{apply_scaling, fit_scaling, fit_scaling_incremental, Axes, ScaleFlags, ScalingOptions};
use softimpute::simulate::simulate_instance;
use softimpute::soft_svd::{oracle_soft_svd, soft_svd_solve, SoftSvdConfig};
use softimpute::splr::ObservedMatrix;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn gaussian(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((m, n), || rng.sample(StandardNormal))
}

fn fro(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Gaussian entries with each cell missing with probability `missing`,
/// keeping the first two cells of every row and column.
fn masked(m: usize, n: usize, missing: f64, rng: &mut ChaCha8Rng) -> ObservedMatrix {
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if i < 2 || j < 2 || rng.random::<f64>() >= missing {
                trip.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    ObservedMatrix::from_triplets(m, n, trip).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..50 {
        let m = rng.random_range(2..=30);
        let n = rng.random_range(2..=20);
        let x = gaussian(m, n, &mut rng);
        let r = rng.random_range(1..=m.min(n));
        let sigma1 = softimpute::dense::svd_skinny(x.view()).unwrap().s[0];
        let lambda = rng.random_range(0.0..1.1) * sigma1;
        let cfg = SoftSvdConfig {
            // Squared relative change, so about 1e-10 per step.
            tol: 1e-20,
            max_iter: 20_000,
            seed: case,
            ..SoftSvdConfig::new(r, lambda)
        };
        let got = soft_svd_solve(&x, &cfg).unwrap().factors.to_dense();
        let want = oracle_soft_svd(x.view(), r, lambda).unwrap();
        let err = fro(&(&got - &want));
        let rel = if fro(&want) > 0.0 { err / fro(&want) } else { err };
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("50 matrices, worst relative error {worst:.2e}, {secs:.2}s");
    if worst <= 1e-6 && secs < 10.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

struct Instance {
    x: ObservedMatrix,
    rank: usize,
    lambda: f64,
}

fn completion_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    (0..20)
        .map(|k| {
            let m = rng.random_range(20..=100);
            let n = rng.random_range(15..=80);
            let missing = rng.random_range(0.1..=0.8);
            let true_rank = rng.random_range(2..=8);
            let sim = simulate_instance(m, n, true_rank, missing, 0.5, 1000 + k).unwrap();
            let lambda = rng.random_range(0.1..0.6) * lambda_max(&sim.observed).unwrap();
            Instance {
                x: sim.observed,
                rank: rng.random_range(2..=12),
                lambda,
            }
        })
        .collect()
}

fn run(inst: &Instance, alg: Algorithm) -> softimpute::completion::FitResult {
    let mut cfg = FitConfig::new(alg, inst.rank, inst.lambda);
    cfg.tol = 1e-7;
    cfg.max_iter = 500;
    fit(&inst.x, &cfg).unwrap()
}

fn descent_suite() -> Outcome {
    let mut worst = [0.0f64; 3];
    for inst in completion_instances() {
        for (slot, alg) in [Algorithm::SoftImputeAls, Algorithm::Als, Algorithm::SoftImpute]
            .into_iter()
            .enumerate()
        {
            let res = run(&inst, alg);
            let values = if alg == Algorithm::SoftImpute {
                res.trace.h_values()
            } else {
                res.trace.f_values()
            };
            worst[slot] = worst[slot].max(IterTrace::max_increase(&values));
        }
    }
    let detail = format!(
        "20 instances, largest increase: softimpute_als F {:.1e}, als F {:.1e}, softimpute H {:.1e}",
        worst[0], worst[1], worst[2]
    );
    if worst.iter().all(|&w| w <= 1e-10) {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn rate_bounds() -> Outcome {
    let (mut eta_ok, mut cor_ok, mut cor_checked, mut printed_ok) = (0, 0, 0, 0);
    let mut failures = Vec::new();
    for (k, inst) in completion_instances().iter().enumerate() {
        let res = run(inst, Algorithm::SoftImputeAls);
        let rep = rate_report(&res.iteration_trace(), &res.steps, inst.lambda).unwrap();
        if rep.eta_bound.satisfied {
            eta_ok += 1;
        } else {
            failures.push(format!(
                "#{k} eta {:.3e} > {:.3e}",
                rep.eta_bound.observed, rep.eta_bound.bound
            ));
        }
        if !rep.ell_l_vacuous {
            cor_checked += 1;
            if rep.step_norm.satisfied && rep.step_proj.satisfied && rep.gradient.satisfied {
                cor_ok += 1;
            } else {
                failures.push(format!("#{k} step or gradient bound"));
            }
            printed_ok += rep.gradient_printed.satisfied as usize;
        }
    }
    let detail = format!(
        "eta bound {eta_ok}/20, step and gradient bounds {cor_ok}/{cor_checked} with lower curvature > 1e-12 \
         (gradient bound with the unpadded constant holds in {printed_ok}/{cor_checked}){}",
        if failures.is_empty() {
            String::new()
        } else {
            format!("; {}", failures.join(", "))
        }
    );
    if eta_ok == 20 && cor_ok == cor_checked {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn majorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut min_margin = f64::INFINITY;
    let mut worst_touch = 0.0f64;
    for _ in 0..200 {
        let m = rng.random_range(2..=20);
        let n = rng.random_range(2..=15);
        let r = rng.random_range(1..=5);
        let x = masked(m, n, rng.random_range(0.0..0.9), &mut rng);
        let lambda = rng.random_range(0.0..2.0);
        let a = gaussian(m, r, &mut rng);
        let b = gaussian(n, r, &mut rng);
        let za = gaussian(m, r, &mut rng);
        let zb = gaussian(n, r, &mut rng);
        let f = objective_f(&x, a.view(), b.view(), lambda).unwrap();
        let qa = surrogate_q(za.view(), a.view(), b.view(), &x, lambda, Side::A).unwrap();
        let qb = surrogate_q(zb.view(), a.view(), b.view(), &x, lambda, Side::B).unwrap();
        let fa = objective_f(&x, za.view(), b.view(), lambda).unwrap();
        let fb = objective_f(&x, a.view(), zb.view(), lambda).unwrap();
        // The margin is a sum of squares; rounding in the two totals is
        // allowed relative to their size.
        let slack = 1e-13 * (1.0 + f.abs());
        min_margin = min_margin.min((qa - fa) / slack).min((qb - fb) / slack);
        let ta = surrogate_q(a.view(), a.view(), b.view(), &x, lambda, Side::A).unwrap();
        let tb = surrogate_q(b.view(), a.view(), b.view(), &x, lambda, Side::B).unwrap();
        worst_touch = worst_touch.max((ta - f).abs()).max((tb - f).abs());
    }
    let detail = format!(
        "200 probes, smallest margin {min_margin:.3} in units of 1e-13(1+F), largest |Q(A|A,B) - F| {worst_touch:.1e}"
    );
    if min_margin >= -1.0 && worst_touch <= 1e-10 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn certificate() -> Outcome {
    let opts = CertifyOptions::default();
    let mut pass = 0;
    let mut worst_stat = 0.0f64;
    let mut notes = Vec::new();
    for k in 0..10u64 {
        let sim = simulate_instance(40, 30, 3, 0.5, 0.3, 500 + k).unwrap();
        let x = &sim.observed;
        let lambda = 0.2 * lambda_max(x).unwrap();
        let mut cfg = FitConfig::new(Algorithm::SoftImputeAls, 12, lambda);
        cfg.tol = 1e-12;
        cfg.max_iter = 20_000;
        let res = fit(x, &cfg).unwrap();
        let q = res.factors.nonzero_rank();
        if q + 2 > cfg.rank {
            notes.push(format!("#{k} solution rank {q} too close to 12"));
            continue;
        }
        let cert = certify_optimality(x, &res.factors, lambda, &opts).unwrap();
        let (su, sv) = stationarity_residuals(x, &res.factors, lambda).unwrap();
        let stat = su.max(sv) / (1.0 + x.frobenius_norm());
        worst_stat = worst_stat.max(stat);
        if cert.status == CertStatus::Pass && stat <= 1e-4 {
            pass += 1;
        } else {
            notes.push(format!("#{k} {:?} discrepancy {:.2e}", cert.status, cert.discrepancy));
        }
    }
    let mut starved_fail = 0;
    let mut min_surplus = f64::INFINITY;
    for k in 0..5u64 {
        let sim = simulate_instance(40, 30, 4, 0.4, 0.3, 600 + k).unwrap();
        let x = &sim.observed;
        let lambda = 0.15 * lambda_max(x).unwrap();
        let mut cfg = FitConfig::new(Algorithm::SoftImputeAls, 1, lambda);
        cfg.tol = 1e-12;
        cfg.max_iter = 20_000;
        let res = fit(x, &cfg).unwrap();
        let cert = certify_optimality(x, &res.factors, lambda, &opts).unwrap();
        if cert.status == CertStatus::Fail && cert.surplus.first().is_some_and(|&s| s > 0.0) {
            starved_fail += 1;
            min_surplus = min_surplus.min(cert.surplus[0]);
        } else {
            notes.push(format!("starved #{k} {:?}", cert.status));
        }
    }
    let detail = format!(
        "PASS on {pass}/10 well-ranked fits (worst scaled stationarity {worst_stat:.1e}), \
         FAIL on {starved_fail}/5 rank-1 fits (smallest surplus {min_surplus:.3e}){}",
        if notes.is_empty() {
            String::new()
        } else {
            format!("; {}", notes.join(", "))
        }
    );
    if pass == 10 && starved_fail == 5 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(3..=12);
        let n = rng.random_range(3..=10);
        let r = rng.random_range(1..=4);
        let x = masked(m, n, 0.4, &mut rng);
        let a = gaussian(m, r, &mut rng);
        let b = gaussian(n, r, &mut rng);
        let lambda = rng.random_range(0.0..2.0);
        let (ga, gb) = gradient_f(&x, a.view(), b.view(), lambda).unwrap();
        let (fa, fb) = gradient_fd(&x, a.view(), b.view(), lambda).unwrap();
        let err = (fro(&(&ga - &fa)).powi(2) + fro(&(&gb - &fb)).powi(2)).sqrt();
        let size = (fro(&ga).powi(2) + fro(&gb).powi(2)).sqrt();
        worst = worst.max(err / size.max(1e-12));
    }
    let detail = format!("20 points, worst relative error {worst:.1e}");
    if worst <= 1e-5 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn cost_model() -> Outcome {
    let sim = simulate_instance(200, 150, 10, 0.7, 1.0, 7).unwrap();
    let lambda = 0.5 * lambda_max(&sim.observed).unwrap();
    let ranks = [4usize, 8, 16, 32];
    let mut ratios = Vec::new();
    for &r in &ranks {
        let mut cfg = FitConfig::new(Algorithm::SoftImputeAls, r, lambda);
        // Fixed iteration count: the stopping rule never fires.
        cfg.tol = 1e-300;
        cfg.max_iter = 10;
        let sals = fit(&sim.observed, &cfg).unwrap();
        cfg.algorithm = Algorithm::Als;
        let als = fit(&sim.observed, &cfg).unwrap();
        ratios.push(ops_per_iteration(&als) / ops_per_iteration(&sals));
    }
    let xs: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
    let (slope, _, r2) = linear_fit(&xs, &ratios);
    let shown: Vec<String> = ratios.iter().map(|v| format!("{v:.2}")).collect();
    let detail = format!(
        "ALS/softImpute-ALS op ratios [{}] for r = 4,8,16,32; slope {slope:.3}, R² {r2:.4}",
        shown.join(", ")
    );
    if slope > 0.0 && r2 > 0.9 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn timing_direction() -> Outcome {
    let start = Instant::now();
    let sim = simulate_instance(300, 200, 50, 0.7, 1.0, 2024).unwrap();
    // λ is set so the solution rank stays below the operating rank 25.
    let lambda = 0.7 * lambda_max(&sim.observed).unwrap();
    let mut cfg = FitConfig::new(Algorithm::SoftImputeAls, 25, lambda);
    cfg.tol = 1e-7;
    cfg.max_iter = 5000;
    let algs = [Algorithm::SoftImputeAls, Algorithm::Als, Algorithm::SoftImpute];
    let runs = run_bench(&sim.observed, &cfg, &algs).unwrap();
    let summary = summarize(&runs, 1e-3);
    let secs = start.elapsed().as_secs_f64();
    let t = |a| summary.line(a).and_then(|l| l.seconds_to_target);
    let (sals, als, si) = (t(algs[0]), t(algs[1]), t(algs[2]));
    let show = |v: Option<f64>| v.map_or("never".to_string(), |s| format!("{s:.3}s"));
    let detail = format!(
        "time to within 1e-3 of common F {:.6e}: softimpute_als {}, als {}, softimpute {}; total {secs:.1}s",
        summary.common_final,
        show(sals),
        show(als),
        show(si)
    );
    let faster = |other: Option<f64>| match (sals, other) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    if faster(als) && faster(si) && secs < 120.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// Matrix with row and column effects and uneven scales, for scaling.
fn scaling_instance(rng: &mut ChaCha8Rng) -> ObservedMatrix {
    let m = rng.random_range(10..=60);
    let n = rng.random_range(8..=40);
    let missing = rng.random_range(0.0..0.5);
    let row_eff: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
    let col_eff: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let row_sd: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let col_sd: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let base = masked(m, n, missing, rng);
    let vals = base
        .entries()
        .map(|(i, j, v)| row_eff[i] + col_eff[j] + row_sd[i] * col_sd[j] * v)
        .collect();
    base.with_values(vals).unwrap()
}

fn line_moments_error(z: &ObservedMatrix) -> (f64, f64) {
    let (m, n) = (z.nrows(), z.ncols());
    let mut sums = vec![(0.0, 0.0, 0.0); m + n];
    for (i, j, v) in z.entries() {
        for k in [i, m + j] {
            sums[k].0 += v;
            sums[k].1 += v * v;
            sums[k].2 += 1.0;
        }
    }
    sums.iter().fold((0.0f64, 0.0f64), |(mean_err, var_err), &(s, q, c)| {
        let mean = s / c;
        (mean_err.max(mean.abs()), var_err.max((q / c - mean * mean - 1.0).abs()))
    })
}

fn scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut within, mut moments_ok, mut agree) = (0, 0, 0);
    let (mut worst_mean, mut worst_var, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = scaling_instance(&mut rng);
        let mut opts = ScalingOptions::new(ScaleFlags::all());
        opts.tol = 1e-20;
        opts.max_iter = 1000;
        let (p, rep) = fit_scaling(&x, &opts).unwrap();
        within += rep.sweeps_to(1e-8).is_some_and(|k| k <= 100) as usize;
        let (me, ve) = line_moments_error(&apply_scaling(&x, &p).unwrap());
        worst_mean = worst_mean.max(me);
        worst_var = worst_var.max(ve);
        moments_ok += (me <= 1e-6 && ve <= 1e-6) as usize;
        let mut inc_opts = opts;
        inc_opts.tol = 1e-24;
        let (q, _) = fit_scaling_incremental(&x, &inc_opts).unwrap();
        let gap = [
            (&p.alpha, &q.alpha),
            (&p.beta, &q.beta),
            (&p.tau, &q.tau),
            (&p.gamma, &q.gamma),
        ]
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max);
        worst_gap = worst_gap.max(gap);
        agree += (gap <= 1e-6) as usize;
    }

    // Column-only standardization is solved by one sweep; two-way
    // centering converges within the default sweep budget.
    let (mut col_ok, mut anova_ok, mut anova_worst) = (0, 0, 0usize);
    for _ in 0..10 {
        let x = scaling_instance(&mut rng);
        let (_, rep) = fit_scaling(&x, &ScalingOptions::new(ScaleFlags::new(Axes::Cols, Axes::Cols))).unwrap();
        col_ok += (rep.iterations <= 1 && rep.final_residual() <= 1e-10) as usize;
        let (_, rep) = fit_scaling(&x, &ScalingOptions::new(ScaleFlags::new(Axes::Both, Axes::None))).unwrap();
        anova_ok += (rep.converged && rep.iterations <= 100 && rep.final_residual() <= 1e-10) as usize;
        anova_worst = anova_worst.max(rep.iterations);
    }
    let detail = format!(
        "R <= 1e-8 within 100 sweeps {within}/100; moments {moments_ok}/100 (worst mean {worst_mean:.1e}, \
         variance {worst_var:.1e}); incremental vs direct {agree}/100 (worst {worst_gap:.1e}); \
         column-only in one sweep {col_ok}/10; two-way centering {anova_ok}/10 (max {anova_worst} sweeps)"
    );
    if within >= 95 && moments_ok == 100 && agree == 100 && col_ok == 10 && anova_ok == 10 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn movielens_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("SOFTIMPUTE_ML100K") {
        return Some(PathBuf::from(p));
    }
    let default = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data");
    default.exists().then_some(default)
}

fn movielens_smoke() -> Outcome {
    let Some(path) = movielens_path() else {
        return Outcome::Skip("data/ml-100k/u.data not found and SOFTIMPUTE_ML100K unset".into());
    };
    let start = Instant::now();
    let x = match load_observed(&path, DataFormat::MovieLens) {
        Ok(x) => x,
        Err(e) => return Outcome::Fail(format!("loading {}: {e}", path.display())),
    };
    let shape = (x.nrows(), x.ncols(), x.nnz());
    if shape != (943, 1682, 100_000) {
        return Outcome::Fail(format!("loaded shape {shape:?}"));
    }
    let mut cfg = FitConfig::new(Algorithm::SoftImputeAls, 10, 1.0);
    cfg.tol = 1e-5;
    cfg.max_iter = 300;
    let fits = fit_path(&x, &cfg, &LambdaSpec::Auto(10), 2).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let monotone = fits.iter().all(|r| {
        let f = r.trace.f_values();
        IterTrace::max_increase(&f) <= 1e-12 * f[0].abs().max(1.0)
    });
    let ranks: Vec<String> = fits.iter().map(|r| r.factors.nonzero_rank().to_string()).collect();
    let detail = format!(
        "943x1682 with 100000 ratings; 10 fits in {secs:.1}s, ranks [{}]",
        ranks.join(",")
    );
    if fits.len() == 10 && monotone && secs < 600.0 {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; monotone {monotone}"))
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Trace with the wall-clock column blanked.
fn without_seconds(trace: &[u8]) -> String {
    String::from_utf8_lossy(trace)
        .lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            if cols.len() > 1 {
                cols[1] = "";
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.mtx");
    let sim = simulate_instance(150, 130, 5, 0.5, 0.5, 11).unwrap();
    write_matrix_market(&data, &sim.observed).unwrap();
    let fit_once = |name: &str, extra: &[&str]| -> Vec<(String, Vec<u8>)> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_softimpute"))
            .args(["fit", "--input"])
            .arg(&data)
            .args([
                "--rank",
                "8",
                "--lambda-frac",
                "0.3",
                "--tol",
                "1e-6",
                "--max-iter",
                "200",
                "--seed",
                "5",
            ])
            .args(["--center", "both", "--out"])
            .arg(&out)
            .args(extra)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        read_dir_bytes(&out)
    };

    let a = fit_once("single_a", &["--threads", "1"]);
    let b = fit_once("single_b", &["--threads", "1"]);
    let models_equal = a
        .iter()
        .zip(&b)
        .all(|(x, y)| x.0 != "trace.csv" && x == y || x.0 == "trace.csv");
    let trace = |v: &[(String, Vec<u8>)]| v.iter().find(|f| f.0 == "trace.csv").map(|f| f.1.clone()).unwrap();
    let traces_equal = without_seconds(&trace(&a)) == without_seconds(&trace(&b));

    let reference = fit_once("det_1", &["--threads", "1", "--deterministic"]);
    let threaded_equal = ["2", "4", "0"]
        .iter()
        .all(|t| fit_once(&format!("det_{t}"), &["--threads", t, "--deterministic"]) == reference);
    let repeat_equal = fit_once("det_1b", &["--threads", "1", "--deterministic"]) == reference;

    let detail = format!(
        "single-threaded repeat: model files identical {models_equal}, trace identical apart from wall-clock \
         seconds {traces_equal}; --deterministic: byte-identical repeat {repeat_equal}, across --threads 1/2/4/0 \
         {threaded_equal}"
    );
    if a.len() == b.len() && models_equal && traces_equal && threaded_equal && repeat_equal {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

#[test]
fn acceptance() {
    let checks: [(&str, Check); 11] = [
        ("oracle equivalence of the soft-thresholded SVD", oracle_equivalence),
        ("descent of F and H along every trace", descent_suite),
        ("rate bounds", rate_bounds),
        ("majorization", majorization),
        ("optimality certificate", certificate),
        ("analytic gradients", gradients),
        ("cost model", cost_model),
        ("timing direction", timing_direction),
        ("scaling", scaling),
        ("MovieLens-100K smoke", movielens_smoke),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (k, (name, check)) in checks.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed.push(k + 1);
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        writeln!(err, "criterion {:>2} {tag}: {name}: {detail}", k + 1).unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
