//! Command-line front end. Exit codes: 0 success, 2 invalid input or
//! flags, 3 a result flagged as not converged (or an inconclusive
//! certificate), 1 a failed certificate.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::bench::{run_bench, summarize};
use crate::completion::{fit, fit_path, lambda_max, Algorithm, FitConfig, FitResult, LambdaSpec};
use crate::diagnostics::{certify_optimality, rate_report, CertStatus, CertifyOptions, IterTrace};
use crate::io::{
    fmt_f64, load_observed, trace_line, write_matrix_market, write_trace, DataFormat, ModelBundle, ModelMeta,
    BUNDLE_FORMAT_VERSION, TRACE_HEADER,
};
use crate::scaling::{
    apply_scaling, apply_scaling_splr, fit_scaling, fit_scaling_incremental, Axes, ScaleFlags, ScaleReport,
    ScalingOptions, ScalingParams,
};
use crate::simulate::simulate_instance;
use crate::soft_svd::{soft_svd_solve, SoftSvdConfig};
use crate::splr::{ObservedMatrix, SplrMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "softimpute",
    version,
    about = "Matrix completion and regularized low-rank SVD by alternating ridge regressions",
    after_help = "Exit codes: 0 success, 1 certificate FAIL, 2 invalid input or flags, \
                  3 not converged or certificate INCONCLUSIVE."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one completion model and write a model directory and trace.
    Fit(FitArgs),
    /// Fit a decreasing sequence of lambdas with warm starts.
    Path(PathArgs),
    /// Soft-thresholded SVD of a complete sparse matrix (zeros off the stored
    /// entries), optionally centered and scaled without densifying.
    Svd(SvdArgs),
    /// Estimate row/column centers and scales and write the standardized matrix.
    Scale(ScaleArgs),
    /// Predict entries listed in a probe file from a saved model.
    Predict(PredictArgs),
    /// Check a saved model for optimality of the nuclear-norm problem.
    Certify(CertifyArgs),
    /// Run the solvers on one instance from the same start and compare.
    Bench(BenchArgs),
    /// Write a simulated instance (training entries and held-out truth).
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Data file.
    #[arg(long)]
    pub input: PathBuf,
    /// matrixmarket | csv_triplets | movielens (default: from the extension).
    #[arg(long)]
    pub format: Option<DataFormat>,
}

impl InputArgs {
    fn load(&self) -> anyhow::Result<(ObservedMatrix, DataFormat)> {
        let format = resolve_format(&self.input, self.format)?;
        let x = load_observed(&self.input, format).with_context(|| format!("reading {}", self.input.display()))?;
        Ok((x, format))
    }
}

fn resolve_format(path: &Path, given: Option<DataFormat>) -> anyhow::Result<DataFormat> {
    given
        .or_else(|| DataFormat::from_path(path))
        .ok_or_else(|| anyhow!("cannot infer the format of {}; pass --format", path.display()))
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads for the block-parallel kernels (0 = all cores).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Fixed reduction order and zero wall-clock columns, so repeated runs
    /// write identical files.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "softimpute_als")]
    pub algorithm: Algorithm,
    /// Operating rank.
    #[arg(long)]
    pub rank: usize,
    /// Stop when the squared relative change of the model falls to this.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    /// Write every k-th iteration to the trace (first and last always kept).
    #[arg(long, default_value_t = 1)]
    pub trace_every: usize,
}

#[derive(Debug, Args)]
pub struct LambdaArgs {
    /// Nuclear-norm penalty.
    #[arg(long, conflicts_with = "lambda_frac")]
    pub lambda: Option<f64>,
    /// Lambda as a fraction of lambda_max, the smallest value giving a zero model.
    #[arg(long)]
    pub lambda_frac: Option<f64>,
}

impl LambdaArgs {
    fn resolve(&self, x: &ObservedMatrix) -> anyhow::Result<f64> {
        match (self.lambda, self.lambda_frac) {
            (Some(l), None) => Ok(l),
            (None, Some(f)) => Ok(f * lambda_max(x)?),
            _ => bail!("pass --lambda or --lambda-frac"),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// Centering: rows | cols | both | none.
    #[arg(long, default_value = "none")]
    pub center: Axes,
    /// Scaling: rows | cols | both | none.
    #[arg(long, default_value = "none")]
    pub scale: Axes,
    #[arg(long, default_value_t = 1e-10)]
    pub scale_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub scale_max_iter: usize,
}

impl ScalingArgs {
    fn options(&self) -> ScalingOptions {
        ScalingOptions {
            flags: ScaleFlags::new(self.center, self.scale),
            tol: self.scale_tol,
            max_iter: self.scale_max_iter,
        }
    }

    /// Standardizes `x` when any component is enabled.
    fn apply(&self, x: ObservedMatrix) -> anyhow::Result<(ObservedMatrix, Option<(ScalingParams, ScaleReport)>)> {
        let opts = self.options();
        if opts.flags.is_identity() {
            return Ok((x, None));
        }
        let (p, rep) = fit_scaling(&x, &opts)?;
        let z = apply_scaling(&x, &p)?;
        Ok((z, Some((p, rep))))
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    #[command(flatten)]
    pub scaling: ScalingArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Model directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV (default: <out>/trace.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Model directory to warm-start from.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// softImpute only: tolerance of the inner soft-SVD (default: --tol).
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub inner_max_iter: usize,
    /// Skip the final soft-thresholding step.
    #[arg(long)]
    pub no_cleanup: bool,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub scaling: ScalingArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated, strictly decreasing lambdas.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_lambdas")]
    pub lambdas: Option<Vec<f64>>,
    /// Number of lambdas log-spaced from 0.95 to 0.05 of lambda_max.
    #[arg(long)]
    pub n_lambdas: Option<usize>,
    /// Operating rank of each fit beyond the previous solution rank.
    #[arg(long, default_value_t = 2)]
    pub rank_increment: usize,
    /// Output directory: path.csv plus one model directory per lambda.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SvdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub rank: usize,
    /// Soft threshold (0 gives a plain truncated SVD).
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[command(flatten)]
    pub scaling: ScalingArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub scaling: ScalingArgs,
    /// Use the incremental update formulas.
    #[arg(long)]
    pub incremental: bool,
    /// Standardized matrix (MatrixMarket).
    #[arg(long)]
    pub out: PathBuf,
    /// Parameter file (param,index,value).
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Probe file listing the cells to predict; its values are used for RMSE.
    #[command(flatten)]
    pub input: InputArgs,
    /// Output CSV (default: stdout). Indices use the probe file's base.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// The training data the model was fitted to.
    #[command(flatten)]
    pub input: InputArgs,
    /// Extra probe dimensions beyond the model rank.
    #[arg(long, default_value_t = 2)]
    pub extra: usize,
    /// Allowed relative discrepancy of the fixed-point check.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Data file; without it a Gaussian factor instance is simulated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DataFormat>,
    #[arg(long, default_value_t = 300)]
    pub m: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub true_rank: usize,
    #[arg(long, default_value_t = 0.7)]
    pub missing: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 25)]
    pub rank: usize,
    #[arg(long, conflicts_with = "lambda_frac")]
    pub lambda: Option<f64>,
    /// Lambda as a fraction of lambda_max. The default 0.7 keeps the solution
    /// rank of the default instance below the operating rank 25.
    #[arg(long, default_value_t = 0.7)]
    pub lambda_frac: f64,
    #[arg(long, value_delimiter = ',', default_value = "softimpute_als,als,softimpute")]
    pub algorithms: Vec<Algorithm>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Relative distance to the common final F that counts as reached.
    #[arg(long, default_value_t = 1e-3)]
    pub target: f64,
    #[command(flatten)]
    pub run: RunArgs,
    /// Combined trace CSV (the standard columns plus an algorithm column).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub true_rank: usize,
    #[arg(long)]
    pub missing: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Training entries (MatrixMarket).
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out cells with their noise-free values (MatrixMarket).
    #[arg(long)]
    pub test: Option<PathBuf>,
}

/// Parses `args` and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Path(a) => cmd_path(a),
        Command::Svd(a) => cmd_svd(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn save_trace(path: &Path, trace: &IterTrace, every: usize, deterministic: bool) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trace(io::BufWriter::new(file), &trace.thinned(every).rows, deterministic)?;
    Ok(())
}

fn fit_config(s: &SolverArgs, run: &RunArgs, lambda: f64) -> FitConfig {
    let mut cfg = FitConfig::new(s.algorithm, s.rank, lambda);
    cfg.tol = s.tol;
    cfg.max_iter = s.max_iter;
    cfg.trace_every = s.trace_every;
    cfg.seed = run.seed;
    cfg.threads = run.threads;
    cfg
}

fn bundle_for(res: &FitResult, seed: u64, scaling: Option<ScalingParams>) -> anyhow::Result<ModelBundle> {
    let meta = ModelMeta {
        format_version: BUNDLE_FORMAT_VERSION,
        m: res.factors.nrows(),
        n: res.factors.ncols(),
        rank: res.factors.rank(),
        lambda: res.lambda,
        algorithm: res.algorithm.to_string(),
        seed,
        converged: res.converged,
        iterations: res.iterations,
        lambda_max: res.lambda_max,
    };
    Ok(ModelBundle::new(meta, res.factors.clone(), scaling)?)
}

fn print_scaling_report(rep: &ScaleReport) {
    println!("scale_iterations={}", rep.iterations);
    println!("scale_residual={}", fmt_f64(rep.final_residual()));
    println!("scale_converged={}", rep.converged);
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<i32> {
    let (x, _) = a.input.load()?;
    let (x, scaling) = a.scaling.apply(x)?;
    let lambda = a.lambda.resolve(&x)?;
    let mut cfg = fit_config(&a.solver, &a.run, lambda);
    cfg.inner_tol = a.inner_tol;
    cfg.inner_max_iter = a.inner_max_iter;
    cfg.final_cleanup = !a.no_cleanup;
    if let Some(dir) = &a.warm_start {
        let prior = ModelBundle::load(dir).with_context(|| format!("loading warm start {}", dir.display()))?;
        cfg.warm_start = Some(prior.factors);
    }
    let res = fit(&x, &cfg)?;
    let scale_ok = scaling.as_ref().is_none_or(|(_, r)| r.converged);
    if let Some((_, rep)) = &scaling {
        print_scaling_report(rep);
    }
    let bundle = bundle_for(&res, a.run.seed, scaling.map(|(p, _)| p))?;
    bundle.save(&a.out)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| a.out.join("trace.csv"));
    save_trace(&trace_path, &res.trace, cfg.trace_every, a.run.deterministic)?;
    println!("algorithm={}", res.algorithm);
    println!("lambda={}", fmt_f64(res.lambda));
    println!("lambda_max={}", fmt_f64(res.lambda_max));
    println!("rank={}", res.factors.nonzero_rank());
    println!("iterations={}", res.iterations);
    println!("converged={}", res.converged);
    println!("objective={}", fmt_f64(res.final_objective()));
    if res.algorithm == Algorithm::SoftImputeAls && !res.steps.is_empty() {
        let rep = rate_report(&res.iteration_trace(), &res.steps, lambda)?;
        println!("rate_bounds_satisfied={}", rep.all_satisfied());
    }
    Ok(if res.converged && scale_ok {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_path(a: PathArgs) -> anyhow::Result<i32> {
    let (x, _) = a.input.load()?;
    let (x, scaling) = a.scaling.apply(x)?;
    let spec = match (&a.lambdas, a.n_lambdas) {
        (Some(l), None) => LambdaSpec::List(l.clone()),
        (None, Some(k)) => LambdaSpec::Auto(k),
        _ => bail!("pass --lambdas or --n-lambdas"),
    };
    // The first fit's lambda is replaced by each path value.
    let cfg = fit_config(&a.solver, &a.run, 1.0);
    let fits = fit_path(&x, &cfg, &spec, a.rank_increment)?;
    fs::create_dir_all(&a.out)?;
    let params = scaling.map(|(p, _)| p);
    let mut summary = String::from("index,lambda,rank,operating_rank,iterations,converged,objective\n");
    let mut all_converged = true;
    for (k, res) in fits.iter().enumerate() {
        let dir = a.out.join(format!("fit_{k:03}"));
        bundle_for(res, a.run.seed, params.clone())?.save(&dir)?;
        save_trace(&dir.join("trace.csv"), &res.trace, cfg.trace_every, a.run.deterministic)?;
        summary.push_str(&format!(
            "{k},{},{},{},{},{},{}\n",
            fmt_f64(res.lambda),
            res.factors.nonzero_rank(),
            res.factors.rank(),
            res.iterations,
            res.converged,
            fmt_f64(res.final_objective())
        ));
        all_converged &= res.converged;
    }
    fs::write(a.out.join("path.csv"), &summary)?;
    print!("{summary}");
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_svd(a: SvdArgs) -> anyhow::Result<i32> {
    let (x, _) = a.input.load()?;
    let (m, n) = (x.nrows(), x.ncols());
    let splr = SplrMatrix::new(
        x.pattern().clone(),
        x.values().to_vec(),
        ndarray::Array2::zeros((m, 0)),
        ndarray::Array2::zeros((n, 0)),
    )?;
    let opts = a.scaling.options();
    let (target, scaling) = if opts.flags.is_identity() {
        (splr, None)
    } else {
        let (p, rep) = fit_scaling_incremental(&splr, &opts)?;
        print_scaling_report(&rep);
        (apply_scaling_splr(&splr, &p)?, Some((p, rep)))
    };
    let mut cfg = SoftSvdConfig::new(a.rank, a.lambda);
    cfg.tol = a.tol;
    cfg.max_iter = a.max_iter;
    cfg.seed = a.run.seed;
    cfg.threads = a.run.threads;
    let res = soft_svd_solve(&target, &cfg)?;
    let scale_ok = scaling.as_ref().is_none_or(|(_, r)| r.converged);
    let meta = ModelMeta {
        format_version: BUNDLE_FORMAT_VERSION,
        m,
        n,
        rank: res.factors.rank(),
        lambda: a.lambda,
        algorithm: "soft_svd".into(),
        seed: a.run.seed,
        converged: res.converged,
        iterations: res.iterations,
        lambda_max: f64::NAN,
    };
    ModelBundle::new(meta, res.factors.clone(), scaling.map(|(p, _)| p))?.save(&a.out)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| a.out.join("trace.csv"));
    save_trace(&trace_path, &res.trace, 1, a.run.deterministic)?;
    println!("rank={}", res.factors.nonzero_rank());
    println!("iterations={}", res.iterations);
    println!("converged={}", res.converged);
    let d: Vec<String> = res.factors.d.iter().map(|&v| fmt_f64(v)).collect();
    println!("d={}", d.join(","));
    Ok(if res.converged && scale_ok {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_scale(a: ScaleArgs) -> anyhow::Result<i32> {
    let (x, _) = a.input.load()?;
    let opts = a.scaling.options();
    let (p, rep) = if a.incremental {
        fit_scaling_incremental(&x, &opts)?
    } else {
        fit_scaling(&x, &opts)?
    };
    let z = apply_scaling(&x, &p)?;
    write_matrix_market(&a.out, &z)?;
    if let Some(path) = &a.params {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "param,index,value")?;
        for (name, v) in [
            ("alpha", &p.alpha),
            ("beta", &p.beta),
            ("tau", &p.tau),
            ("gamma", &p.gamma),
        ] {
            for (k, x) in v.iter().enumerate() {
                writeln!(w, "{name},{k},{}", fmt_f64(*x))?;
            }
        }
        w.flush()?;
    }
    print_scaling_report(&rep);
    Ok(if rep.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_predict(a: PredictArgs) -> anyhow::Result<i32> {
    let model = ModelBundle::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let (probe, format) = a.input.load()?;
    let base = format.index_base();
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "row,col,prediction")?;
    let mut sse = 0.0;
    for (i, j, v) in probe.entries() {
        let pred = model.predict(i, j)?;
        sse += (pred - v).powi(2);
        writeln!(out, "{},{},{}", i + base, j + base, fmt_f64(pred))?;
    }
    out.flush()?;
    if probe.nnz() > 0 {
        eprintln!("rmse={}", fmt_f64((sse / probe.nnz() as f64).sqrt()));
    }
    Ok(EXIT_OK)
}

fn cmd_certify(a: CertifyArgs) -> anyhow::Result<i32> {
    let model = ModelBundle::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let (x, _) = a.input.load()?;
    let x = match &model.scaling {
        Some(p) => apply_scaling(&x, p)?,
        None => x,
    };
    let opts = CertifyOptions {
        probe_rank_extra: a.extra,
        tolerance: a.tol,
        seed: a.run.seed,
        threads: a.run.threads,
        ..CertifyOptions::default()
    };
    let cert = certify_optimality(&x, &model.factors, model.meta.lambda, &opts)?;
    print!("{}", cert.to_text());
    Ok(match cert.status {
        CertStatus::Pass => EXIT_OK,
        CertStatus::Fail => EXIT_CERT_FAIL,
        CertStatus::Inconclusive => EXIT_NOT_CONVERGED,
    })
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<i32> {
    let x = match &a.input {
        Some(path) => load_observed(path, resolve_format(path, a.format)?)?,
        None => simulate_instance(a.m, a.n, a.true_rank, a.missing, a.noise, a.run.seed)?.observed,
    };
    let lambda = match a.lambda {
        Some(l) => l,
        None => a.lambda_frac * lambda_max(&x)?,
    };
    let mut cfg = FitConfig::new(Algorithm::SoftImputeAls, a.rank, lambda);
    cfg.tol = a.tol;
    cfg.max_iter = a.max_iter;
    cfg.seed = a.run.seed;
    cfg.threads = a.run.threads;
    let runs = run_bench(&x, &cfg, &a.algorithms)?;
    let summary = summarize(&runs, a.target);
    println!("lambda={}", fmt_f64(lambda));
    for run in &runs {
        println!("{}_rank={}", run.algorithm, run.result.factors.nonzero_rank());
    }
    print!("{summary}");
    if let Some(path) = &a.trace {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{TRACE_HEADER},algorithm")?;
        for run in &runs {
            for row in &run.result.trace.rows {
                writeln!(w, "{},{}", trace_line(row, a.run.deterministic), run.algorithm)?;
            }
        }
        w.flush()?;
    }
    Ok(if runs.iter().all(|r| r.result.converged) {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<i32> {
    let sim = simulate_instance(a.m, a.n, a.true_rank, a.missing, a.noise, a.seed)?;
    write_matrix_market(&a.out, &sim.observed)?;
    if let Some(path) = &a.test {
        let test = ObservedMatrix::from_triplets(a.m, a.n, sim.held_out.iter().copied())?;
        write_matrix_market(path, &test)?;
    }
    println!("observed={}", sim.observed.nnz());
    println!("held_out={}", sim.held_out.len());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run_from(std::iter::once("softimpute").chain(args.iter().copied()))
    }

    #[test]
    fn fit_predict_certify_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
        assert_eq!(
            run_args(&[
                "simulate",
                "--m",
                "30",
                "--n",
                "20",
                "--true-rank",
                "2",
                "--missing",
                "0.5",
                "--noise",
                "0.1",
                "--out",
                &p("train.mtx"),
                "--test",
                &p("test.mtx")
            ]),
            0
        );
        let code = run_args(&[
            "fit",
            "--input",
            &p("train.mtx"),
            "--rank",
            "5",
            "--lambda-frac",
            "0.3",
            "--tol",
            "1e-9",
            "--max-iter",
            "3000",
            "--out",
            &p("model"),
            "--deterministic",
        ]);
        assert_eq!(code, 0);
        assert_eq!(
            run_args(&[
                "predict",
                "--model",
                &p("model"),
                "--input",
                &p("test.mtx"),
                "--out",
                &p("pred.csv")
            ]),
            0
        );
        let pred = fs::read_to_string(p("pred.csv")).unwrap();
        assert!(pred.starts_with("row,col,prediction\n"));
        assert_eq!(pred.lines().count(), 301);
        assert_eq!(
            run_args(&["certify", "--model", &p("model"), "--input", &p("train.mtx")]),
            0
        );
        let trace = fs::read_to_string(p("model/trace.csv")).unwrap();
        assert!(trace.starts_with(TRACE_HEADER));
    }

    #[test]
    fn validation_errors_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("m");
        let missing = dir.path().join("nope.mtx");
        assert_eq!(
            run_args(&[
                "fit",
                "--input",
                missing.to_str().unwrap(),
                "--rank",
                "2",
                "--lambda",
                "1",
                "--out",
                out.to_str().unwrap()
            ]),
            2
        );
        assert_eq!(run_args(&["fit", "--bogus"]), 2);
        let bad = dir.path().join("bad.mtx");
        fs::write(&bad, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n").unwrap();
        assert_eq!(
            run_args(&[
                "fit",
                "--input",
                bad.to_str().unwrap(),
                "--rank",
                "2",
                "--lambda",
                "0",
                "--out",
                out.to_str().unwrap()
            ]),
            2
        );
    }

    #[test]
    fn non_convergence_exits_3() {
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
        run_args(&[
            "simulate",
            "--m",
            "20",
            "--n",
            "15",
            "--true-rank",
            "3",
            "--missing",
            "0.4",
            "--out",
            &p("x.mtx"),
        ]);
        let code = run_args(&[
            "fit",
            "--input",
            &p("x.mtx"),
            "--rank",
            "4",
            "--lambda-frac",
            "0.1",
            "--max-iter",
            "2",
            "--out",
            &p("m"),
        ]);
        assert_eq!(code, 3);
    }

    #[test]
    fn lambda_above_max_gives_rank_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
        run_args(&[
            "simulate",
            "--m",
            "12",
            "--n",
            "10",
            "--true-rank",
            "2",
            "--missing",
            "0.3",
            "--out",
            &p("x.mtx"),
        ]);
        assert_eq!(
            run_args(&[
                "fit",
                "--input",
                &p("x.mtx"),
                "--rank",
                "3",
                "--lambda-frac",
                "1.5",
                "--out",
                &p("m")
            ]),
            0
        );
        let b = ModelBundle::load(Path::new(&p("m"))).unwrap();
        assert_eq!(b.factors.rank(), 0);
        let rows = fs::read_to_string(p("m/trace.csv")).unwrap().lines().count() - 1;
        assert!(rows <= 2);
    }

    #[test]
    fn path_scale_svd_and_bench_commands() {
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
        run_args(&[
            "simulate",
            "--m",
            "25",
            "--n",
            "18",
            "--true-rank",
            "3",
            "--missing",
            "0.4",
            "--out",
            &p("x.mtx"),
        ]);
        assert_eq!(
            run_args(&[
                "path",
                "--input",
                &p("x.mtx"),
                "--rank",
                "3",
                "--n-lambdas",
                "4",
                "--tol",
                "1e-7",
                "--max-iter",
                "2000",
                "--out",
                &p("path")
            ]),
            0
        );
        assert_eq!(fs::read_to_string(p("path/path.csv")).unwrap().lines().count(), 5);
        assert_eq!(
            run_args(&[
                "scale",
                "--input",
                &p("x.mtx"),
                "--center",
                "both",
                "--scale",
                "both",
                "--scale-tol",
                "1e-16",
                "--scale-max-iter",
                "1000",
                "--out",
                &p("z.mtx"),
                "--params",
                &p("params.csv")
            ]),
            0
        );
        assert_eq!(
            run_args(&[
                "svd",
                "--input",
                &p("x.mtx"),
                "--rank",
                "3",
                "--center",
                "cols",
                "--tol",
                "1e-9",
                "--max-iter",
                "5000",
                "--out",
                &p("svd")
            ]),
            0
        );
        assert_eq!(
            run_args(&[
                "bench",
                "--m",
                "30",
                "--n",
                "20",
                "--true-rank",
                "3",
                "--rank",
                "5",
                "--lambda-frac",
                "0.5",
                "--trace",
                &p("bench.csv"),
                "--deterministic"
            ]),
            0
        );
        let bench = fs::read_to_string(p("bench.csv")).unwrap();
        assert!(bench.lines().next().unwrap().ends_with(",algorithm"));
        assert!(bench.contains(",softimpute\n") && bench.contains(",als\n"));
    }

    #[test]
    fn fit_with_scaling_stores_params() {
        let dir = tempfile::tempdir().unwrap();
        let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
        run_args(&[
            "simulate",
            "--m",
            "25",
            "--n",
            "18",
            "--true-rank",
            "3",
            "--missing",
            "0.3",
            "--out",
            &p("x.mtx"),
        ]);
        let code = run_args(&[
            "fit",
            "--input",
            &p("x.mtx"),
            "--rank",
            "4",
            "--lambda-frac",
            "0.3",
            "--center",
            "both",
            "--scale",
            "cols",
            "--tol",
            "1e-8",
            "--max-iter",
            "3000",
            "--out",
            &p("m"),
        ]);
        assert_eq!(code, 0);
        let b = ModelBundle::load(Path::new(&p("m"))).unwrap();
        assert!(b.scaling.is_some());
    }
}
