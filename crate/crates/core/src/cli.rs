//! Command-line front end: `run`, `gen-data` and `validate`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::algorithms::{run, Algorithm, RunConfig, RunTrace, SubsolverConfig};
use crate::error::{Error, Result};
use crate::estimators::BatchSchedule;
use crate::io::{read_libsvm_file, read_returns_file, write_libsvm, write_returns, write_trace};
use crate::outer::OuterFunction;
use crate::problem::CompositionProblem;
use crate::problems::{
    gen_synthetic_classification, gen_synthetic_returns, make_cvar_problem, make_nlse_problem, CvarParams,
};
use crate::subsolver::SolverKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sgn", version, about = "Stochastic Gauss-Newton methods for compositional problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an algorithm and write its trace as CSV.
    Run(RunArgs),
    /// Write a synthetic data set (LIBSVM for nlse, CSV returns for cvar).
    GenData(GenArgs),
    /// Check a problem and configuration without running.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Gn,
    Sgn,
    Sgn2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Nlse,
    Cvar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhiArg {
    L2,
    L1,
    Huber,
    Hinge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubsolverArg {
    Adpg,
    Pd,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long, value_enum)]
    pub problem: ProblemArg,
    /// Outer function (nlse only; cvar always uses the hinge penalty).
    #[arg(long, value_enum)]
    pub phi: Option<PhiArg>,
    /// LIBSVM file for nlse, returns CSV for cvar.
    #[arg(long)]
    pub data: PathBuf,
    /// Function-value batch size.
    #[arg(long = "bF")]
    pub b_f: Option<usize>,
    /// Jacobian batch size.
    #[arg(long = "bJ")]
    pub b_j: Option<usize>,
    /// SGN2 inner-loop length.
    #[arg(long)]
    pub inner: Option<usize>,
    /// SGN2 snapshot function batch (default: all samples).
    #[arg(long = "snapF")]
    pub snap_f: Option<usize>,
    /// SGN2 snapshot Jacobian batch (default: all samples).
    #[arg(long = "snapJ")]
    pub snap_j: Option<usize>,
    /// Prox parameter (default 1 for nlse, 5 for cvar).
    #[arg(long = "M")]
    pub m: Option<f64>,
    /// Weight of the outer function (default 1 for nlse, 5 for cvar).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Huber threshold.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    #[arg(long = "tau-lo", default_value_t = 0.0)]
    pub tau_lo: f64,
    #[arg(long = "tau-hi", default_value_t = 1.0)]
    pub tau_hi: f64,
    /// Outer iterations (epochs for sgn2).
    #[arg(long)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Default: adpg for nlse, pd for cvar.
    #[arg(long, value_enum)]
    pub subsolver: Option<SubsolverArg>,
    /// Subsolver tolerance (default relative to ||F~||).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Subsolver iteration cap.
    #[arg(long = "k-max", default_value_t = crate::subsolver::DEFAULT_K_MAX)]
    pub k_max: usize,
    /// Keep going when a subproblem hits the iteration cap.
    #[arg(long)]
    pub lenient: bool,
    /// Append an intercept column to the features (nlse).
    #[arg(long)]
    pub intercept: bool,
    /// Reference optimal value for the rel_residual column.
    #[arg(long = "psi-star", allow_hyphen_values = true)]
    pub psi_star: Option<f64>,
    /// Evaluate the exact objective every k iterations (0 disables it).
    #[arg(long = "objective-every", default_value_t = 1)]
    pub objective_every: usize,
    /// Record wall-clock time (makes the CSV non-reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Trace CSV path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub problem: ProblemArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Maps a library error to a process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::InvalidConfiguration(_) | Error::Unsupported(_) => EXIT_USAGE,
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_) => EXIT_DATA,
        Error::NonConvergence { .. } | Error::InvalidState(_) => EXIT_NUMERICAL,
    }
}

fn read_data_error(path: &Path, err: Error) -> Error {
    match err {
        Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        other => other,
    }
}

/// Builds the problem and a feasible starting point from the `run` arguments.
pub fn build_problem(args: &RunArgs) -> Result<(CompositionProblem, DVector<f64>)> {
    match args.problem {
        ProblemArg::Nlse => {
            let mut data = read_libsvm_file(&args.data).map_err(|e| read_data_error(&args.data, e))?;
            if args.intercept {
                data = data.with_intercept();
            }
            let rho = args.rho.unwrap_or(1.0);
            let base = match args.phi.unwrap_or(PhiArg::L2) {
                PhiArg::L2 => OuterFunction::l2(),
                PhiArg::L1 => OuterFunction::l1(),
                PhiArg::Huber => {
                    if !(args.delta > 0.0) {
                        return Err(Error::InvalidParameter(format!("delta must be positive, got {}", args.delta)));
                    }
                    OuterFunction::huber(args.delta)
                }
                PhiArg::Hinge => OuterFunction::hinge(1.0),
            };
            if !(rho > 0.0) {
                return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
            }
            let problem = make_nlse_problem(data, base.with_weight(rho))?;
            let x0 = DVector::zeros(problem.dim());
            Ok((problem, x0))
        }
        ProblemArg::Cvar => {
            if args.phi.is_some_and(|p| p != PhiArg::Hinge) {
                return Err(Error::InvalidConfiguration("cvar uses the hinge penalty as its outer function".into()));
            }
            let data = read_returns_file(&args.data).map_err(|e| read_data_error(&args.data, e))?;
            let params = CvarParams {
                beta: args.beta,
                gamma: args.gamma,
                rho: args.rho.unwrap_or(CvarParams::default().rho),
                tau_lo: args.tau_lo,
                tau_hi: args.tau_hi,
            };
            let problem = make_cvar_problem(data, params)?;
            let g = problem.regularizer.as_ref().expect("cvar has a regularizer");
            let x0 = g.feasible_point(problem.dim());
            Ok((problem, x0))
        }
    }
}

/// Translates the `run` arguments into a [`RunConfig`].
pub fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let algorithm = match args.algo {
        AlgoArg::Gn => Algorithm::Gn,
        AlgoArg::Sgn => Algorithm::Sgn,
        AlgoArg::Sgn2 => Algorithm::Sgn2,
    };
    let kind = match (args.problem, args.subsolver) {
        (ProblemArg::Cvar, Some(SubsolverArg::Adpg)) => {
            return Err(Error::InvalidConfiguration(
                "cvar has a constraint regularizer; use --subsolver pd".into(),
            ))
        }
        (_, Some(SubsolverArg::Pd)) | (ProblemArg::Cvar, None) => SolverKind::PrimalDual,
        (ProblemArg::Nlse, _) => SolverKind::Adpg,
    };
    let schedule = match algorithm {
        Algorithm::Gn => BatchSchedule::Fixed { b: 1, bhat: 1 },
        _ => match (args.b_f, args.b_j) {
            (Some(b), Some(bhat)) => BatchSchedule::Fixed { b, bhat },
            _ => return Err(Error::InvalidParameter("--bF and --bJ are required for sgn and sgn2".into())),
        },
    };
    let m = args.m.unwrap_or(match args.problem {
        ProblemArg::Nlse => 1.0,
        ProblemArg::Cvar => CvarParams::DEFAULT_M,
    });
    let mut cfg = RunConfig::new(algorithm, m, args.iters, schedule);
    if algorithm == Algorithm::Sgn2 {
        cfg.inner = args
            .inner
            .ok_or_else(|| Error::InvalidParameter("--inner is required for sgn2".into()))?;
        cfg.snapshot = match (args.snap_f, args.snap_j) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(Error::InvalidParameter("give both --snapF and --snapJ or neither".into())),
        };
    }
    if let Some(tol) = args.tol {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
    }
    cfg.subsolver = SubsolverConfig { kind, tol: args.tol, k_max: args.k_max, strict: !args.lenient };
    cfg.seed = args.seed;
    cfg.psi_star = args.psi_star;
    cfg.objective_every = args.objective_every;
    cfg.timing = args.timing;
    Ok(cfg)
}

fn write_output(trace: &RunTrace, psi_star: Option<f64>, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            write_trace(trace, psi_star, BufWriter::new(file))
        }
        None => write_trace(trace, psi_star, std::io::stdout().lock()),
    }
}

fn command_run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let (problem, x0) = build_problem(args)?;
    let trace = run(&problem, &x0, &cfg)?;
    write_output(&trace, args.psi_star, args.out.as_deref())?;
    let last = trace.final_record();
    log::info!(
        "{} steps, {} function and {} Jacobian oracle calls, final objective {}",
        trace.steps(),
        last.oracle_f,
        last.oracle_j,
        last.psi.map_or_else(|| "not evaluated".to_string(), |v| format!("{v:.10e}"))
    );
    Ok(())
}

fn command_validate(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let (problem, _) = build_problem(args)?;
    let notes = cfg.validate(problem.count(), problem.regularizer.is_some())?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "ok: n = {}, p = {}, q = {}, M_phi = {}, L_F = {}",
        problem.n().unwrap_or(0),
        problem.dim(),
        problem.range(),
        problem.constants.m_phi,
        problem.constants.l_f
    )?;
    for note in notes {
        writeln!(out, "note: {note}")?;
    }
    Ok(())
}

fn command_gen(args: &GenArgs) -> Result<()> {
    let file = BufWriter::new(File::create(&args.out)?);
    match args.problem {
        ProblemArg::Nlse => write_libsvm(&gen_synthetic_classification(args.n, args.p, args.seed)?, file),
        ProblemArg::Cvar => write_returns(&gen_synthetic_returns(args.n, args.p, args.seed)?, file),
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => command_run(a),
        Command::GenData(a) => command_gen(a),
        Command::Validate(a) => command_validate(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
