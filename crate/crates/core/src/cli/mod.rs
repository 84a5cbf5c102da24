//! Command-line front end: problem files, `solve`, `simulate` and `verify`.
//!
//! Exit codes: 0 success, 1 input or I/O error (or failed verification),
//! 2 infeasible or unbounded, 3 numerical failure, 64 usage error.

mod parse;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use parse::{parse_problem_file, parse_problem_str, ProblemFile, ProblemFileError};
pub use report::{
    poly_from_terms, poly_terms, CertificateReport, ControlLaw, DegreeReport, MeasureReport, ReportTimings,
    SolveReport, SolverReport, Term, ValueFunctionReport,
};

use crate::hjb::{value_at, verify, Sampling};
use crate::pipeline::{solve, PipelineOptions};
use crate::relaxation::{DegreeMode, RelaxError};
use crate::sim::{export_csv, format_g, simulate, PolynomialFeedback, SimOptions, SimStatus};
use crate::solver::SolveStatus;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "polyocp", version, about = "Moment relaxations for polynomial optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the relaxation and write a JSON report.
    Solve(SolveArgs),
    /// Simulate the closed loop with the controller of a report.
    Simulate(SimulateArgs),
    /// Re-check the value function of a report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub file: PathBuf,
    /// Truncation degree of the occupation-measure moments.
    #[arg(long, required_unless_present = "tf_degree", conflicts_with = "tf_degree")]
    pub mom_degree: Option<u32>,
    /// Degree of the test functions.
    #[arg(long)]
    pub tf_degree: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the `seed` option of the file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print solver iterations.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, default_value_t = 20.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Points per axis of a regular grid; Halton points when absent.
    #[arg(long)]
    pub grid: Option<usize>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Solve(a) => cmd_solve(&a, out, err),
        Command::Simulate(a) => cmd_simulate(&a, out, err),
        Command::Verify(a) => cmd_verify(&a, out, err),
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::Infeasible | SolveStatus::Unbounded => EXIT_INFEASIBLE,
        SolveStatus::NumericalFailure | SolveStatus::IterationLimit => EXIT_NUMERICAL,
    }
}

/// Builds the report for a problem file; `Err` carries an exit code and message.
pub fn solve_file(args: &SolveArgs) -> Result<SolveReport, (i32, String)> {
    let mode = match (args.mom_degree, args.tf_degree) {
        (Some(d), None) => DegreeMode::MomDegree(d),
        (None, Some(d)) => DegreeMode::TfDegree(d),
        _ => return Err((EXIT_USAGE, "give exactly one of --mom-degree and --tf-degree".into())),
    };
    let text = read(&args.file).map_err(|m| (EXIT_FAILURE, m))?;
    let pf = parse_problem_str(&text).map_err(|e| (EXIT_FAILURE, format!("{}: {e}", args.file.display())))?;
    let seed = args.seed.or(pf.seed).unwrap_or(0);
    let mut opts = PipelineOptions::new(mode);
    opts.relax = pf.relax;
    opts.sampling = Sampling::Halton { points: 10_000, seed };
    opts.solver.verbose = args.verbose;
    match solve(&pf.problem, &opts) {
        Ok(outcome) => Ok(SolveReport::from_outcome(&outcome, &text, pf.relax, seed)),
        Err(e @ Error::Relax(RelaxError::DegreeTooSmall { .. })) => Err((EXIT_USAGE, e.to_string())),
        Err(e) => Err((EXIT_FAILURE, e.to_string())),
    }
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let report = match solve_file(args) {
        Ok(r) => r,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return code;
        }
    };
    if let Some(path) = &args.out {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_FAILURE;
        }
    }
    let _ = writeln!(out, "status: {:?}", report.status);
    if let Some(b) = report.lower_bound {
        let _ = writeln!(out, "lower bound: {}", format_g(b, 12));
    }
    let _ = writeln!(out, "test function degree: {}", report.degree.tf_degree);
    if let Some(v) = &report.verification {
        let _ = writeln!(
            out,
            "verification: {} (min residual {:.3e}, terminal {:.3e}, bound error {:.3e})",
            if v.passed { "passed" } else { "FAILED" },
            v.min_hjb_residual,
            v.terminal_violation,
            v.bound_error
        );
    }
    for note in &report.notes {
        let _ = writeln!(err, "note: {note}");
    }
    status_code(report.status)
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match simulate_report(args, out) {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn load_report(path: &Path) -> Result<SolveReport, String> {
    SolveReport::from_json(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn simulate_report(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), String> {
    let pf = parse_problem_file(&args.file).map_err(|e| format!("{}: {e}", args.file.display()))?;
    let p = pf.problem.unscaled();
    let report = load_report(&args.report)?;
    let laws = report
        .control_laws(p.vars())
        .ok_or("the report has no controller for this problem (is it input-affine with a quadratic input cost?)")?;
    let x0 = args
        .x0
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad --x0 entry `{}`", s.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = SimOptions { t_max: args.tmax, dt: args.dt, ..SimOptions::default() };
    let traj = simulate(&p, &PolynomialFeedback { laws }, &x0, &opts).map_err(|e| e.to_string())?;
    if let Some(path) = &args.csv {
        export_csv(&traj, path).map_err(|e| e.to_string())?;
    }
    let xf = traj.final_state();
    let mut end = vec![0.0; p.vars().len()];
    for (k, v) in p.vars().state_indices().enumerate() {
        end[v] = xf[k];
    }
    let achieved = traj.running_cost() + p.fcost().eval(&end);
    let _ = writeln!(out, "status: {:?}", traj.status);
    let _ = writeln!(out, "final time: {}", format_g(traj.final_time(), 12));
    let _ = writeln!(out, "achieved cost: {}", format_g(achieved, 12));
    if let Some(b) = report.lower_bound {
        let _ = writeln!(out, "lower bound: {}", format_g(b, 12));
    }
    if let Some((v, _)) = report.value_function(p.vars()) {
        let _ = writeln!(out, "v(0, x0): {}", format_g(value_at(&v, &x0), 12));
    }
    if traj.status == SimStatus::BlowUp {
        return Err("the closed loop diverged".into());
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<bool, String> {
        let report = load_report(&args.report)?;
        let pf = parse_problem_str(&report.problem).map_err(|e| format!("embedded problem: {e}"))?;
        let p = pf.problem.unscaled();
        let (v, cert) = report.value_function(p.vars()).ok_or("the report has no value function")?;
        let lower_bound = report.lower_bound.ok_or("the report has no lower bound")?;
        let time_dependent = report.vf.as_ref().is_some_and(|vf| vf.time_dependent);
        let sampling = match args.grid {
            Some(0) => return Err("--grid needs at least one point per axis".into()),
            Some(k) => Sampling::Grid { per_axis: k },
            None => Sampling::Halton { points: 10_000, seed: report.seed },
        };
        let r = verify(&p, &v, &cert, lower_bound, time_dependent, sampling).map_err(|e| e.to_string())?;
        let _ = writeln!(out, "min HJB residual: {:.6e} (must be >= {:.1e})", r.min_hjb_residual, -r.residual_tol);
        let _ = writeln!(out, "terminal violation: {:.6e} (must be <= {:.1e})", r.terminal_violation + 0.0, r.residual_tol);
        let _ = writeln!(out, "bound error: {:.6e} (must be <= {:.1e})", r.bound_error, r.bound_tol);
        let _ = writeln!(out, "samples: {} trajectory, {} final, {} initial", r.trajectory_samples, r.final_samples, r.initial_samples);
        let _ = writeln!(out, "{}", if r.passed { "passed" } else { "FAILED" });
        Ok(r.passed)
    })();
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}
