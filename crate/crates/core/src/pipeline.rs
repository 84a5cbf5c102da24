//! End-to-end solve: degrees, relaxation, conic solve, value function and
//! feedback law.

use std::time::{Duration, Instant};

use crate::hjb::{recover_value_function_with, synthesize_controller, HjbError, Sampling, ValueFunction};
use crate::ocp::OcpProblem;
use crate::poly::Polynomial;
use crate::relaxation::{
    assemble_conic, build_moment_problem_with, extract_moment_matrices, resolve_degrees, DegreeMode,
    DegreePlan, MeasureMoments, MomentProblem, RelaxOptions,
};
use crate::solver::{solve_conic, ConicSolution, SolveStatus, SolverOptions};
use crate::Error;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub mode: DegreeMode,
    pub relax: RelaxOptions,
    pub solver: SolverOptions,
    pub sampling: Sampling,
}

impl PipelineOptions {
    pub fn new(mode: DegreeMode) -> Self {
        PipelineOptions {
            mode,
            relax: RelaxOptions::default(),
            solver: SolverOptions::default(),
            sampling: Sampling::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    pub relax: Duration,
    pub solve: Duration,
    pub recover: Duration,
}

/// Everything produced by one solve. Post-processing failures are kept
/// next to the solution instead of discarding it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub plan: DegreePlan,
    pub moment_problem: MomentProblem,
    pub solution: ConicSolution,
    /// Present when the solve is optimal.
    pub measures: Option<Vec<MeasureMoments>>,
    /// Value function with its verification, whether or not it passed.
    pub value_function: Result<ValueFunction, HjbError>,
    pub controller: Result<Vec<Polynomial>, HjbError>,
    pub timings: Timings,
}

impl Outcome {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    /// The certified lower bound, if the solve is optimal.
    pub fn lower_bound(&self) -> Option<f64> {
        (self.solution.status == SolveStatus::Optimal).then_some(self.solution.objective_value)
    }

    /// True when the value function passed every subsolution check.
    pub fn certified(&self) -> bool {
        self.value_function.as_ref().is_ok_and(|vf| vf.verification.passed)
    }
}

/// Solves the relaxation of `p` and post-processes the result.
pub fn solve(p: &OcpProblem, opts: &PipelineOptions) -> Result<Outcome, Error> {
    let t0 = Instant::now();
    let plan = resolve_degrees(p, opts.mode)?;
    let mp = build_moment_problem_with(p, &plan, &opts.relax)?;
    let cp = assemble_conic(&mp)?;
    let t1 = Instant::now();
    let solution = solve_conic(&cp, &opts.solver)?;
    let t2 = Instant::now();
    let optimal = solution.status == SolveStatus::Optimal;
    let measures = if optimal { Some(extract_moment_matrices(&mp, &solution)?) } else { None };
    let value_function = recover_value_function_with(&mp, &solution, opts.sampling);
    let controller = match &value_function {
        Ok(vf) => synthesize_controller(vf, &p.unscaled()),
        Err(e) => Err(e.clone()),
    };
    let timings = Timings { relax: t1 - t0, solve: t2 - t1, recover: t2.elapsed() };
    Ok(Outcome { plan, moment_problem: mp, solution, measures, value_function, controller, timings })
}
