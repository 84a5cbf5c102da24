//! Polynomial HJB subsolutions recovered from the equality duals of a
//! solved relaxation, their numerical verification, and feedback synthesis
//! for input-affine problems.
//!
//! Sign conventions are those of the certificate checked by [`verify`]:
//!
//! 1. `L_f v + h + running >= 0` on the trajectory constraint set,
//! 2. `v(T, .) <= H + terminal` on the final set,
//! 3. `int v(0, .) dmu_I + offset` equals the lower bound (or, when the
//!    initial measure is unknown, `min (v(0, .) - initial) + offset` does).
//!
//! `running`, `terminal`, `initial` and `offset` collect the multipliers of
//! every row other than the Liouville rows; they vanish for the plain
//! relaxation of a problem without integral constraints.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{product_moment, KnownFactor};
use crate::ocp::{BoundarySpec, Horizon, MomentRelation, OcpProblem, SupportRelation};
use crate::poly::{lie_derivative, PolyError, Polynomial, VarSet};
use crate::relaxation::{MeasureId, MomentProblem, NonnegKind, RelaxError, RowKind};
use crate::solver::{ConicSolution, SolveStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("value function requires an optimal solution (status {0:?})")]
    NotOptimal(SolveStatus),
    #[error("dual vector has {got} entries, the relaxation has {expected} rows")]
    DualMismatch { expected: usize, got: usize },
    #[error("subsolution check failed: {0}")]
    Contract(Box<ValueFunction>),
    #[error("dynamics are not affine in the inputs: {0}")]
    NotInputAffine(String),
    #[error("running cost is not of the form q(t, x) + u'Ru: {0}")]
    CostNotQuadratic(String),
    #[error("input weight matrix R is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Multiplier terms that complete the HJB certificate, in the user's
/// variables and time units.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub running: Polynomial,
    pub terminal: Polynomial,
    pub initial: Polynomial,
    pub offset: f64,
}

/// Sample points used to check the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Randomly shifted Halton points.
    Halton { points: usize, seed: u64 },
    /// `per_axis` points per sampled coordinate, endpoints included.
    Grid { per_axis: usize },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Halton { points: 10_000, seed: 0 }
    }
}

/// Outcome of the certificate checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Minimum of `L_f v + h + running` over the trajectory samples.
    #[serde(with = "crate::serde_f64")]
    pub min_hjb_residual: f64,
    /// Maximum of `v(T, .) - H - terminal` over the final samples.
    #[serde(with = "crate::serde_f64")]
    pub terminal_violation: f64,
    /// Distance between the bound implied by `v` and the reported bound.
    #[serde(with = "crate::serde_f64")]
    pub bound_error: f64,
    #[serde(with = "crate::serde_f64")]
    pub lower_bound: f64,
    /// Largest coefficient magnitude of `v`, which sets `residual_tol`.
    pub scale: f64,
    pub residual_tol: f64,
    pub bound_tol: f64,
    pub trajectory_samples: usize,
    pub final_samples: usize,
    pub initial_samples: usize,
    pub sampling: Sampling,
    pub passed: bool,
}

/// Polynomial subsolution in the user's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub v: Polynomial,
    pub tf_degree: u32,
    pub time_dependent: bool,
    pub certificate: Certificate,
    pub verification: Verification,
}

impl std::fmt::Display for ValueFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r = &self.verification;
        write!(
            f,
            "v = {} (min residual {:.3e}, terminal violation {:.3e}, bound error {:.3e})",
            self.v, r.min_hjb_residual, r.terminal_violation, r.bound_error
        )
    }
}

/// Reads the value function off the duals and checks it with the default
/// sampling.
pub fn extract_subsolution(mp: &MomentProblem, sol: &ConicSolution) -> Result<ValueFunction, HjbError> {
    extract_subsolution_with(mp, sol, Sampling::default())
}

/// As [`extract_subsolution`] with explicit sampling.
pub fn extract_subsolution_with(
    mp: &MomentProblem,
    sol: &ConicSolution,
    sampling: Sampling,
) -> Result<ValueFunction, HjbError> {
    let vf = recover_value_function_with(mp, sol, sampling)?;
    if vf.verification.passed {
        Ok(vf)
    } else {
        Err(HjbError::Contract(Box::new(vf)))
    }
}

/// Assembles `v` and its certificate; the checks are reported, not enforced.
pub fn recover_value_function(mp: &MomentProblem, sol: &ConicSolution) -> Result<ValueFunction, HjbError> {
    recover_value_function_with(mp, sol, Sampling::default())
}

/// As [`recover_value_function`] with explicit sampling.
pub fn recover_value_function_with(
    mp: &MomentProblem,
    sol: &ConicSolution,
    sampling: Sampling,
) -> Result<ValueFunction, HjbError> {
    if sol.status != SolveStatus::Optimal {
        return Err(HjbError::NotOptimal(sol.status));
    }
    if sol.eq_duals.len() != mp.equalities.len() {
        return Err(HjbError::DualMismatch { expected: mp.equalities.len(), got: sol.eq_duals.len() });
    }
    if sol.nonneg_duals.len() != mp.nonneg.len() {
        return Err(HjbError::DualMismatch { expected: mp.nonneg.len(), got: sol.nonneg_duals.len() });
    }
    let q = &mp.problem;
    let vars = q.vars().clone();
    let tvar = q.time_var();
    let zero = Polynomial::zero(&vars);
    let one = Polynomial::constant(&vars, 1.0);

    let mut v = zero.clone();
    let mut running = &mp.running_cost - q.scost();
    let mut terminal = &mp.final_cost - q.fcost();
    let mut initial = zero.clone();
    let mut offset = 0.0;
    let mut mass_final = 0.0;
    let mut mass_traj = 0.0;

    let adjust = |id: MeasureId, p: Polynomial, running: &mut Polynomial, terminal: &mut Polynomial, initial: &mut Polynomial| {
        match id {
            MeasureId::Trajectory => *running = &*running - &p,
            MeasureId::Final => *terminal = &*terminal - &p,
            MeasureId::Initial => *initial = &*initial + &p,
        }
    };

    for (kind, &lam) in mp.row_kinds.iter().zip(&sol.eq_duals) {
        match kind {
            RowKind::Liouville(k) => {
                let w = Polynomial::monomial(&vars, mp.test_basis.monomials()[*k].clone(), lam);
                v = &v - &w;
            }
            RowKind::SupportEq { measure, constraint, multiplier } => {
                let g = &mp.measure(*measure).constraints[*constraint].lhs;
                let p = g * &Polynomial::monomial(&vars, multiplier.clone(), lam);
                adjust(*measure, p, &mut running, &mut terminal, &mut initial);
            }
            RowKind::Integral(k) => {
                let c = &q.sconstraints()[*k];
                running = &running - &c.integrand.scale(lam);
                offset += lam * c.bound;
            }
            RowKind::Mass(MeasureId::Final) => mass_final = lam,
            RowKind::Mass(MeasureId::Trajectory) => mass_traj = lam,
            RowKind::Mass(MeasureId::Initial) => {}
        }
    }
    for (kind, &z) in mp.nonneg_kinds.iter().zip(&sol.nonneg_duals) {
        match kind {
            NonnegKind::Integral(k) => {
                let c = &q.sconstraints()[*k];
                let sign = match c.relation {
                    MomentRelation::Le => 1.0,
                    MomentRelation::Ge => -1.0,
                    MomentRelation::Eq => unreachable!("equalities are rows"),
                };
                running = &running + &c.integrand.scale(sign * z);
                offset -= sign * z * c.bound;
            }
            NonnegKind::HorizonBound => {
                running = &running + &one.scale(z);
                offset -= z * q.tmax().unwrap_or(0.0);
            }
            NonnegKind::MomentBound(id) => {
                let m = mp.measure(*id);
                let half = m.basis.as_ref().expect("bounded measures are unknown").half();
                let kappa = mp.options.moment_bound.unwrap_or(0.0);
                let trace = Polynomial::from_terms(&vars, half.monomials().iter().map(|a| (a.mul(a), 1.0)));
                let p = (&one.scale(kappa * half.len() as f64) - &trace).scale(z);
                adjust(*id, p, &mut running, &mut terminal, &mut initial);
            }
        }
    }

    if let Some(h) = mp.horizon {
        if mp.time_dependent {
            let t = Polynomial::var(&vars, tvar);
            v = &v + &(&one - &t).scale(mass_traj);
        } else {
            running = &running - &one.scale(mass_traj);
            offset += mass_traj * h;
        }
    }
    let mf = mp.measure(MeasureId::Final);
    if mf.is_known() {
        let gap = &(q.fcost() + &terminal) - &mp.final_test_function(&v);
        v = &v + &one.scale(integrate_known(&gap, &mf.known));
    } else {
        v = &v + &one.scale(mass_final);
    }

    // Back to the user's variables; running quantities are per unit of
    // internal time.
    let s = q.scaling();
    let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
    let certificate = Certificate {
        running: running.scale_vars(&inv).scale(1.0 / s[tvar]),
        terminal: terminal.scale_vars(&inv),
        initial: initial.scale_vars(&inv),
        offset,
    };
    let v = v.scale_vars(&inv);
    let original = q.unscaled();
    let verification = verify(&original, &v, &certificate, sol.objective_value, mp.time_dependent, sampling)?;
    Ok(ValueFunction { v, tf_degree: mp.plan.tf_degree, time_dependent: mp.time_dependent, certificate, verification })
}

fn integrate_known(p: &Polynomial, known: &[KnownFactor]) -> f64 {
    p.terms().map(|(m, c)| c * product_moment(known, m)).sum()
}

fn known_factors(b: &BoundarySpec) -> Vec<KnownFactor> {
    let mut out = Vec::new();
    if let Some(d) = &b.dirac {
        out.push(KnownFactor::Dirac(d.clone()));
    }
    if let Some(u) = &b.uniform {
        out.push(KnownFactor::Uniform(u.clone()));
    }
    out
}

/// One sampled coordinate.
#[derive(Debug, Clone, Copy)]
struct Axis {
    var: usize,
    lo: f64,
    hi: f64,
}

/// Points of a set: optional Dirac atoms crossed with sampled intervals,
/// filtered by inequality constraints.
struct SampleSet {
    nvars: usize,
    atoms: Vec<Vec<(usize, f64)>>,
    axes: Vec<Axis>,
    fixed: Vec<(usize, f64)>,
    constraints: Vec<crate::ocp::SupportConstraint>,
}

const PRIMES: [u8; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

impl SampleSet {
    fn points(&self, sampling: Sampling, salt: u64) -> Vec<Vec<f64>> {
        let dim = self.axes.len();
        let mut unit: Vec<Vec<f64>> = Vec::new();
        match sampling {
            Sampling::Halton { points, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                let n = if dim == 0 { 1 } else { points };
                for i in 0..n {
                    unit.push(
                        (0..dim)
                            .map(|j| {
                                let base = PRIMES[j % PRIMES.len()];
                                (halton::number(base, i + 1) + shift[j]).fract()
                            })
                            .collect(),
                    );
                }
            }
            Sampling::Grid { per_axis } => {
                let k = per_axis.max(1);
                let coord = |i: usize| if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
                let total = k.pow(dim as u32);
                for mut idx in 0..total {
                    let mut pt = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        pt.push(coord(idx % k));
                        idx /= k;
                    }
                    unit.push(pt);
                }
            }
        }
        let atoms: Vec<Vec<(usize, f64)>> = if self.atoms.is_empty() { vec![Vec::new()] } else { self.atoms.clone() };
        let mut out = Vec::new();
        for atom in &atoms {
            for u in &unit {
                let mut pt = vec![0.0; self.nvars];
                for &(v, x) in atom.iter().chain(&self.fixed) {
                    pt[v] = x;
                }
                for (a, &s) in self.axes.iter().zip(u) {
                    pt[a.var] = a.lo + (a.hi - a.lo) * s;
                }
                let inside = self
                    .constraints
                    .iter()
                    .filter(|c| c.relation == SupportRelation::NonNegative)
                    .all(|c| c.violation(&pt) <= 1e-12);
                if inside {
                    out.push(pt);
                }
            }
        }
        out
    }
}

/// Sampling interval of `var`: its bounds where known, otherwise a window of
/// half-width equal to the variable's scale factor.
fn axis(p: &OcpProblem, var: usize) -> Axis {
    let s = p.scaling()[var];
    let (lo, hi) = p.var_bounds(var);
    let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, if s > lo { s } else { lo + 2.0 * s }),
        (false, true) => (if -s < hi { -s } else { hi - 2.0 * s }, hi),
        (false, false) => (-s, s),
    };
    Axis { var, lo, hi }
}

fn time_axis(p: &OcpProblem) -> Axis {
    let end = match p.horizon() {
        Horizon::Fixed(t) => t,
        Horizon::Free => p.tmax().unwrap_or(1.0),
    };
    Axis { var: p.time_var(), lo: 0.0, hi: end }
}

fn boundary_set(p: &OcpProblem, b: &BoundarySpec, extra: Option<Axis>, fixed: Vec<(usize, f64)>) -> SampleSet {
    let nvars = p.vars().len();
    let atoms = b
        .dirac
        .as_ref()
        .map(|d| d.points.iter().map(|pt| d.vars.iter().copied().zip(pt.iter().copied()).collect()).collect())
        .unwrap_or_default();
    let mut axes: Vec<Axis> = b.free_vars().iter().map(|&v| axis(p, v)).collect();
    if let Some(u) = &b.uniform {
        for (&v, &(lo, hi)) in u.vars.iter().zip(&u.intervals) {
            axes.push(Axis { var: v, lo, hi });
        }
    }
    axes.extend(extra);
    SampleSet { nvars, atoms, axes, fixed, constraints: b.constraints.clone() }
}

/// Checks the certificate of `v` for the problem `p` (in the user's
/// variables) against the reported lower bound.
pub fn verify(
    p: &OcpProblem,
    v: &Polynomial,
    cert: &Certificate,
    lower_bound: f64,
    time_dependent: bool,
    sampling: Sampling,
) -> Result<Verification, HjbError> {
    let vars: &Arc<VarSet> = p.vars();
    let tvar = p.time_var();
    let nv = vars.len();
    let with_time = time_dependent || p.data_uses_time();

    // Trajectory set.
    let mut axes = Vec::new();
    if with_time {
        axes.push(time_axis(p));
    }
    axes.extend(vars.state_indices().chain(vars.input_indices()).map(|var| axis(p, var)));
    let traj = SampleSet { nvars: nv, atoms: Vec::new(), axes, fixed: Vec::new(), constraints: p.tconstraints().to_vec() };
    let residual = &(&lie_derivative(v, p.dynamics(), time_dependent)? + p.scost()) + &cert.running;
    let traj_pts = traj.points(sampling, 1);
    let min_res = traj_pts.iter().map(|x| residual.eval(x)).fold(f64::INFINITY, f64::min);

    // Final set.
    let (final_extra, final_fixed) = match (time_dependent, p.horizon()) {
        (true, Horizon::Fixed(t)) => (None, vec![(tvar, t)]),
        (true, Horizon::Free) => (Some(time_axis(p)), Vec::new()),
        _ => (None, Vec::new()),
    };
    let fin = boundary_set(p, p.final_(), final_extra, final_fixed);
    let gap = &(v - p.fcost()) - &cert.terminal;
    let fin_pts = fin.points(sampling, 2);
    let term_viol = fin_pts.iter().map(|x| gap.eval(x)).fold(f64::NEG_INFINITY, f64::max);

    // Initial set.
    let v0 = v.substitute_value(tvar, 0.0);
    let init = boundary_set(p, p.initial(), None, vec![(tvar, 0.0)]);
    let (implied, init_count) = if p.initial().is_known() {
        (integrate_known(&v0, &known_factors(p.initial())) + cert.offset, 0)
    } else {
        let pts = init.points(sampling, 3);
        let lowest = &v0 - &cert.initial;
        let m = pts.iter().map(|x| lowest.eval(x)).fold(f64::INFINITY, f64::min);
        (m + cert.offset, pts.len())
    };

    let scale = v.max_abs_coeff();
    let residual_tol = 1e-4 * (1.0 + scale);
    let bound_tol = 1e-5 * (1.0 + lower_bound.abs());
    let bound_error = (implied - lower_bound).abs();
    let min_hjb_residual = if traj_pts.is_empty() { 0.0 } else { min_res };
    let terminal_violation = if fin_pts.is_empty() { 0.0 } else { term_viol };
    let passed = min_hjb_residual >= -residual_tol
        && terminal_violation <= residual_tol
        && bound_error <= bound_tol
        && implied.is_finite();
    Ok(Verification {
        min_hjb_residual,
        terminal_violation,
        bound_error,
        lower_bound,
        scale,
        residual_tol,
        bound_tol,
        trajectory_samples: traj_pts.len(),
        final_samples: fin_pts.len(),
        initial_samples: init_count,
        sampling,
        passed,
    })
}

/// `u(t, x) = -1/2 R^{-1} B(t, x)' grad_x v` for dynamics `a + B u` and
/// running cost `q + u'Ru`; one polynomial per input.
pub fn synthesize_controller(vf: &ValueFunction, p: &OcpProblem) -> Result<Vec<Polynomial>, HjbError> {
    let vars = p.vars();
    let inputs: Vec<usize> = vars.input_indices().collect();
    let m = inputs.len();
    let n = vars.num_states();

    // B(t, x), column per input.
    let mut b = vec![vec![Polynomial::zero(vars); m]; n];
    for (k, f) in p.dynamics().iter().enumerate() {
        if f.degree_in(&inputs) > 1 {
            return Err(HjbError::NotInputAffine(format!("{} is nonlinear in the inputs", vars.name(vars.state_index(k)))));
        }
        for (j, &u) in inputs.iter().enumerate() {
            b[k][j] = f.differentiate(u)?;
        }
    }

    // R from the input-dependent part of the running cost.
    let mut r = DMatrix::<f64>::zeros(m, m);
    for (mono, c) in p.scost().terms() {
        let e = mono.exponents();
        let du: u32 = inputs.iter().map(|&u| e[u]).sum();
        if du == 0 {
            continue;
        }
        let other = e.iter().enumerate().any(|(v, &x)| x > 0 && !inputs.contains(&v));
        if du != 2 || other {
            return Err(HjbError::CostNotQuadratic(format!("term {} of degree {du} in the inputs", Polynomial::monomial(vars, mono.clone(), c))));
        }
        let idx: Vec<usize> = inputs.iter().enumerate().filter(|(_, &u)| e[u] > 0).map(|(j, _)| j).collect();
        match idx.as_slice() {
            [j] => r[(*j, *j)] += c,
            [i, j] => {
                r[(*i, *j)] += c / 2.0;
                r[(*j, *i)] += c / 2.0;
            }
            _ => unreachable!("degree two in the inputs"),
        }
    }
    let chol = r.clone().cholesky().ok_or(HjbError::NotPositiveDefinite)?;
    let rinv = chol.inverse();

    let grad: Vec<Polynomial> = vars.state_indices().map(|x| vf.v.differentiate(x)).collect::<Result<_, _>>()?;
    let bt_grad: Vec<Polynomial> = (0..m)
        .map(|j| (0..n).fold(Polynomial::zero(vars), |acc, k| &acc + &(&b[k][j] * &grad[k])))
        .collect();
    Ok((0..m)
        .map(|i| (0..m).fold(Polynomial::zero(vars), |acc, j| &acc + &bt_grad[j].scale(-0.5 * rinv[(i, j)])))
        .collect())
}

/// `d/du [grad_x v . f + h]` with the controller substituted; identically
/// zero when `u` is the first-order minimizer.
pub fn stationarity_residual(vf: &ValueFunction, p: &OcpProblem, u: &[Polynomial]) -> Result<Vec<Polynomial>, HjbError> {
    let vars = p.vars();
    let mut ham = p.scost().clone();
    for (k, f) in p.dynamics().iter().enumerate() {
        ham = &ham + &(&vf.v.differentiate(vars.state_index(k))? * f);
    }
    vars.input_indices()
        .map(|ui| {
            let mut d = ham.differentiate(ui)?;
            for (j, uj) in vars.input_indices().enumerate() {
                d = d.compose(uj, &u[j]);
            }
            Ok(d)
        })
        .collect()
}

/// Value of `v` at a state (time zero).
pub fn value_at(v: &Polynomial, x: &[f64]) -> f64 {
    let vars = v.vars();
    let mut pt = vec![0.0; vars.len()];
    for (k, xi) in vars.state_indices().zip(x) {
        pt[k] = *xi;
    }
    v.eval(&pt)
}
