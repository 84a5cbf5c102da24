//! Optimal control problem description: dynamics, costs, boundary
//! measures, path and integral constraints, and variable scaling.

use std::sync::Arc;

use thiserror::Error;

use crate::poly::{PolyError, Polynomial, VarSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state `{0}` is assigned to more than one boundary factor")]
    BoundaryConflict(String),
    #[error("{0}")]
    InvalidData(String),
    #[error("horizon must be a positive finite number, got {0}")]
    Horizon(f64),
    #[error("scaling factor for `{var}` must be positive, got {factor}")]
    Scaling { var: String, factor: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Fixed(f64),
    Free,
}

/// Override for the time dependence of test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestTime {
    #[default]
    Default,
    Dependent,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportRelation {
    /// `lhs >= 0`
    NonNegative,
    /// `lhs = 0`
    Zero,
}

/// Semialgebraic support constraint in normalized form `lhs >= 0` or `lhs = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportConstraint {
    pub lhs: Polynomial,
    pub relation: SupportRelation,
}

impl SupportConstraint {
    /// `p >= q`
    pub fn geq(p: &Polynomial, q: &Polynomial) -> Self {
        SupportConstraint { lhs: p - q, relation: SupportRelation::NonNegative }
    }

    /// `p <= q`
    pub fn leq(p: &Polynomial, q: &Polynomial) -> Self {
        SupportConstraint { lhs: q - p, relation: SupportRelation::NonNegative }
    }

    /// `p = q`
    pub fn eq(p: &Polynomial, q: &Polynomial) -> Self {
        SupportConstraint { lhs: p - q, relation: SupportRelation::Zero }
    }

    pub fn nonnegative(p: Polynomial) -> Self {
        SupportConstraint { lhs: p, relation: SupportRelation::NonNegative }
    }

    /// Signed violation at a point: `max(0, -g)` or `|g|`.
    pub fn violation(&self, point: &[f64]) -> f64 {
        let g = self.lhs.eval(point);
        match self.relation {
            SupportRelation::NonNegative => (-g).max(0.0),
            SupportRelation::Zero => g.abs(),
        }
    }

    /// If the constraint is a bound `a*v + b >= 0` on a single variable,
    /// returns `(var, lower, upper)` with one side infinite.
    pub fn as_bound(&self) -> Option<(usize, f64, f64)> {
        if self.relation != SupportRelation::NonNegative || self.lhs.degree() != 1 {
            return None;
        }
        let used = self.lhs.used_vars();
        if used.len() != 1 {
            return None;
        }
        let v = used[0];
        let n = self.lhs.vars().len();
        let a = self.lhs.coefficient(&crate::poly::Monomial::var(n, v, 1));
        let b = self.lhs.coefficient(&crate::poly::Monomial::one(n));
        let edge = -b / a;
        Some(if a > 0.0 { (v, edge, f64::INFINITY) } else { (v, f64::NEG_INFINITY, edge) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentRelation {
    Le,
    Eq,
    Ge,
}

/// Constraint on the time integral of a polynomial along the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstraint {
    pub integrand: Polynomial,
    pub relation: MomentRelation,
    pub bound: f64,
}

/// Finitely supported probability measure on a subset of the states.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracFactor {
    pub vars: Vec<usize>,
    /// One point per atom, each with `vars.len()` coordinates.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiracFactor {
    pub fn point(vars: Vec<usize>, point: Vec<f64>) -> Self {
        DiracFactor { vars, points: vec![point], weights: vec![1.0] }
    }

    /// Product of two independent mixtures over disjoint variables.
    pub fn product(&self, other: &DiracFactor) -> DiracFactor {
        let mut vars = self.vars.clone();
        vars.extend(&other.vars);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (q, v) in other.points.iter().zip(&other.weights) {
                let mut pt = p.clone();
                pt.extend(q);
                points.push(pt);
                weights.push(w * v);
            }
        }
        DiracFactor { vars, points, weights }
    }
}

/// Uniform probability measure on a box over a subset of the states.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformFactor {
    pub vars: Vec<usize>,
    pub intervals: Vec<(f64, f64)>,
}

/// Boundary (initial or final) condition split into a Dirac factor, a
/// uniform factor and a free factor carrying support constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundarySpec {
    pub dirac: Option<DiracFactor>,
    pub uniform: Option<UniformFactor>,
    /// Constraints on the remaining (free) states.
    pub constraints: Vec<SupportConstraint>,
    free_vars: Vec<usize>,
}

impl BoundarySpec {
    pub fn dirac_point(vars: Vec<usize>, point: Vec<f64>) -> Self {
        BoundarySpec { dirac: Some(DiracFactor::point(vars, point)), ..Default::default() }
    }

    /// States left to the unknown factor (populated by validation).
    pub fn free_vars(&self) -> &[usize] {
        &self.free_vars
    }

    /// True when every state is fixed by a known factor.
    pub fn is_known(&self) -> bool {
        self.free_vars.is_empty()
    }

    /// The single target point when the whole boundary is one Dirac atom.
    pub fn single_point(&self, nstates: usize, vars: &VarSet) -> Option<Vec<f64>> {
        let d = self.dirac.as_ref()?;
        if self.uniform.is_some() || d.points.len() != 1 || d.vars.len() != nstates {
            return None;
        }
        let mut x = vec![0.0; nstates];
        for (k, &v) in d.vars.iter().enumerate() {
            x[v - vars.state_index(0)] = d.points[0][k];
        }
        Some(x)
    }

    fn validate(&mut self, vars: &VarSet, which: &str) -> Result<(), OcpError> {
        let mut owner = vec![None::<&str>; vars.len()];
        let mut claim = |v: usize, kind: &'static str| -> Result<(), OcpError> {
            if !vars.is_state(v) {
                return Err(OcpError::InvalidData(format!(
                    "{which} condition refers to non-state variable `{}`",
                    vars.name(v)
                )));
            }
            if owner[v].is_some() {
                return Err(OcpError::BoundaryConflict(vars.name(v).to_owned()));
            }
            owner[v] = Some(kind);
            Ok(())
        };
        if let Some(d) = &self.dirac {
            for &v in &d.vars {
                claim(v, "dirac")?;
            }
            if d.points.is_empty() || d.points.len() != d.weights.len() {
                return Err(OcpError::Dimension(format!(
                    "{which} dirac: {} points but {} weights",
                    d.points.len(),
                    d.weights.len()
                )));
            }
            if d.points.iter().any(|p| p.len() != d.vars.len()) {
                return Err(OcpError::Dimension(format!(
                    "{which} dirac: every point needs {} coordinates",
                    d.vars.len()
                )));
            }
            if d.weights.iter().any(|&w| !(w > 0.0)) {
                return Err(OcpError::InvalidData(format!("{which} dirac weights must be positive")));
            }
            let total: f64 = d.weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(OcpError::InvalidData(format!(
                    "{which} dirac weights must sum to 1, got {total}"
                )));
            }
        }
        if let Some(u) = &self.uniform {
            for &v in &u.vars {
                claim(v, "uniform")?;
            }
            if u.intervals.len() != u.vars.len() {
                return Err(OcpError::Dimension(format!("{which} uniform: one interval per variable")));
            }
            if u.intervals.iter().any(|&(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                return Err(OcpError::InvalidData(format!("{which} uniform intervals need a < b")));
            }
        }
        self.free_vars = vars.state_indices().filter(|&v| owner[v].is_none()).collect();
        for c in &self.constraints {
            for v in c.lhs.used_vars() {
                if !vars.is_state(v) {
                    return Err(OcpError::InvalidData(format!(
                        "{which} constraint uses non-state variable `{}`",
                        vars.name(v)
                    )));
                }
                if owner[v].is_some() {
                    return Err(OcpError::BoundaryConflict(vars.name(v).to_owned()));
                }
            }
        }
        Ok(())
    }
}

/// Everything needed to build an [`OcpProblem`].
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub vars: Arc<VarSet>,
    pub dynamics: Vec<Polynomial>,
    pub horizon: Horizon,
    pub scost: Polynomial,
    pub fcost: Polynomial,
    pub initial: BoundarySpec,
    pub final_: BoundarySpec,
    pub tconstraints: Vec<SupportConstraint>,
    pub sconstraints: Vec<MomentConstraint>,
    pub testtime: TestTime,
    /// Upper bound on the final time, needed for free-horizon problems with
    /// time-dependent test functions.
    pub tmax: Option<f64>,
}

impl ProblemSpec {
    /// Declares states and inputs; a time variable `t` is added automatically
    /// (named `time` if a state or input is already called `t`).
    pub fn new<S: AsRef<str>>(states: &[S], inputs: &[S]) -> Result<Self, OcpError> {
        let clash = states.iter().chain(inputs).any(|s| s.as_ref() == "t");
        let vars = VarSet::new(states, inputs, Some(if clash { "time" } else { "t" }))?;
        Ok(Self::with_vars(vars))
    }

    pub fn with_vars(vars: Arc<VarSet>) -> Self {
        ProblemSpec {
            dynamics: Vec::new(),
            horizon: Horizon::Free,
            scost: Polynomial::zero(&vars),
            fcost: Polynomial::zero(&vars),
            initial: BoundarySpec::default(),
            final_: BoundarySpec::default(),
            tconstraints: Vec::new(),
            sconstraints: Vec::new(),
            testtime: TestTime::Default,
            tmax: None,
            vars,
        }
    }

    /// Parses a polynomial over the declared variables.
    pub fn poly(&self, text: &str) -> Result<Polynomial, PolyError> {
        crate::poly::parse_poly(text, &self.vars)
    }

    pub fn state(&self, name: &str) -> Option<usize> {
        self.vars.index_of(name).filter(|&v| self.vars.is_state(v))
    }
}

/// A validated optimal control problem.
///
/// Data are expressed in the problem's own variables; `scaling` relates them
/// to the user's variables via `original = scaling * current`.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    vars: Arc<VarSet>,
    dynamics: Vec<Polynomial>,
    horizon: Horizon,
    scost: Polynomial,
    fcost: Polynomial,
    initial: BoundarySpec,
    final_: BoundarySpec,
    tconstraints: Vec<SupportConstraint>,
    sconstraints: Vec<MomentConstraint>,
    testtime: TestTime,
    tmax: Option<f64>,
    scaling: Vec<f64>,
}

fn check_vars(p: &Polynomial, vars: &Arc<VarSet>, what: &str) -> Result<(), OcpError> {
    if **p.vars() != **vars {
        return Err(OcpError::InvalidData(format!("{what} is over a different variable set")));
    }
    Ok(())
}

/// Validates a [`ProblemSpec`].
pub fn build_problem(spec: ProblemSpec) -> Result<OcpProblem, OcpError> {
    let ProblemSpec {
        vars,
        dynamics,
        horizon,
        scost,
        fcost,
        mut initial,
        mut final_,
        tconstraints,
        sconstraints,
        testtime,
        tmax,
    } = spec;
    if !vars.has_time() {
        return Err(OcpError::InvalidData("the variable set must declare a time variable".into()));
    }
    if vars.num_states() == 0 {
        return Err(OcpError::Dimension("at least one state is required".into()));
    }
    if dynamics.len() != vars.num_states() {
        return Err(OcpError::Dimension(format!(
            "{} dynamics equations for {} states",
            dynamics.len(),
            vars.num_states()
        )));
    }
    for f in &dynamics {
        check_vars(f, &vars, "dynamics")?;
    }
    check_vars(&scost, &vars, "running cost")?;
    check_vars(&fcost, &vars, "final cost")?;
    if let Some(v) = fcost.used_vars().into_iter().find(|&v| !vars.is_state(v)) {
        return Err(OcpError::InvalidData(format!(
            "final cost may only use states, found `{}`",
            vars.name(v)
        )));
    }
    if let Horizon::Fixed(t) = horizon {
        if !(t > 0.0) || !t.is_finite() {
            return Err(OcpError::Horizon(t));
        }
    }
    if let Some(t) = tmax {
        if !(t > 0.0) || !t.is_finite() {
            return Err(OcpError::Horizon(t));
        }
    }
    for c in &tconstraints {
        check_vars(&c.lhs, &vars, "trajectory constraint")?;
    }
    for c in &sconstraints {
        check_vars(&c.integrand, &vars, "integral constraint")?;
        if !c.bound.is_finite() {
            return Err(OcpError::InvalidData("integral constraint bound must be finite".into()));
        }
    }
    for c in initial.constraints.iter().chain(&final_.constraints) {
        check_vars(&c.lhs, &vars, "boundary constraint")?;
    }
    initial.validate(&vars, "initial")?;
    final_.validate(&vars, "final")?;
    let scaling = vec![1.0; vars.len()];
    Ok(OcpProblem {
        vars,
        dynamics,
        horizon,
        scost,
        fcost,
        initial,
        final_,
        tconstraints,
        sconstraints,
        testtime,
        tmax,
        scaling,
    })
}

impl OcpProblem {
    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }
    pub fn dynamics(&self) -> &[Polynomial] {
        &self.dynamics
    }
    pub fn horizon(&self) -> Horizon {
        self.horizon
    }
    pub fn scost(&self) -> &Polynomial {
        &self.scost
    }
    pub fn fcost(&self) -> &Polynomial {
        &self.fcost
    }
    pub fn initial(&self) -> &BoundarySpec {
        &self.initial
    }
    pub fn final_(&self) -> &BoundarySpec {
        &self.final_
    }
    pub fn tconstraints(&self) -> &[SupportConstraint] {
        &self.tconstraints
    }
    pub fn sconstraints(&self) -> &[MomentConstraint] {
        &self.sconstraints
    }
    pub fn testtime(&self) -> TestTime {
        self.testtime
    }
    pub fn tmax(&self) -> Option<f64> {
        self.tmax
    }
    /// Factors with `original = scaling * current`, in variable order.
    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    pub fn time_var(&self) -> usize {
        self.vars.time_index().expect("problems always declare time")
    }

    pub fn num_states(&self) -> usize {
        self.vars.num_states()
    }

    pub fn num_inputs(&self) -> usize {
        self.vars.num_inputs()
    }

    /// Whether dynamics, running cost or trajectory constraints involve time.
    pub fn data_uses_time(&self) -> bool {
        let t = self.time_var();
        self.dynamics.iter().any(|f| f.uses_var(t))
            || self.scost.uses_var(t)
            || self.tconstraints.iter().any(|c| c.lhs.uses_var(t))
            || self.sconstraints.iter().any(|c| c.integrand.uses_var(t))
    }

    pub fn max_dynamics_degree(&self) -> u32 {
        self.dynamics.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// Undoes all scaling, returning the problem in the user's variables.
    pub fn unscaled(&self) -> OcpProblem {
        let inv: Vec<f64> = self.scaling.iter().map(|s| 1.0 / s).collect();
        apply_scaling(self, &inv).expect("scaling factors are positive")
    }

    /// Box bounds on input `k` found among the trajectory constraints.
    pub fn input_bounds(&self, k: usize) -> (f64, f64) {
        let var = self.vars.input_index(k);
        self.var_bounds(var)
    }

    /// Intersection of all single-variable bounds on `var` in the trajectory constraints.
    pub fn var_bounds(&self, var: usize) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for c in &self.tconstraints {
            if let Some((v, l, h)) = c.as_bound() {
                if v == var {
                    lo = lo.max(l);
                    hi = hi.min(h);
                }
            }
        }
        (lo, hi)
    }
}

/// Whether the test functions of the relaxation depend on time.
///
/// Time-independent exactly when the horizon is free and no trajectory data
/// involve time, unless overridden by `testtime`.
pub fn time_dependence(p: &OcpProblem) -> bool {
    match p.testtime {
        TestTime::Dependent => true,
        TestTime::Independent => false,
        TestTime::Default => p.data_uses_time() || matches!(p.horizon, Horizon::Fixed(_)),
    }
}

/// Rewrites the problem in scaled variables `z~ = z / factor` (one factor per
/// variable, time first). The horizon, boundary data and all polynomials are
/// transformed consistently; `scaling` accumulates the factors.
pub fn apply_scaling(p: &OcpProblem, factors: &[f64]) -> Result<OcpProblem, OcpError> {
    let vars = &p.vars;
    if factors.len() != vars.len() {
        return Err(OcpError::Dimension(format!(
            "{} scaling factors for {} variables",
            factors.len(),
            vars.len()
        )));
    }
    for (v, &s) in factors.iter().enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(OcpError::Scaling { var: vars.name(v).to_owned(), factor: s });
        }
    }
    let ts = factors[p.time_var()];
    let sub = |q: &Polynomial| q.scale_vars(factors);
    let dynamics = p
        .dynamics
        .iter()
        .enumerate()
        .map(|(k, f)| sub(f).scale(ts / factors[vars.state_index(k)]))
        .collect();
    let scale_boundary = |b: &BoundarySpec| -> BoundarySpec {
        let mut out = b.clone();
        if let Some(d) = &mut out.dirac {
            for pt in &mut d.points {
                for (x, &v) in pt.iter_mut().zip(&d.vars) {
                    *x /= factors[v];
                }
            }
        }
        if let Some(u) = &mut out.uniform {
            for ((a, b), &v) in u.intervals.iter_mut().zip(&u.vars) {
                *a /= factors[v];
                *b /= factors[v];
            }
        }
        for c in &mut out.constraints {
            c.lhs = sub(&c.lhs);
        }
        out
    };
    Ok(OcpProblem {
        vars: vars.clone(),
        dynamics,
        horizon: match p.horizon {
            Horizon::Fixed(t) => Horizon::Fixed(t / ts),
            Horizon::Free => Horizon::Free,
        },
        scost: sub(&p.scost).scale(ts),
        fcost: sub(&p.fcost),
        initial: scale_boundary(&p.initial),
        final_: scale_boundary(&p.final_),
        tconstraints: p
            .tconstraints
            .iter()
            .map(|c| SupportConstraint { lhs: sub(&c.lhs), relation: c.relation })
            .collect(),
        sconstraints: p
            .sconstraints
            .iter()
            .map(|c| MomentConstraint {
                integrand: sub(&c.integrand).scale(ts),
                relation: c.relation,
                bound: c.bound,
            })
            .collect(),
        testtime: p.testtime,
        tmax: p.tmax.map(|t| t / ts),
        scaling: p.scaling.iter().zip(factors).map(|(a, b)| a * b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn double_integrator(horizon: Horizon) -> OcpProblem {
        let mut s = ProblemSpec::new(&["x1", "x2"], &["u"]).unwrap();
        s.dynamics = vec![s.poly("x2").unwrap(), s.poly("u").unwrap()];
        s.tconstraints = vec![
            SupportConstraint::geq(&s.poly("x2").unwrap(), &s.poly("-1").unwrap()),
            SupportConstraint::geq(&s.poly("u").unwrap(), &s.poly("-1").unwrap()),
            SupportConstraint::leq(&s.poly("u").unwrap(), &s.poly("1").unwrap()),
        ];
        s.initial = BoundarySpec::dirac_point(vec![1, 2], vec![1.0, 1.0]);
        s.final_ = BoundarySpec::dirac_point(vec![1, 2], vec![0.0, 0.0]);
        s.scost = s.poly("1").unwrap();
        s.horizon = horizon;
        build_problem(s).unwrap()
    }

    #[test]
    fn builds_min_time_problem() {
        let p = double_integrator(Horizon::Free);
        assert_eq!(p.num_states(), 2);
        assert!(p.initial().is_known());
        assert_eq!(p.input_bounds(0), (-1.0, 1.0));
        assert_eq!(p.var_bounds(2), (-1.0, f64::INFINITY));
    }

    #[test]
    fn rejects_wrong_dynamics_length() {
        let s = ProblemSpec::new(&["x1", "x2"], &["u"]).unwrap();
        assert!(matches!(build_problem(s), Err(OcpError::Dimension(_))));
    }

    #[test]
    fn rejects_overlapping_boundary_factors() {
        let mut s = ProblemSpec::new(&["x1", "x2"], &["u"]).unwrap();
        s.dynamics = vec![s.poly("x2").unwrap(), s.poly("u").unwrap()];
        s.initial.dirac = Some(DiracFactor::point(vec![1], vec![0.0]));
        s.initial.uniform = Some(UniformFactor { vars: vec![1, 2], intervals: vec![(-1.0, 1.0); 2] });
        assert_eq!(build_problem(s).unwrap_err(), OcpError::BoundaryConflict("x1".into()));
    }

    #[test]
    fn rejects_constraint_on_assigned_state() {
        let mut s = ProblemSpec::new(&["x1", "x2"], &["u"]).unwrap();
        s.dynamics = vec![s.poly("x2").unwrap(), s.poly("u").unwrap()];
        s.initial.dirac = Some(DiracFactor::point(vec![1], vec![0.0]));
        s.initial.constraints =
            vec![SupportConstraint::leq(&s.poly("x1").unwrap(), &s.poly("1").unwrap())];
        assert_eq!(build_problem(s).unwrap_err(), OcpError::BoundaryConflict("x1".into()));
    }

    #[test]
    fn rejects_bad_data() {
        let mut s = ProblemSpec::new(&["x"], &["u"]).unwrap();
        s.dynamics = vec![s.poly("u").unwrap()];
        s.fcost = s.poly("u^2").unwrap();
        assert!(matches!(build_problem(s.clone()), Err(OcpError::InvalidData(_))));
        s.fcost = s.poly("x^2").unwrap();
        s.horizon = Horizon::Fixed(-1.0);
        assert_eq!(build_problem(s.clone()).unwrap_err(), OcpError::Horizon(-1.0));
        s.horizon = Horizon::Free;
        s.initial.dirac = Some(DiracFactor { vars: vec![1], points: vec![vec![0.0], vec![1.0]], weights: vec![0.5, 0.6] });
        assert!(build_problem(s.clone()).is_err());
        s.initial.dirac = None;
        s.initial.uniform = Some(UniformFactor { vars: vec![1], intervals: vec![(1.0, 1.0)] });
        assert!(build_problem(s).is_err());
    }

    #[test]
    fn time_dependence_defaults_and_override() {
        let free = double_integrator(Horizon::Free);
        assert!(!time_dependence(&free));
        assert!(time_dependence(&double_integrator(Horizon::Fixed(3.5))));
        let mut forced = free.clone();
        forced.testtime = TestTime::Dependent;
        assert!(time_dependence(&forced));
    }

    #[test]
    fn identity_scaling_is_noop() {
        let p = double_integrator(Horizon::Fixed(2.0));
        let q = apply_scaling(&p, &[1.0; 4]).unwrap();
        assert_eq!(q.dynamics, p.dynamics);
        assert_eq!(q.scost, p.scost);
        assert_eq!(q.initial, p.initial);
        assert_eq!(q.horizon, p.horizon);
    }

    #[test]
    fn scaling_transforms_data() {
        let p = double_integrator(Horizon::Free);
        let q = apply_scaling(&p, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(q.initial.dirac.as_ref().unwrap().points[0], vec![0.5, 0.5]);
        // x1' = x2 becomes x1~' = (2 x2~) / 2
        assert_eq!(q.dynamics[0], q.vars.index_of("x2").map(|v| Polynomial::var(&q.vars, v)).unwrap());
        assert_eq!(q.scaling(), &[1.0, 2.0, 2.0, 1.0]);

        let mut s = ProblemSpec::new(&["x"], &["u"]).unwrap();
        s.dynamics = vec![s.poly("u").unwrap()];
        s.scost = s.poly("x^2").unwrap();
        let p = build_problem(s.clone()).unwrap();
        let q = apply_scaling(&p, &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(q.dynamics[0], s.poly("0.5*u").unwrap());
        assert_eq!(q.scost, s.poly("4*x^2").unwrap());
    }

    #[test]
    fn scaling_rejects_nonpositive() {
        let p = double_integrator(Horizon::Free);
        assert!(matches!(apply_scaling(&p, &[1.0, 0.0, 1.0, 1.0]), Err(OcpError::Scaling { .. })));
    }
}
