//! Moment relaxation of an optimal control problem: degree planning, the
//! linear moment problem over the initial, final and occupation measures,
//! and its lowering to a conic program with moment and localizing blocks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::moments::{basis, product_moment, KnownFactor, MomentBasis, MomentError};
use crate::ocp::{
    apply_scaling, time_dependence, BoundarySpec, Horizon, MomentRelation, OcpError, OcpProblem,
    SupportConstraint, SupportRelation,
};
use crate::poly::{lie_derivative, Monomial, PolyError, Polynomial};
use crate::solver::{AffineRow, BlockEntry, ConicProgram, ConicSolution, PsdBlock, SolveStatus, SparseRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelaxError {
    #[error("relaxation degree too small: {what} needs degree {need}, have {have}")]
    DegreeTooSmall { what: String, need: u32, have: u32 },
    #[error("free horizon with time-dependent test functions requires an upper bound `tmax` on the final time")]
    MissingTmax,
    #[error("moment problem is not optimal (status {0:?})")]
    NotOptimal(SolveStatus),
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
}

/// How the relaxation degree is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DegreeMode {
    /// Truncation degree of the occupation-measure moments.
    MomDegree(u32),
    /// Degree of the test functions.
    TfDegree(u32),
}

/// Resolved degrees of every ingredient of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreePlan {
    pub mode: DegreeMode,
    pub tf_degree: u32,
    /// Moment truncation degree of the occupation measure (even).
    pub traj_degree: u32,
    /// Moment truncation degree of the boundary measures (even).
    pub boundary_degree: u32,
}

impl DegreePlan {
    pub fn traj_order(&self) -> u32 {
        self.traj_degree / 2
    }

    pub fn boundary_order(&self) -> u32 {
        self.boundary_degree / 2
    }
}

/// Order of the localizing matrix of `g` inside a relaxation of order `r`.
pub fn localizing_order(r: u32, g: &Polynomial) -> Option<u32> {
    r.checked_sub(g.degree().div_ceil(2))
}

fn even(d: u32) -> u32 {
    d + d % 2
}

/// Chooses test-function and truncation degrees.
pub fn resolve_degrees(p: &OcpProblem, mode: DegreeMode) -> Result<DegreePlan, RelaxError> {
    let maxf = p.max_dynamics_degree().max(1);
    let td = time_dependence(p);
    let time_support = td || p.data_uses_time();
    let mut needs: Vec<(String, u32)> = vec![("running cost".into(), p.scost().degree())];
    for (k, c) in p.sconstraints().iter().enumerate() {
        needs.push((format!("integral constraint {k}"), c.integrand.degree()));
    }
    for (k, c) in p.tconstraints().iter().enumerate() {
        needs.push((format!("trajectory constraint {k}"), c.lhs.degree()));
    }
    if time_support {
        needs.push(("time support".into(), 2));
    }
    let (tf, traj) = match mode {
        DegreeMode::TfDegree(d) => {
            if d == 0 {
                return Err(RelaxError::DegreeTooSmall { what: "test functions".into(), need: 1, have: 0 });
            }
            let base = (d - 1 + maxf).max(d);
            let traj = needs.iter().map(|n| n.1).fold(base, u32::max);
            (d, even(traj))
        }
        DegreeMode::MomDegree(d) => {
            let traj = even(d.max(1));
            let tf = (d + 1).saturating_sub(maxf).max(1);
            needs.push(("dynamics".into(), tf - 1 + maxf));
            if let Some((what, need)) = needs.iter().find(|n| n.1 > traj) {
                return Err(RelaxError::DegreeTooSmall { what: what.clone(), need: *need, have: traj });
            }
            (tf, traj)
        }
    };
    let mut boundary = tf.max(p.fcost().degree());
    for c in p.initial().constraints.iter().chain(&p.final_().constraints) {
        boundary = boundary.max(c.lhs.degree());
    }
    Ok(DegreePlan { mode, tf_degree: tf, traj_degree: traj, boundary_degree: even(boundary.max(2)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum MeasureId {
    Initial,
    Final,
    Trajectory,
}

/// One measure of the relaxation: a product of known factors and an unknown
/// factor over `free_vars` whose moments are decision variables.
#[derive(Debug, Clone)]
pub struct MeasureSpec {
    pub id: MeasureId,
    /// All variables of the measure, ascending.
    pub vars: Vec<usize>,
    /// Variables of the unknown factor, ascending (empty when fully known).
    pub free_vars: Vec<usize>,
    pub known: Vec<KnownFactor>,
    /// Support constraints of the unknown factor.
    pub constraints: Vec<SupportConstraint>,
    pub degree: u32,
    /// Moment basis of the unknown factor.
    pub basis: Option<MomentBasis>,
    /// Position of the first unknown moment in the decision vector.
    pub offset: usize,
    nvars_total: usize,
}

impl MeasureSpec {
    pub fn is_known(&self) -> bool {
        self.basis.is_none()
    }

    pub fn num_unknowns(&self) -> usize {
        self.basis.as_ref().map_or(0, MomentBasis::len)
    }

    fn split(&self, m: &Monomial) -> Result<(f64, Option<usize>), RelaxError> {
        let e = m.exponents();
        if let Some(v) = (0..e.len()).find(|&v| e[v] > 0 && !self.vars.contains(&v)) {
            return Err(RelaxError::Internal(format!("variable {v} is not in the {:?} measure", self.id)));
        }
        let known = product_moment(&self.known, m);
        match &self.basis {
            None => Ok((known, None)),
            Some(b) => {
                let mut free = vec![0; self.nvars_total];
                for &v in &self.free_vars {
                    free[v] = e[v];
                }
                Ok((known, Some(self.offset + b.moment_index(&Monomial::new(free))?)))
            }
        }
    }

    /// Adds `sign * <p, mu>` to `form`.
    fn integrate(&self, p: &Polynomial, sign: f64, form: &mut LinearForm) -> Result<(), RelaxError> {
        for (m, c) in p.terms() {
            let (k, idx) = self.split(m)?;
            match idx {
                Some(i) => *form.coeffs.entry(i).or_default() += sign * c * k,
                None => form.constant += sign * c * k,
            }
        }
        Ok(())
    }

    /// Moment of `m` given the decision vector.
    pub fn moment(&self, m: &Monomial, y: &[f64]) -> Result<f64, RelaxError> {
        let (k, idx) = self.split(m)?;
        Ok(k * idx.map_or(1.0, |i| y[i]))
    }

    /// Basis over all variables of the measure at its truncation degree.
    pub fn full_basis(&self) -> MomentBasis {
        basis(&self.vars, self.nvars_total, self.degree)
    }

    pub fn moment_vector(&self, y: &[f64]) -> Result<Vec<f64>, RelaxError> {
        self.full_basis().monomials().iter().map(|m| self.moment(m, y)).collect()
    }
}

#[derive(Debug, Clone, Default)]
struct LinearForm {
    coeffs: BTreeMap<usize, f64>,
    constant: f64,
}

impl LinearForm {
    fn sparse(&self) -> Vec<(usize, f64)> {
        self.coeffs.iter().filter(|(_, &c)| c != 0.0).map(|(&i, &c)| (i, c)).collect()
    }
}

/// Origin of an equality row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowKind {
    /// Weak dynamics for the test monomial at this index of `test_basis`.
    Liouville(usize),
    /// `<g m, mu> = 0` for an equality support constraint.
    SupportEq { measure: MeasureId, constraint: usize, multiplier: Monomial },
    /// Integral equality constraint (index into the problem's list).
    Integral(usize),
    /// Unit mass of a boundary factor, or the horizon length of the occupation measure.
    Mass(MeasureId),
}

/// Origin of an inequality row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonnegKind {
    /// Integral inequality constraint (index into the problem's list).
    Integral(usize),
    /// `tmax - mass >= 0` on the occupation measure of a free horizon.
    HorizonBound,
    /// `kappa * N * mass - trace(M_r) >= 0` on an unknown measure.
    MomentBound(MeasureId),
}

/// Optional additions to the plain relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct RelaxOptions {
    /// Bounds the trace of every unknown moment matrix by `kappa` times its
    /// size times the mass. Restores compactness when some variables are
    /// unconstrained; stays inactive for measures carried by the unit box
    /// of the internal (scaled) variables.
    pub moment_bound: Option<f64>,
}

/// Linear program over moment sequences.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    /// The problem in internal variables (time rescaled to `[0, 1]` when needed).
    pub problem: OcpProblem,
    pub plan: DegreePlan,
    /// Whether test functions depend on time.
    pub time_dependent: bool,
    /// Internal time unit in original time.
    pub time_scale: f64,
    /// Initial, final and trajectory measures in this order.
    pub measures: Vec<MeasureSpec>,
    pub num_vars: usize,
    /// Test monomials, one Liouville row each.
    pub test_basis: MomentBasis,
    pub equalities: Vec<SparseRow>,
    pub row_kinds: Vec<RowKind>,
    pub nonneg: Vec<AffineRow>,
    pub nonneg_kinds: Vec<NonnegKind>,
    pub options: RelaxOptions,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
    /// Running cost actually minimized (the trace polynomial when both costs vanish).
    pub running_cost: Polynomial,
    pub final_cost: Polynomial,
    /// Scaled horizon when fixed.
    pub horizon: Option<f64>,
}

impl MomentProblem {
    pub fn measure(&self, id: MeasureId) -> &MeasureSpec {
        self.measures.iter().find(|m| m.id == id).expect("all three measures exist")
    }

    /// Test function `w` as seen by the final measure.
    pub fn final_test_function(&self, w: &Polynomial) -> Polynomial {
        match (self.time_dependent, self.horizon) {
            (true, Some(h)) => w.substitute_value(self.problem.time_var(), h),
            _ => w.clone(),
        }
    }

    /// `A y - b` for every equality row.
    pub fn equality_residuals(&self, y: &[f64]) -> Vec<f64> {
        self.equalities
            .iter()
            .map(|r| r.coeffs.iter().map(|&(i, c)| c * y[i]).sum::<f64>() - r.rhs)
            .collect()
    }

    /// Converts occupation moments over the trajectory basis from original
    /// to internal variables.
    pub fn internal_trajectory_moments(&self, original: &[f64]) -> Vec<f64> {
        let s = self.problem.scaling();
        let st = s[self.problem.time_var()];
        let tb = self.measure(MeasureId::Trajectory).full_basis();
        tb.monomials().iter().zip(original).map(|(m, &y)| y / (st * m.eval(s))).collect()
    }

    /// Residuals of the Liouville rows for given internal occupation
    /// moments; boundary measures must be known.
    pub fn liouville_residuals(&self, traj_moments: &[f64]) -> Result<Vec<f64>, RelaxError> {
        let traj = self.measure(MeasureId::Trajectory);
        if self.measures.iter().any(|m| m.id != MeasureId::Trajectory && !m.is_known()) {
            return Err(RelaxError::Internal("boundary measures must be known".into()));
        }
        let mut y = vec![0.0; self.num_vars];
        y[traj.offset..traj.offset + traj.num_unknowns()].copy_from_slice(traj_moments);
        Ok(self
            .equality_residuals(&y)
            .into_iter()
            .zip(&self.row_kinds)
            .filter(|(_, k)| matches!(k, RowKind::Liouville(_)))
            .map(|(r, _)| r)
            .collect())
    }
}

fn boundary_measure(
    id: MeasureId,
    spec: &BoundarySpec,
    extra_free: Option<(usize, SupportConstraint)>,
    degree: u32,
    nvars: usize,
    offset: usize,
) -> MeasureSpec {
    let mut known = Vec::new();
    let mut vars: Vec<usize> = spec.free_vars().to_vec();
    if let Some(d) = &spec.dirac {
        known.push(KnownFactor::Dirac(d.clone()));
        vars.extend(&d.vars);
    }
    if let Some(u) = &spec.uniform {
        known.push(KnownFactor::Uniform(u.clone()));
        vars.extend(&u.vars);
    }
    let mut free_vars = spec.free_vars().to_vec();
    let mut constraints = spec.constraints.clone();
    if let Some((t, support)) = extra_free {
        free_vars.push(t);
        vars.push(t);
        constraints.push(support);
    }
    vars.sort_unstable();
    free_vars.sort_unstable();
    let b = (!free_vars.is_empty()).then(|| basis(&free_vars, nvars, degree));
    MeasureSpec { id, vars, free_vars, known, constraints, degree, basis: b, offset, nvars_total: nvars }
}

fn time_support(p: &OcpProblem) -> SupportConstraint {
    let vars = p.vars();
    let t = Polynomial::var(vars, p.time_var());
    let one = Polynomial::constant(vars, 1.0);
    SupportConstraint::nonnegative(&t * &(&one - &t))
}

/// Builds the moment problem with default options.
pub fn build_moment_problem(p: &OcpProblem, plan: &DegreePlan) -> Result<MomentProblem, RelaxError> {
    build_moment_problem_with(p, plan, &RelaxOptions::default())
}

/// Builds the moment problem.
pub fn build_moment_problem_with(
    p: &OcpProblem,
    plan: &DegreePlan,
    options: &RelaxOptions,
) -> Result<MomentProblem, RelaxError> {
    if let Some(k) = options.moment_bound {
        if !(k.is_finite() && k >= 1.0) {
            return Err(RelaxError::Internal(format!("moment bound must be a finite number >= 1, got {k}")));
        }
    }
    let td = time_dependence(p);
    let traj_has_t = td || p.data_uses_time();
    let tvar = p.time_var();
    let time_scale = if traj_has_t {
        match p.horizon() {
            Horizon::Fixed(t) => t,
            Horizon::Free => p.tmax().ok_or(RelaxError::MissingTmax)?,
        }
    } else {
        1.0
    };
    let mut factors = vec![1.0; p.vars().len()];
    factors[tvar] = time_scale;
    let q = apply_scaling(p, &factors)?;
    let vars = q.vars().clone();
    let nv = vars.len();
    let horizon = match q.horizon() {
        Horizon::Fixed(t) => Some(t),
        Horizon::Free => None,
    };

    // Measures.
    let final_t = (td && horizon.is_none()).then(|| (tvar, time_support(&q)));
    let initial = boundary_measure(MeasureId::Initial, q.initial(), None, plan.boundary_degree, nv, 0);
    let final_ = boundary_measure(MeasureId::Final, q.final_(), final_t, plan.boundary_degree, nv, 0);
    let mut traj_vars: Vec<usize> = vars.state_indices().chain(vars.input_indices()).collect();
    let mut traj_constraints = q.tconstraints().to_vec();
    if traj_has_t {
        traj_vars.insert(0, tvar);
        traj_constraints.push(time_support(&q));
    }
    let traj = MeasureSpec {
        id: MeasureId::Trajectory,
        basis: Some(basis(&traj_vars, nv, plan.traj_degree)),
        vars: traj_vars.clone(),
        free_vars: traj_vars,
        known: Vec::new(),
        constraints: traj_constraints,
        degree: plan.traj_degree,
        offset: 0,
        nvars_total: nv,
    };
    let mut measures = vec![initial, final_, traj];
    let mut offset = 0;
    for m in &mut measures {
        m.offset = offset;
        offset += m.num_unknowns();
    }
    let num_vars = offset;
    let [mi, mf, mt] = [&measures[0], &measures[1], &measures[2]];

    // Localizing orders must be nonnegative.
    for m in &measures {
        if m.is_known() {
            continue;
        }
        for c in &m.constraints {
            if c.relation == SupportRelation::NonNegative && localizing_order(m.degree / 2, &c.lhs).is_none() {
                return Err(RelaxError::DegreeTooSmall {
                    what: format!("{:?} support constraint `{} >= 0`", m.id, c.lhs),
                    need: c.lhs.degree(),
                    have: m.degree,
                });
            }
        }
    }

    let mut equalities = Vec::new();
    let mut row_kinds = Vec::new();
    let push_row = |form: &LinearForm, eqs: &mut Vec<SparseRow>| {
        eqs.push(SparseRow { coeffs: form.sparse(), rhs: -form.constant });
    };

    // Liouville rows.
    let test_vars: Vec<usize> = if td {
        std::iter::once(tvar).chain(vars.state_indices()).collect()
    } else {
        vars.state_indices().collect()
    };
    let test_basis = basis(&test_vars, nv, plan.tf_degree);
    for (k, wm) in test_basis.monomials().iter().enumerate() {
        let w = Polynomial::monomial(&vars, wm.clone(), 1.0);
        let lw = lie_derivative(&w, q.dynamics(), td)?;
        let w0 = w.substitute_value(tvar, 0.0);
        let wf = match (td, horizon) {
            (true, Some(h)) => w.substitute_value(tvar, h),
            _ => w.clone(),
        };
        let mut form = LinearForm::default();
        mt.integrate(&lw, 1.0, &mut form)?;
        mi.integrate(&w0, 1.0, &mut form)?;
        mf.integrate(&wf, -1.0, &mut form)?;
        push_row(&form, &mut equalities);
        row_kinds.push(RowKind::Liouville(k));
    }

    // Equality support constraints.
    for m in &measures {
        let Some(b) = &m.basis else { continue };
        for (ci, c) in m.constraints.iter().enumerate() {
            if c.relation != SupportRelation::Zero {
                continue;
            }
            let dg = c.lhs.degree();
            for mm in b.monomials().iter().filter(|mm| mm.degree() + dg <= m.degree) {
                let g = &c.lhs * &Polynomial::monomial(&vars, mm.clone(), 1.0);
                let mut form = LinearForm::default();
                m.integrate(&g, 1.0, &mut form)?;
                push_row(&form, &mut equalities);
                row_kinds.push(RowKind::SupportEq { measure: m.id, constraint: ci, multiplier: mm.clone() });
            }
        }
    }

    // Integral constraints.
    let mut nonneg = Vec::new();
    let mut nonneg_kinds = Vec::new();
    for (k, c) in q.sconstraints().iter().enumerate() {
        let mut form = LinearForm::default();
        mt.integrate(&c.integrand, 1.0, &mut form)?;
        match c.relation {
            MomentRelation::Eq => {
                equalities.push(SparseRow { coeffs: form.sparse(), rhs: c.bound - form.constant });
                row_kinds.push(RowKind::Integral(k));
            }
            MomentRelation::Le => {
                let coeffs = form.sparse().into_iter().map(|(i, v)| (i, -v)).collect();
                nonneg.push(AffineRow { coeffs, constant: c.bound - form.constant });
                nonneg_kinds.push(NonnegKind::Integral(k));
            }
            MomentRelation::Ge => {
                nonneg.push(AffineRow { coeffs: form.sparse(), constant: form.constant - c.bound });
                nonneg_kinds.push(NonnegKind::Integral(k));
            }
        }
    }
    // With time among the trajectory variables the bound follows from the
    // Liouville row of the time monomial.
    if let (None, Some(tmax), false) = (horizon, q.tmax(), traj_has_t) {
        nonneg.push(AffineRow { coeffs: vec![(mt.offset, -1.0)], constant: tmax });
        nonneg_kinds.push(NonnegKind::HorizonBound);
    }
    if let Some(kappa) = options.moment_bound {
        for m in &measures {
            let Some(b) = &m.basis else { continue };
            let half = b.half();
            let mut form = LinearForm::default();
            form.coeffs.insert(m.offset, kappa * half.len() as f64);
            for a in half.monomials() {
                *form.coeffs.entry(m.offset + b.moment_index(&a.mul(a))?).or_default() -= 1.0;
            }
            nonneg.push(AffineRow { coeffs: form.sparse(), constant: 0.0 });
            nonneg_kinds.push(NonnegKind::MomentBound(m.id));
        }
    }

    // Mass rows; the trajectory row goes last so that it is the one dropped
    // when it is implied by the Liouville rows.
    for m in [mi, mf] {
        if let Some(b) = &m.basis {
            let one = Monomial::one(nv);
            let idx = m.offset + b.moment_index(&one)?;
            equalities.push(SparseRow { coeffs: vec![(idx, 1.0)], rhs: 1.0 });
            row_kinds.push(RowKind::Mass(m.id));
        }
    }
    if let Some(h) = horizon {
        equalities.push(SparseRow { coeffs: vec![(mt.offset, 1.0)], rhs: h });
        row_kinds.push(RowKind::Mass(MeasureId::Trajectory));
    }

    // Objective.
    let mut running_cost = q.scost().clone();
    let final_cost = q.fcost().clone();
    if running_cost.is_zero() && final_cost.is_zero() {
        let half = mt.basis.as_ref().expect("trajectory is unknown").half();
        running_cost = Polynomial::from_terms(&vars, half.monomials().iter().map(|a| (a.mul(a), 1.0)));
    }
    let mut obj = LinearForm::default();
    mt.integrate(&running_cost, 1.0, &mut obj)?;
    mf.integrate(&final_cost, 1.0, &mut obj)?;

    Ok(MomentProblem {
        time_dependent: td,
        time_scale,
        plan: *plan,
        num_vars,
        test_basis,
        equalities,
        row_kinds,
        nonneg,
        nonneg_kinds,
        options: *options,
        objective: obj.sparse(),
        objective_offset: obj.constant,
        running_cost,
        final_cost,
        horizon,
        measures,
        problem: q,
    })
}

/// Lowers the moment problem to a conic program: one moment block per
/// unknown measure and one localizing block per inequality support
/// constraint.
pub fn assemble_conic(mp: &MomentProblem) -> Result<ConicProgram, RelaxError> {
    let mut blocks = Vec::new();
    for m in &mp.measures {
        let Some(b) = &m.basis else { continue };
        let r = m.degree / 2;
        let half = basis(&m.free_vars, m.nvars_total, r);
        let one = Polynomial::constant(mp.problem.vars(), 1.0);
        blocks.push(localizing_block(m, b, &half, &one, format!("moment {:?}", m.id))?);
        for (ci, c) in m.constraints.iter().enumerate() {
            if c.relation != SupportRelation::NonNegative {
                continue;
            }
            let rg = localizing_order(r, &c.lhs).ok_or_else(|| RelaxError::DegreeTooSmall {
                what: format!("localizing matrix of `{}`", c.lhs),
                need: c.lhs.degree(),
                have: m.degree,
            })?;
            let hb = basis(&m.free_vars, m.nvars_total, rg);
            blocks.push(localizing_block(m, b, &hb, &c.lhs, format!("localizing {:?} {ci}", m.id))?);
        }
    }
    Ok(ConicProgram {
        num_vars: mp.num_vars,
        objective: mp.objective.clone(),
        objective_offset: mp.objective_offset,
        equalities: mp.equalities.clone(),
        psd_blocks: blocks,
        nonneg: mp.nonneg.clone(),
    })
}

fn localizing_block(
    m: &MeasureSpec,
    b: &MomentBasis,
    half: &MomentBasis,
    g: &Polynomial,
    label: String,
) -> Result<PsdBlock, RelaxError> {
    let hm = half.monomials();
    let mut entries = Vec::new();
    for i in 0..hm.len() {
        for j in i..hm.len() {
            let ab = hm[i].mul(&hm[j]);
            for (gm, c) in g.terms() {
                let mm = gm.mul(&ab);
                let mut free = vec![0; m.nvars_total];
                for &v in &m.free_vars {
                    free[v] = mm.exponents()[v];
                }
                let k = product_moment(&m.known, &mm);
                let idx = m.offset + b.moment_index(&Monomial::new(free))?;
                entries.push(BlockEntry { row: i, col: j, var: Some(idx), coeff: c * k });
            }
        }
    }
    Ok(PsdBlock { size: hm.len(), entries, label })
}

/// Moments of one measure in the user's variables.
#[derive(Debug, Clone)]
pub struct MeasureMoments {
    pub id: MeasureId,
    pub known: bool,
    /// Basis over all variables of the measure.
    pub basis: MomentBasis,
    pub moments: Vec<f64>,
    /// Moment matrix of order `degree / 2`.
    pub matrix: DMatrix<f64>,
}

/// Moment vectors and matrices of all measures, converted back to the
/// user's variables.
pub fn extract_moment_matrices(mp: &MomentProblem, sol: &ConicSolution) -> Result<Vec<MeasureMoments>, RelaxError> {
    if sol.status != SolveStatus::Optimal {
        return Err(RelaxError::NotOptimal(sol.status));
    }
    measure_moments(mp, &sol.y)
}

/// As [`extract_moment_matrices`] for an arbitrary decision vector.
pub fn measure_moments(mp: &MomentProblem, y: &[f64]) -> Result<Vec<MeasureMoments>, RelaxError> {
    let s = mp.problem.scaling();
    let st = s[mp.problem.time_var()];
    mp.measures
        .iter()
        .map(|m| {
            let fb = m.full_basis();
            let mass_factor = if m.id == MeasureId::Trajectory { st } else { 1.0 };
            let moments = fb
                .monomials()
                .iter()
                .map(|mono| Ok(mass_factor * mono.eval(s) * m.moment(mono, y)?))
                .collect::<Result<Vec<f64>, RelaxError>>()?;
            let rows = fb.moment_matrix(&moments);
            let n = rows.len();
            let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            Ok(MeasureMoments { id: m.id, known: m.is_known(), basis: fb, moments, matrix })
        })
        .collect()
}
