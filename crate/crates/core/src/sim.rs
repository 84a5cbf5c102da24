//! Closed-loop simulation with classical Runge-Kutta, running-cost
//! accumulation, constraint monitoring and empirical occupation moments.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::MomentBasis;
use crate::ocp::OcpProblem;
use crate::poly::Polynomial;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step must be positive and at most the horizon (dt = {dt}, t_max = {t_max})")]
    BadStep { dt: f64, t_max: f64 },
    #[error("initial state has {got} entries, the problem has {expected} states")]
    Dimension { expected: usize, got: usize },
    #[error("controller returns {got} inputs, the problem has {expected}")]
    Inputs { expected: usize, got: usize },
    #[error("basis is over {got} variables, trajectories have {expected}")]
    Basis { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feedback law `u(t, x)`.
pub trait Controller {
    fn control(&self, t: f64, x: &[f64]) -> Vec<f64>;
}

/// Polynomial feedback over the problem's variables (inputs are ignored).
#[derive(Debug, Clone)]
pub struct PolynomialFeedback {
    pub laws: Vec<Polynomial>,
}

impl Controller for PolynomialFeedback {
    fn control(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let Some(first) = self.laws.first() else { return Vec::new() };
        let vars = first.vars();
        let mut pt = vec![0.0; vars.len()];
        if let Some(ti) = vars.time_index() {
            pt[ti] = t;
        }
        for (k, xi) in vars.state_indices().zip(x) {
            pt[k] = *xi;
        }
        self.laws.iter().map(|p| p.eval(&pt)).collect()
    }
}

impl<F: Fn(f64, &[f64]) -> Vec<f64>> Controller for F {
    fn control(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimStatus {
    /// Ran to `t_max`.
    Completed,
    /// Stopped inside the stop radius around the target.
    ReachedTarget,
    /// The state stopped being finite; the trajectory is truncated.
    BlowUp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub t_max: f64,
    pub dt: f64,
    /// Early stop radius, used when the final measure is a Dirac at the origin.
    pub stop_radius: f64,
    pub clamp_inputs: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { t_max: 20.0, dt: 1e-3, stop_radius: 1e-3, clamp_inputs: true }
    }
}

/// Sampled closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// Accumulated running cost at every node (trapezoidal rule).
    pub cost: Vec<f64>,
    /// Largest normalized violation of each trajectory constraint.
    pub violations: Vec<f64>,
    pub status: SimStatus,
    /// Variable indices of the problem, needed to evaluate monomials.
    time_var: usize,
    state_vars: Vec<usize>,
    input_vars: Vec<usize>,
    nvars: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn running_cost(&self) -> f64 {
        self.cost.last().copied().unwrap_or(0.0)
    }

    /// Full variable vector (time, states, inputs) at node `k`.
    pub fn point(&self, k: usize) -> Vec<f64> {
        let mut pt = vec![0.0; self.nvars];
        pt[self.time_var] = self.times[k];
        for (v, x) in self.state_vars.iter().zip(&self.states[k]) {
            pt[*v] = *x;
        }
        for (v, u) in self.input_vars.iter().zip(&self.inputs[k]) {
            pt[*v] = *u;
        }
        pt
    }
}

fn clamp_inputs(u: &mut [f64], bounds: &[(f64, f64)]) {
    for (ui, &(lo, hi)) in u.iter_mut().zip(bounds) {
        *ui = ui.clamp(lo, hi);
    }
}

/// Integrates `x' = f(t, x, u(t, x))` from `x0` with fixed-step RK4.
pub fn simulate<C: Controller + ?Sized>(
    p: &OcpProblem,
    controller: &C,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    if !(opts.dt > 0.0) || !(opts.t_max >= opts.dt) {
        return Err(SimError::BadStep { dt: opts.dt, t_max: opts.t_max });
    }
    let vars = p.vars();
    let n = vars.num_states();
    let m = vars.num_inputs();
    if x0.len() != n {
        return Err(SimError::Dimension { expected: n, got: x0.len() });
    }
    let tvar = p.time_var();
    let state_vars: Vec<usize> = vars.state_indices().collect();
    let input_vars: Vec<usize> = vars.input_indices().collect();
    let bounds: Vec<(f64, f64)> = (0..m).map(|k| p.input_bounds(k)).collect();
    let target_origin = p
        .final_()
        .single_point(n, vars)
        .is_some_and(|pt| pt.iter().all(|&c| c == 0.0));

    let fill = |t: f64, x: &[f64], u: &[f64]| -> Vec<f64> {
        let mut pt = vec![0.0; vars.len()];
        pt[tvar] = t;
        for (v, xi) in state_vars.iter().zip(x) {
            pt[*v] = *xi;
        }
        for (v, ui) in input_vars.iter().zip(u) {
            pt[*v] = *ui;
        }
        pt
    };
    let input = |t: f64, x: &[f64]| -> Result<Vec<f64>, SimError> {
        let mut u = controller.control(t, x);
        if u.len() != m {
            return Err(SimError::Inputs { expected: m, got: u.len() });
        }
        if opts.clamp_inputs {
            clamp_inputs(&mut u, &bounds);
        }
        Ok(u)
    };
    let rhs = |t: f64, x: &[f64]| -> Result<Vec<f64>, SimError> {
        let u = input(t, x)?;
        let z = fill(t, x, &u);
        Ok(p.dynamics().iter().map(|f| f.eval(&z)).collect())
    };

    let constraints = p.tconstraints();
    let norms: Vec<f64> = constraints.iter().map(|c| c.lhs.max_abs_coeff().max(1e-300)).collect();
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        cost: Vec::new(),
        violations: vec![0.0; constraints.len()],
        status: SimStatus::Completed,
        time_var: tvar,
        state_vars: state_vars.clone(),
        input_vars: input_vars.clone(),
        nvars: vars.len(),
    };
    let steps = (opts.t_max / opts.dt).round().max(1.0) as usize;
    let mut x = x0.to_vec();
    let mut prev_h = 0.0;
    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        let u = input(t, &x)?;
        let z = fill(t, &x, &u);
        let h = p.scost().eval(&z);
        let acc = match traj.cost.last() {
            Some(c) => c + 0.5 * opts.dt * (prev_h + h),
            None => 0.0,
        };
        prev_h = h;
        for ((viol, c), nrm) in traj.violations.iter_mut().zip(constraints).zip(&norms) {
            *viol = viol.max(c.violation(&z) / nrm);
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(u);
        traj.cost.push(acc);
        if target_origin && x.iter().map(|v| v * v).sum::<f64>().sqrt() <= opts.stop_radius {
            traj.status = SimStatus::ReachedTarget;
            break;
        }
        if k == steps {
            break;
        }

        let dt = opts.dt;
        let k1 = rhs(t, &x)?;
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(t + 0.5 * dt, &x2)?;
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = rhs(t + 0.5 * dt, &x3)?;
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(t + dt, &x4)?;
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            traj.status = SimStatus::BlowUp;
            break;
        }
    }
    Ok(traj)
}

/// Trapezoidal approximation of `int m(t, x(t), u(t)) dt` for every basis
/// monomial.
pub fn empirical_moments(traj: &Trajectory, basis: &MomentBasis) -> Result<Vec<f64>, SimError> {
    if basis.nvars_total() != traj.nvars {
        return Err(SimError::Basis { expected: traj.nvars, got: basis.nvars_total() });
    }
    let mut out = vec![0.0; basis.len()];
    if traj.len() < 2 {
        return Ok(out);
    }
    let mut prev: Vec<f64> = Vec::new();
    for k in 0..traj.len() {
        let pt = traj.point(k);
        let vals: Vec<f64> = basis.monomials().iter().map(|mono| mono.eval(&pt)).collect();
        if k > 0 {
            let w = 0.5 * (traj.times[k] - traj.times[k - 1]);
            for ((o, a), b) in out.iter_mut().zip(&prev).zip(&vals) {
                *o += w * (a + b);
            }
        }
        prev = vals;
    }
    Ok(out)
}

/// `printf("%.{prec}g")` formatting.
pub fn format_g(x: f64, prec: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let p = prec.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

/// Writes `t,x1..xn,u1..um,cost`, one row per node.
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    let n = traj.state_vars.len();
    let m = traj.input_vars.len();
    let mut header = vec!["t".to_owned()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.push("cost".into());
    writeln!(out, "{}", header.join(","))?;
    for k in 0..traj.len() {
        let mut row = vec![format_g(traj.times[k], 12)];
        row.extend(traj.states[k].iter().map(|v| format_g(*v, 12)));
        row.extend(traj.inputs[k].iter().map(|v| format_g(*v, 12)));
        row.push(format_g(traj.cost[k], 12));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn export_csv(traj: &Trajectory, path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(traj, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::basis;
    use crate::ocp::{build_problem, BoundarySpec, ProblemSpec};

    fn scalar(dynamics: &str, cost: &str) -> OcpProblem {
        let mut s = ProblemSpec::new(&["x"], &["u"]).unwrap();
        s.dynamics = vec![s.poly(dynamics).unwrap()];
        s.scost = s.poly(cost).unwrap();
        s.initial = BoundarySpec::dirac_point(vec![1], vec![1.0]);
        s.final_ = BoundarySpec::dirac_point(vec![1], vec![0.0]);
        build_problem(s).unwrap()
    }

    #[test]
    fn format_g_matches_printf() {
        assert_eq!(format_g(0.1, 12), "0.1");
        assert_eq!(format_g(1.0, 12), "1");
        assert_eq!(format_g(-2.5, 12), "-2.5");
        assert_eq!(format_g(1e-5, 12), "1e-05");
        assert_eq!(format_g(123456789012345.0, 12), "1.23456789012e+14");
        assert_eq!(format_g(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_g(0.0001, 12), "0.0001");
        assert_eq!(format_g(100.0, 12), "100");
    }

    #[test]
    fn stationary_system_has_constant_trajectory() {
        let p = scalar("0", "0");
        let zero = |_: f64, _: &[f64]| vec![0.0];
        let opts = SimOptions { t_max: 1.0, dt: 0.1, ..Default::default() };
        let tr = simulate(&p, &zero, &[1.0], &opts).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.states.iter().all(|x| x[0] == 1.0));
        assert_eq!(tr.running_cost(), 0.0);
        let b = basis(&[1], 3, 4);
        let mom = empirical_moments(&tr, &b).unwrap();
        assert!(mom.iter().all(|&y| (y - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = scalar("u", "x^2");
        let zero = |_: f64, _: &[f64]| vec![0.0];
        let bad = SimOptions { dt: 0.0, ..Default::default() };
        assert!(matches!(simulate(&p, &zero, &[1.0], &bad), Err(SimError::BadStep { .. })));
        assert!(matches!(simulate(&p, &zero, &[1.0, 2.0], &SimOptions::default()), Err(SimError::Dimension { .. })));
        let two = |_: f64, _: &[f64]| vec![0.0, 0.0];
        assert!(matches!(simulate(&p, &two, &[1.0], &SimOptions::default()), Err(SimError::Inputs { .. })));
    }

    #[test]
    fn blow_up_is_flagged() {
        let p = scalar("x^3", "0");
        let zero = |_: f64, _: &[f64]| vec![0.0];
        let opts = SimOptions { t_max: 5.0, dt: 0.01, ..Default::default() };
        let tr = simulate(&p, &zero, &[2.0], &opts).unwrap();
        assert_eq!(tr.status, SimStatus::BlowUp);
        assert!(tr.final_state().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn csv_layout() {
        let p = scalar("u", "x^2 + u^2");
        let law = |_: f64, x: &[f64]| vec![-x[0]];
        let opts = SimOptions { t_max: 0.2, dt: 0.1, ..Default::default() };
        let tr = simulate(&p, &law, &[1.0], &opts).unwrap();
        let mut buf = Vec::new();
        write_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,u1,cost");
        assert_eq!(lines.len(), tr.len() + 1);
        assert!(lines[1].starts_with("0,1,-1,0"));
    }
}
