//! Machine-readable solve report.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hjb::{Certificate, Verification};
use crate::pipeline::Outcome;
use crate::poly::{Monomial, Polynomial, VarSet};
use crate::relaxation::{DegreeMode, MeasureId, RelaxOptions};
use crate::solver::SolveStatus;

/// One term of a polynomial: exponents in the order of `SolveReport::variables`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

pub fn poly_terms(p: &Polynomial) -> Vec<Term> {
    p.terms().map(|(m, c)| Term { exponents: m.exponents().to_vec(), coeff: c }).collect()
}

/// Rebuilds a polynomial; `None` when an exponent vector has the wrong length.
pub fn poly_from_terms(vars: &Arc<VarSet>, terms: &[Term]) -> Option<Polynomial> {
    if terms.iter().any(|t| t.exponents.len() != vars.len()) {
        return None;
    }
    Some(Polynomial::from_terms(vars, terms.iter().map(|t| (Monomial::new(t.exponents.clone()), t.coeff))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub mode: DegreeMode,
    pub tf_degree: u32,
    pub traj_degree: u32,
    pub boundary_degree: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    /// `initial`, `final` or `trajectory`.
    pub name: String,
    pub known: bool,
    pub monomials: Vec<Vec<u32>>,
    pub moments: Vec<f64>,
    /// Moment matrix, row-major.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub running: Vec<Term>,
    pub terminal: Vec<Term>,
    pub initial: Vec<Term>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionReport {
    pub terms: Vec<Term>,
    pub time_dependent: bool,
    pub certificate: CertificateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLaw {
    pub input: String,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    #[serde(with = "crate::serde_f64")]
    pub objective: f64,
    #[serde(with = "crate::serde_f64")]
    pub dual_objective: f64,
    #[serde(with = "crate::serde_f64")]
    pub primal_residual: f64,
    #[serde(with = "crate::serde_f64")]
    pub dual_residual: f64,
    #[serde(with = "crate::serde_f64")]
    pub gap: f64,
}

/// Wall-clock seconds per stage; the only non-deterministic field.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportTimings {
    pub relax: f64,
    pub solve: f64,
    pub recover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub lower_bound: Option<f64>,
    pub degree: DegreeReport,
    /// Variable names; every exponent vector follows this order.
    pub variables: Vec<String>,
    pub measures: Vec<MeasureReport>,
    pub vf: Option<ValueFunctionReport>,
    pub verification: Option<Verification>,
    pub controller: Option<Vec<ControlLaw>>,
    /// Why `vf` or `controller` is missing.
    pub notes: Vec<String>,
    pub solver: SolverReport,
    pub relax: RelaxOptions,
    pub seed: u64,
    /// Problem file text, so the report is self-contained.
    pub problem: String,
    pub timings: ReportTimings,
}

fn measure_name(id: MeasureId) -> &'static str {
    match id {
        MeasureId::Initial => "initial",
        MeasureId::Final => "final",
        MeasureId::Trajectory => "trajectory",
    }
}

impl SolveReport {
    pub fn from_outcome(out: &Outcome, problem_text: &str, relax: RelaxOptions, seed: u64) -> SolveReport {
        let vars = out.moment_problem.problem.vars();
        let mut notes = Vec::new();
        let measures = out
            .measures
            .iter()
            .flatten()
            .map(|m| MeasureReport {
                name: measure_name(m.id).to_owned(),
                known: m.known,
                monomials: m.basis.monomials().iter().map(|x| x.exponents().to_vec()).collect(),
                moments: m.moments.clone(),
                matrix: m.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect();
        let (vf, verification) = match &out.value_function {
            Ok(vf) => (
                Some(ValueFunctionReport {
                    terms: poly_terms(&vf.v),
                    time_dependent: vf.time_dependent,
                    certificate: CertificateReport {
                        running: poly_terms(&vf.certificate.running),
                        terminal: poly_terms(&vf.certificate.terminal),
                        initial: poly_terms(&vf.certificate.initial),
                        offset: vf.certificate.offset,
                    },
                }),
                Some(vf.verification.clone()),
            ),
            Err(e) => {
                notes.push(format!("value function: {e}"));
                (None, None)
            }
        };
        let controller = match &out.controller {
            Ok(laws) => Some(
                laws.iter()
                    .zip(vars.input_names())
                    .map(|(p, name)| ControlLaw { input: name.clone(), terms: poly_terms(p) })
                    .collect(),
            ),
            Err(e) => {
                if out.value_function.is_ok() {
                    notes.push(format!("controller: {e}"));
                }
                None
            }
        };
        let sol = &out.solution;
        SolveReport {
            status: sol.status,
            lower_bound: out.lower_bound(),
            degree: DegreeReport {
                mode: out.plan.mode,
                tf_degree: out.plan.tf_degree,
                traj_degree: out.plan.traj_degree,
                boundary_degree: out.plan.boundary_degree,
            },
            variables: vars.names().map(str::to_owned).collect(),
            measures,
            vf,
            verification,
            controller,
            notes,
            solver: SolverReport {
                iterations: sol.iterations,
                objective: sol.objective_value,
                dual_objective: sol.dual_objective,
                primal_residual: sol.residuals.primal,
                dual_residual: sol.residuals.dual,
                gap: sol.residuals.gap,
            },
            relax,
            seed,
            problem: problem_text.to_owned(),
            timings: ReportTimings {
                relax: out.timings.relax.as_secs_f64(),
                solve: out.timings.solve.as_secs_f64(),
                recover: out.timings.recover.as_secs_f64(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    pub fn from_json(text: &str) -> Result<SolveReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Value function and certificate over `vars`.
    pub fn value_function(&self, vars: &Arc<VarSet>) -> Option<(Polynomial, Certificate)> {
        let vf = self.vf.as_ref()?;
        let c = &vf.certificate;
        Some((
            poly_from_terms(vars, &vf.terms)?,
            Certificate {
                running: poly_from_terms(vars, &c.running)?,
                terminal: poly_from_terms(vars, &c.terminal)?,
                initial: poly_from_terms(vars, &c.initial)?,
                offset: c.offset,
            },
        ))
    }

    /// Feedback polynomials over `vars`, in input order.
    pub fn control_laws(&self, vars: &Arc<VarSet>) -> Option<Vec<Polynomial>> {
        self.controller.as_ref()?.iter().map(|law| poly_from_terms(vars, &law.terms)).collect()
    }
}
