//! Sectioned problem-file format.
//!
//! ```text
//! [variables]
//! states = x1, x2
//! inputs = u
//!
//! [dynamics]
//! x1' = x2
//! x2' = u
//!
//! [cost]
//! integrand = 1
//! horizon = free
//!
//! [initial]
//! dirac x1, x2 = 1, 1
//!
//! [final]
//! dirac x1 = 0
//! dirac x2 = 0
//!
//! [trajectory]
//! x2 >= -1
//! u >= -1
//! u <= 1
//! ```
//!
//! `#` starts a comment. Boundary sections accept `dirac`, `uniform` and
//! support constraints; `[integral]` takes `mom(p) <= b`, `= b` or `>= b`.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::ocp::{
    apply_scaling, build_problem, BoundarySpec, DiracFactor, Horizon, MomentConstraint, MomentRelation,
    OcpError, OcpProblem, ProblemSpec, SupportConstraint, TestTime, UniformFactor,
};
use crate::poly::{parse_poly, PolyError, Polynomial, VarSet};
use crate::relaxation::RelaxOptions;

#[derive(Debug, Error)]
pub enum ProblemFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: {source}")]
    Problem { line: usize, source: OcpError },
}

/// A parsed problem together with the solver-side options of the file.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    /// The problem, already rescaled when `scale` options are present.
    pub problem: OcpProblem,
    pub relax: RelaxOptions,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Variables,
    Dynamics,
    Cost,
    Initial,
    Final,
    Trajectory,
    Integral,
    Options,
}

impl Section {
    fn from_name(name: &str) -> Option<Section> {
        Some(match name {
            "variables" => Section::Variables,
            "dynamics" => Section::Dynamics,
            "cost" => Section::Cost,
            "initial" => Section::Initial,
            "final" => Section::Final,
            "trajectory" => Section::Trajectory,
            "integral" => Section::Integral,
            "options" => Section::Options,
            _ => return None,
        })
    }
}

/// A trimmed line and the 1-based column where it starts.
#[derive(Clone, Copy)]
struct Span<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

impl<'a> Span<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ProblemFileError> {
        Err(ProblemFileError::Syntax { line: self.line, column: self.col + offset, message: message.into() })
    }

    /// Sub-span starting at byte `start`, trimmed.
    fn slice(&self, start: usize, end: usize) -> Span<'a> {
        let raw = &self.text[start..end];
        let lead = raw.len() - raw.trim_start().len();
        Span { text: raw.trim(), line: self.line, col: self.col + start + lead }
    }

    /// Splits at the first occurrence of `pat`.
    fn split_once(&self, pat: &str) -> Option<(Span<'a>, Span<'a>)> {
        let i = self.text.find(pat)?;
        Some((self.slice(0, i), self.slice(i + pat.len(), self.text.len())))
    }

    fn split_all(&self, sep: char) -> Vec<Span<'a>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, c) in self.text.char_indices() {
            if c == sep {
                out.push(self.slice(start, i));
                start = i + 1;
            }
        }
        out.push(self.slice(start, self.text.len()));
        out
    }

    fn number(&self) -> Result<f64, ProblemFileError> {
        match self.text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => self.err(0, format!("expected a number, found `{}`", self.text)),
        }
    }
}

fn poly_message(e: &PolyError) -> (usize, String) {
    match e {
        PolyError::UnknownIdentifier { name, pos } => (*pos, format!("unknown identifier `{name}`")),
        PolyError::Syntax { pos, msg } => (*pos, msg.clone()),
        PolyError::BadExponent { pos } => (*pos, "exponent must be a non-negative integer".into()),
        other => (0, other.to_string()),
    }
}

struct Builder {
    spec: ProblemSpec,
    dynamics: Vec<Option<Polynomial>>,
    initial_owner: Vec<Option<usize>>,
    final_owner: Vec<Option<usize>>,
    scale: Vec<f64>,
    relax: RelaxOptions,
    seed: Option<u64>,
}

impl Builder {
    fn vars(&self) -> &Arc<VarSet> {
        &self.spec.vars
    }

    fn poly(&self, s: Span) -> Result<Polynomial, ProblemFileError> {
        if s.text.is_empty() {
            return s.err(0, "expected a polynomial");
        }
        parse_poly(s.text, self.vars()).or_else(|e| {
            let (pos, msg) = poly_message(&e);
            s.err(pos, msg)
        })
    }

    fn var(&self, s: Span) -> Result<usize, ProblemFileError> {
        match self.vars().index_of(s.text) {
            Some(v) => Ok(v),
            None => s.err(0, format!("unknown variable `{}`", s.text)),
        }
    }

    fn state(&self, s: Span) -> Result<usize, ProblemFileError> {
        let v = self.var(s)?;
        if !self.vars().is_state(v) {
            return s.err(0, format!("`{}` is not a state", s.text));
        }
        Ok(v)
    }

    /// `lhs (<=|>=|=) rhs` as a support constraint.
    fn support(&self, s: Span) -> Result<SupportConstraint, ProblemFileError> {
        let (lhs, rel, rhs) = relation(s)?;
        let (p, q) = (self.poly(lhs)?, self.poly(rhs)?);
        Ok(match rel {
            MomentRelation::Le => SupportConstraint::leq(&p, &q),
            MomentRelation::Ge => SupportConstraint::geq(&p, &q),
            MomentRelation::Eq => SupportConstraint::eq(&p, &q),
        })
    }

    fn claim(&mut self, boundary: Section, var: usize, at: Span) -> Result<(), ProblemFileError> {
        let owner = if boundary == Section::Initial { &mut self.initial_owner } else { &mut self.final_owner };
        if owner[var].is_some() {
            return Err(ProblemFileError::Problem {
                line: at.line,
                source: OcpError::BoundaryConflict(self.spec.vars.name(var).to_owned()),
            });
        }
        owner[var] = Some(at.line);
        Ok(())
    }

    fn boundary_line(&mut self, section: Section, s: Span) -> Result<(), ProblemFileError> {
        if let Some(rest) = keyword(s, "dirac") {
            let Some((names, values)) = rest.split_once("=") else {
                return rest.err(0, "expected `dirac <vars> = <point>`");
            };
            let vars = names.split_all(',').into_iter().map(|n| self.state(n)).collect::<Result<Vec<_>, _>>()?;
            for &v in &vars {
                self.claim(section, v, s)?;
            }
            let factor = dirac_atoms(&vars, values)?;
            let b = self.boundary(section);
            b.dirac = Some(match b.dirac.take() {
                Some(d) => d.product(&factor),
                None => factor,
            });
        } else if let Some(rest) = keyword(s, "uniform") {
            let Some((name, interval)) = rest.split_once(" in ") else {
                return rest.err(0, "expected `uniform <var> in [a, b]`");
            };
            let v = self.state(name)?;
            self.claim(section, v, s)?;
            let inner = interval
                .text
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .map(|t| interval.slice(1, 1 + t.len()));
            let Some(inner) = inner else {
                return interval.err(0, "expected an interval `[a, b]`");
            };
            let ends = inner.split_all(',');
            if ends.len() != 2 {
                return inner.err(0, "an interval has two endpoints");
            }
            let (a, b) = (ends[0].number()?, ends[1].number()?);
            let u = self.boundary(section).uniform.get_or_insert_with(|| UniformFactor { vars: Vec::new(), intervals: Vec::new() });
            u.vars.push(v);
            u.intervals.push((a, b));
        } else {
            let c = self.support(s)?;
            for v in c.lhs.used_vars() {
                if self.vars().is_state(v) {
                    let owner = if section == Section::Initial { &self.initial_owner } else { &self.final_owner };
                    if owner[v].is_some() {
                        return Err(ProblemFileError::Problem {
                            line: s.line,
                            source: OcpError::BoundaryConflict(self.vars().name(v).to_owned()),
                        });
                    }
                }
            }
            self.boundary(section).constraints.push(c);
        }
        Ok(())
    }

    fn boundary(&mut self, section: Section) -> &mut BoundarySpec {
        if section == Section::Initial {
            &mut self.spec.initial
        } else {
            &mut self.spec.final_
        }
    }
}

/// Strips a leading keyword followed by whitespace.
fn keyword<'a>(s: Span<'a>, kw: &str) -> Option<Span<'a>> {
    let rest = s.text.strip_prefix(kw)?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    Some(s.slice(kw.len(), s.text.len()))
}

fn relation(s: Span) -> Result<(Span, MomentRelation, Span), ProblemFileError> {
    for (op, rel) in [("<=", MomentRelation::Le), (">=", MomentRelation::Ge), ("==", MomentRelation::Eq), ("=", MomentRelation::Eq)] {
        if let Some((l, r)) = s.split_once(op) {
            return Ok((l, rel, r));
        }
    }
    s.err(0, "expected a relation `<=`, `>=` or `=`")
}

/// `a, b @ w; c, d @ w'` or a single point `a, b`.
fn dirac_atoms(vars: &[usize], values: Span) -> Result<DiracFactor, ProblemFileError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let atoms = values.split_all(';');
    for atom in &atoms {
        let (coords, weight) = match atom.split_once("@") {
            Some((c, w)) => (c, Some(w.number()?)),
            None => (*atom, None),
        };
        let point = coords.split_all(',').iter().map(Span::number).collect::<Result<Vec<_>, _>>()?;
        if point.len() != vars.len() {
            return coords.err(0, format!("expected {} coordinates, found {}", vars.len(), point.len()));
        }
        points.push(point);
        weights.push(weight);
    }
    let weights = match weights.iter().filter(|w| w.is_some()).count() {
        0 => vec![1.0 / points.len() as f64; points.len()],
        n if n == points.len() => weights.into_iter().flatten().collect(),
        _ => return values.err(0, "give a weight to every atom or to none"),
    };
    Ok(DiracFactor { vars: vars.to_vec(), points, weights })
}

fn parse_list(s: Span) -> Vec<String> {
    if s.text.is_empty() {
        return Vec::new();
    }
    s.split_all(',').iter().map(|n| n.text.to_owned()).collect()
}

fn key_value<'a>(s: Span<'a>) -> Result<(Span<'a>, Span<'a>), ProblemFileError> {
    match s.split_once("=") {
        Some(kv) => Ok(kv),
        None => s.err(0, "expected `key = value`"),
    }
}

/// Reads and parses a problem file.
pub fn parse_problem_file(path: &Path) -> Result<ProblemFile, ProblemFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ProblemFileError::Io { path: path.display().to_string(), source })?;
    parse_problem_str(&text)
}

/// Parses problem-file text.
pub fn parse_problem_str(text: &str) -> Result<ProblemFile, ProblemFileError> {
    let mut section: Option<(Section, usize)> = None;
    let mut states: Option<Vec<String>> = None;
    let mut inputs: Vec<String> = Vec::new();
    let mut time: Option<String> = None;
    let mut builder: Option<Builder> = None;
    let mut horizon_set = false;

    for (k, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let lead = body.len() - body.trim_start().len();
        let s = Span { text: body.trim(), line: k + 1, col: lead + 1 };
        if s.text.is_empty() {
            continue;
        }
        if let Some(name) = s.text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            let Some(sec) = Section::from_name(name.trim()) else {
                return s.err(0, format!("unknown section `[{}]`", name.trim()));
            };
            if sec == Section::Variables && builder.is_some() {
                return s.err(0, "`[variables]` must come before the other sections");
            }
            if sec != Section::Variables && builder.is_none() {
                let Some(st) = &states else {
                    return s.err(0, "`[variables]` with `states = ...` must come first");
                };
                let vars = VarSet::new(st, &inputs, Some(time.as_deref().unwrap_or("t")))
                    .map_err(|e| ProblemFileError::Syntax { line: s.line, column: s.col, message: e.to_string() })?;
                let n = vars.len();
                let nstates = vars.num_states();
                builder = Some(Builder {
                    spec: ProblemSpec::with_vars(vars),
                    dynamics: vec![None; nstates],
                    initial_owner: vec![None; n],
                    final_owner: vec![None; n],
                    scale: vec![1.0; n],
                    relax: RelaxOptions::default(),
                    seed: None,
                });
            }
            section = Some((sec, s.line));
            continue;
        }
        let Some((sec, _)) = section else {
            return s.err(0, "content outside of any section");
        };
        if sec == Section::Variables {
            let (key, value) = key_value(s)?;
            match key.text {
                "states" => states = Some(parse_list(value)),
                "inputs" => inputs = parse_list(value),
                "time" => time = Some(value.text.to_owned()),
                other => return key.err(0, format!("unknown key `{other}` in [variables]")),
            }
            continue;
        }
        let b = builder.as_mut().expect("created at the section header");
        match sec {
            Section::Variables => unreachable!(),
            Section::Dynamics => {
                let (lhs, rhs) = key_value(s)?;
                let Some(name) = lhs.text.strip_suffix('\'') else {
                    return lhs.err(0, "expected `<state>' = <polynomial>`");
                };
                let v = b.state(Span { text: name.trim_end(), ..lhs })?;
                let k = v - b.vars().state_index(0);
                if b.dynamics[k].is_some() {
                    return lhs.err(0, format!("second equation for `{name}`"));
                }
                b.dynamics[k] = Some(b.poly(rhs)?);
            }
            Section::Cost => {
                let (key, value) = key_value(s)?;
                match key.text {
                    "integrand" => b.spec.scost = b.poly(value)?,
                    "final" => b.spec.fcost = b.poly(value)?,
                    "horizon" => {
                        b.spec.horizon = if value.text == "free" { Horizon::Free } else { Horizon::Fixed(value.number()?) };
                        horizon_set = true;
                    }
                    other => return key.err(0, format!("unknown key `{other}` in [cost]")),
                }
            }
            Section::Initial | Section::Final => b.boundary_line(sec, s)?,
            Section::Trajectory => {
                let c = b.support(s)?;
                b.spec.tconstraints.push(c);
            }
            Section::Integral => {
                let (lhs, relation, rhs) = relation(s)?;
                let inner = lhs
                    .text
                    .strip_prefix("mom(")
                    .and_then(|t| t.strip_suffix(')'))
                    .map(|t| lhs.slice(4, 4 + t.len()));
                let Some(inner) = inner else {
                    return lhs.err(0, "expected `mom(<polynomial>)`");
                };
                let integrand = b.poly(inner)?;
                let bound = rhs.number()?;
                b.spec.sconstraints.push(MomentConstraint { integrand, relation, bound });
            }
            Section::Options => {
                let (key, value) = key_value(s)?;
                if let Some(var) = keyword(key, "scale") {
                    let v = b.var(var)?;
                    let f = value.number()?;
                    if f <= 0.0 {
                        return value.err(0, "scale factors must be positive");
                    }
                    b.scale[v] = f;
                    continue;
                }
                match key.text {
                    "testtime" => {
                        b.spec.testtime = match value.text {
                            "true" => TestTime::Dependent,
                            "false" => TestTime::Independent,
                            _ => return value.err(0, "expected `true` or `false`"),
                        }
                    }
                    "tmax" => b.spec.tmax = Some(value.number()?),
                    "seed" => match value.text.parse::<u64>() {
                        Ok(n) => b.seed = Some(n),
                        Err(_) => return value.err(0, "seed must be a non-negative integer"),
                    },
                    "moment_bound" => {
                        let k = value.number()?;
                        if k <= 0.0 {
                            return value.err(0, "moment_bound must be positive");
                        }
                        b.relax.moment_bound = Some(k);
                    }
                    other => return key.err(0, format!("unknown option `{other}`")),
                }
            }
        }
    }

    let end = text.lines().count();
    let Some(mut b) = builder else {
        return Err(ProblemFileError::Syntax { line: end.max(1), column: 1, message: "no problem sections found".into() });
    };
    let missing: Vec<&str> = b
        .dynamics
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_none())
        .map(|(k, _)| b.spec.vars.state_names()[k].as_str())
        .collect();
    if !missing.is_empty() {
        return Err(ProblemFileError::Syntax {
            line: end.max(1),
            column: 1,
            message: format!("missing dynamics for {}", missing.join(", ")),
        });
    }
    if !horizon_set {
        b.spec.horizon = Horizon::Free;
    }
    b.spec.dynamics = b.dynamics.into_iter().flatten().collect();
    let problem = build_problem(b.spec).map_err(|source| ProblemFileError::Problem { line: 0, source })?;
    let problem = if b.scale.iter().any(|&f| f != 1.0) {
        apply_scaling(&problem, &b.scale).map_err(|source| ProblemFileError::Problem { line: 0, source })?
    } else {
        problem
    };
    Ok(ProblemFile { problem, relax: b.relax, seed: b.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN_TIME: &str = "\
[variables]
states = x1, x2
inputs = u

[dynamics]
x1' = x2
x2' = u

[cost]
integrand = 1
horizon = free

[initial]
dirac x1 = 1
dirac x2 = 1

[final]
dirac x1 = 0
dirac x2 = 0

[trajectory]
x2 >= -1
u >= -1
u <= 1
";

    fn with(extra_section: &str) -> String {
        format!("{MIN_TIME}\n{extra_section}")
    }

    fn syntax(e: ProblemFileError) -> (usize, usize, String) {
        match e {
            ProblemFileError::Syntax { line, column, message } => (line, column, message),
            other => panic!("expected a syntax error, got {other}"),
        }
    }

    #[test]
    fn min_time_file_is_valid() {
        let f = parse_problem_str(MIN_TIME).unwrap();
        let p = &f.problem;
        assert_eq!(p.num_states(), 2);
        assert_eq!(p.num_inputs(), 1);
        assert_eq!(p.horizon(), Horizon::Free);
        assert_eq!(p.tconstraints().len(), 3);
        let d = p.initial().dirac.as_ref().unwrap();
        assert_eq!(d.points, vec![vec![1.0, 1.0]]);
        assert!(p.final_().is_known());
        assert_eq!(f.relax, RelaxOptions::default());
    }

    #[test]
    fn uniform_and_dirac_on_one_state_conflict() {
        let text = MIN_TIME.replace("dirac x1 = 1\n", "uniform x1 in [-1, 1]\ndirac x1 = 0\n");
        match parse_problem_str(&text) {
            Err(ProblemFileError::Problem { line, source: OcpError::BoundaryConflict(v) }) => {
                assert_eq!(v, "x1");
                assert_eq!(line, 15);
            }
            other => panic!("expected a conflict, got {other:?}"),
        }
    }

    #[test]
    fn integral_constraint() {
        let f = parse_problem_str(&with("[integral]\nmom(u^2) <= 1\n")).unwrap();
        let c = f.problem.sconstraints();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].relation, MomentRelation::Le);
        assert_eq!(c[0].bound, 1.0);
        assert_eq!(c[0].integrand.degree(), 2);
    }

    #[test]
    fn dirac_mixture_with_weights() {
        let text = MIN_TIME.replace("dirac x1 = 1\ndirac x2 = 1\n", "dirac x1, x2 = 0, 1 @ 0.8; 1, 1 @ 0.2\n");
        let f = parse_problem_str(&text).unwrap();
        let d = f.problem.initial().dirac.clone().unwrap();
        assert_eq!(d.points, vec![vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(d.weights, vec![0.8, 0.2]);
    }

    #[test]
    fn options_are_read() {
        let f = parse_problem_str(&with(
            "[options]\ntesttime = true\ntmax = 10\nseed = 7\nmoment_bound = 5\nscale u = 2\n",
        ))
        .unwrap();
        assert_eq!(f.seed, Some(7));
        assert_eq!(f.relax.moment_bound, Some(5.0));
        assert_eq!(f.problem.testtime(), TestTime::Dependent);
        assert_eq!(f.problem.tmax(), Some(10.0));
        assert_eq!(f.problem.scaling()[3], 2.0);
    }

    #[test]
    fn diagnostics_point_at_the_offending_token() {
        let (line, col, msg) = syntax(parse_problem_str(&MIN_TIME.replace("x2' = u", "x2' = u + y")).unwrap_err());
        assert_eq!((line, col), (7, 11));
        assert!(msg.contains("`y`"), "{msg}");

        let (line, col, _) = syntax(parse_problem_str(&with("[bogus]\n")).unwrap_err());
        assert_eq!((line, col), (26, 1));

        let (line, _, msg) = syntax(parse_problem_str(&with("[options]\nfoo = 1\n")).unwrap_err());
        assert_eq!(line, 27);
        assert!(msg.contains("foo"));
    }

    #[test]
    fn variables_must_come_first() {
        let (line, _, _) = syntax(parse_problem_str("[dynamics]\nx' = u\n").unwrap_err());
        assert_eq!(line, 1);
        let (line, _, _) = syntax(parse_problem_str(&with("[variables]\nstates = y\n")).unwrap_err());
        assert_eq!(line, 26);
    }

    #[test]
    fn every_state_needs_one_equation() {
        let (_, _, msg) = syntax(parse_problem_str(&MIN_TIME.replace("x2' = u\n", "")).unwrap_err());
        assert!(msg.contains("x2"), "{msg}");
        let (line, _, _) = syntax(parse_problem_str(&MIN_TIME.replace("x2' = u\n", "x2' = u\nx1' = u\n")).unwrap_err());
        assert_eq!(line, 8);
    }

    #[test]
    fn fixed_horizon_and_final_cost() {
        let text = MIN_TIME.replace("horizon = free", "horizon = 2.5\nfinal = x1^2");
        let f = parse_problem_str(&text).unwrap();
        assert_eq!(f.problem.horizon(), Horizon::Fixed(2.5));
        assert_eq!(f.problem.fcost().degree(), 2);
    }

    #[test]
    fn final_cost_with_input_is_rejected() {
        let text = MIN_TIME.replace("horizon = free", "final = u");
        assert!(matches!(
            parse_problem_str(&text),
            Err(ProblemFileError::Problem { source: OcpError::InvalidData(_), .. })
        ));
    }
}
