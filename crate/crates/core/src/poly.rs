//! Sparse multivariate polynomials over a declared variable set.
//!
//! Every polynomial carries a shared [`VarSet`]. Exponent vectors follow the
//! canonical variable order `(time, states, inputs)` and monomials are kept in
//! graded lexicographic order, which is also the order used for moment
//! indexing.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Coefficients below this magnitude are dropped after arithmetic.
pub const ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("exponent at position {pos} must be a non-negative integer")]
    BadExponent { pos: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {0} is not part of the variable set")]
    UnknownVariable(usize),
    #[error("invalid variable set: {0}")]
    InvalidVarSet(String),
    #[error("polynomial depends on time but time derivatives were excluded")]
    TimeDependent,
}

/// Ordered variable declaration: optional time, then states, then inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    time_name: Option<String>,
    state_names: Vec<String>,
    input_names: Vec<String>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl VarSet {
    pub fn new<S: AsRef<str>>(
        states: &[S],
        inputs: &[S],
        time: Option<&str>,
    ) -> Result<Arc<Self>, PolyError> {
        let vs = VarSet {
            time_name: time.map(str::to_owned),
            state_names: states.iter().map(|s| s.as_ref().to_owned()).collect(),
            input_names: inputs.iter().map(|s| s.as_ref().to_owned()).collect(),
        };
        let mut seen = std::collections::HashSet::new();
        for name in vs.names() {
            if !is_identifier(name) {
                return Err(PolyError::InvalidVarSet(format!("`{name}` is not an identifier")));
            }
            if !seen.insert(name) {
                return Err(PolyError::InvalidVarSet(format!("duplicate variable `{name}`")));
            }
        }
        Ok(Arc::new(vs))
    }

    /// Total number of variables.
    pub fn len(&self) -> usize {
        self.time_name.is_some() as usize + self.state_names.len() + self.input_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_time(&self) -> bool {
        self.time_name.is_some()
    }

    pub fn time_index(&self) -> Option<usize> {
        self.time_name.as_ref().map(|_| 0)
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn state_index(&self, k: usize) -> usize {
        self.has_time() as usize + k
    }

    pub fn input_index(&self, k: usize) -> usize {
        self.has_time() as usize + self.state_names.len() + k
    }

    pub fn state_indices(&self) -> std::ops::Range<usize> {
        let s = self.has_time() as usize;
        s..s + self.state_names.len()
    }

    pub fn input_indices(&self) -> std::ops::Range<usize> {
        let s = self.has_time() as usize + self.state_names.len();
        s..s + self.input_names.len()
    }

    pub fn is_state(&self, var: usize) -> bool {
        self.state_indices().contains(&var)
    }

    pub fn is_input(&self, var: usize) -> bool {
        self.input_indices().contains(&var)
    }

    /// Variable names in canonical order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.time_name
            .iter()
            .chain(self.state_names.iter())
            .chain(self.input_names.iter())
            .map(String::as_str)
    }

    pub fn name(&self, var: usize) -> &str {
        self.names().nth(var).expect("variable index out of range")
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().position(|n| n == name)
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn time_name(&self) -> Option<&str> {
        self.time_name.as_deref()
    }
}

/// Exponent vector indexed by [`VarSet`] order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, var: usize, power: u32) -> Self {
        let mut e = vec![0; nvars];
        e[var] = power;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Degree restricted to the given variables.
    pub fn degree_in(&self, vars: &[usize]) -> u32 {
        vars.iter().map(|&v| self.0[v]).sum()
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: lower total degree first, then larger exponent
    /// of the earlier variable first (`1, x1, x2, x1^2, x1*x2, x2^2, ...`).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse polynomial with real coefficients in canonical form.
#[derive(Debug, Clone)]
pub struct Polynomial {
    vars: Arc<VarSet>,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        *self.vars == *other.vars && self.terms == other.terms
    }
}

impl Polynomial {
    pub fn zero(vars: &Arc<VarSet>) -> Self {
        Polynomial { vars: vars.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &Arc<VarSet>, c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Monomial::one(vars.len()), c);
        p
    }

    /// The coordinate function of variable `var`.
    pub fn var(vars: &Arc<VarSet>, var: usize) -> Self {
        Self::monomial(vars, Monomial::var(vars.len(), var, 1), 1.0)
    }

    pub fn monomial(vars: &Arc<VarSet>, m: Monomial, c: f64) -> Self {
        assert_eq!(m.0.len(), vars.len(), "monomial length does not match variable set");
        let mut p = Self::zero(vars);
        p.add_term(m, c);
        p
    }

    pub fn from_terms<I>(vars: &Arc<VarSet>, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(vars);
        for (m, c) in terms {
            assert_eq!(m.0.len(), vars.len(), "monomial length does not match variable set");
            p.add_term(m, c);
        }
        p.canonicalize();
        p
    }

    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Maximum degree in the given subset of variables.
    pub fn degree_in(&self, vars: &[usize]) -> u32 {
        self.terms.keys().map(|m| m.degree_in(vars)).max().unwrap_or(0)
    }

    pub fn uses_var(&self, var: usize) -> bool {
        self.terms.keys().any(|m| m.0[var] > 0)
    }

    /// Indices of variables that appear with a positive exponent.
    pub fn used_vars(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&v| self.uses_var(v)).collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(m).or_insert(0.0) += c;
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= ZERO_TOL);
    }

    fn check_same(&self, other: &Polynomial) {
        assert!(
            Arc::ptr_eq(&self.vars, &other.vars) || *self.vars == *other.vars,
            "polynomials over different variable sets"
        );
    }

    pub fn scale(&self, a: f64) -> Polynomial {
        let mut p = Polynomial {
            vars: self.vars.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * a)).collect(),
        };
        p.canonicalize();
        p
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut acc = Polynomial::constant(&self.vars, 1.0);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Result<Polynomial, PolyError> {
        if var >= self.vars.len() {
            return Err(PolyError::UnknownVariable(var));
        }
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut dm = m.clone();
            dm.0[var] -= 1;
            out.add_term(dm, c * e as f64);
        }
        out.canonicalize();
        Ok(out)
    }

    /// Value at `point` (given in [`VarSet`] order).
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.vars.len() {
            return Err(PolyError::DimensionMismatch { expected: self.vars.len(), got: point.len() });
        }
        Ok(self.eval(point))
    }

    /// Unchecked evaluation; `point` must have one entry per variable.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Fixes variable `var` to `value`.
    pub fn substitute_value(&self, var: usize, value: f64) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let e = m.0[var];
            let mut nm = m.clone();
            nm.0[var] = 0;
            out.add_term(nm, c * value.powi(e as i32));
        }
        out.canonicalize();
        out
    }

    /// Replaces variable `var` by the polynomial `q`.
    pub fn compose(&self, var: usize, q: &Polynomial) -> Polynomial {
        self.check_same(q);
        let maxe = self.terms.keys().map(|m| m.0[var]).max().unwrap_or(0);
        let mut powers = vec![Polynomial::constant(&self.vars, 1.0)];
        for k in 1..=maxe as usize {
            let next = &powers[k - 1] * q;
            powers.push(next);
        }
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let e = m.0[var] as usize;
            let mut nm = m.clone();
            nm.0[var] = 0;
            for (qm, qc) in powers[e].terms() {
                out.add_term(nm.mul(qm), c * qc);
            }
        }
        out.canonicalize();
        out
    }

    /// `p(s_0 z_0, ..., s_{n-1} z_{n-1})`: every variable multiplied by a factor.
    pub fn scale_vars(&self, factors: &[f64]) -> Polynomial {
        assert_eq!(factors.len(), self.vars.len());
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * m.eval(factors));
        }
        out.canonicalize();
        out
    }

    /// Re-expresses the polynomial over another variable set, mapping each
    /// variable through `map` (old index -> new index).
    pub fn embed(&self, vars: &Arc<VarSet>, map: &[usize]) -> Polynomial {
        let mut out = Polynomial::zero(vars);
        for (m, &c) in &self.terms {
            let mut e = vec![0; vars.len()];
            for (old, &exp) in m.0.iter().enumerate() {
                if exp > 0 {
                    e[map[old]] += exp;
                }
            }
            out.add_term(Monomial(e), c);
        }
        out.canonicalize();
        out
    }
}

/// `L_f w = dw/dt + sum_i dw/dx_i * f_i`.
pub fn lie_derivative(
    w: &Polynomial,
    f: &[Polynomial],
    include_time: bool,
) -> Result<Polynomial, PolyError> {
    let vars = w.vars();
    if f.len() != vars.num_states() {
        return Err(PolyError::DimensionMismatch { expected: vars.num_states(), got: f.len() });
    }
    let mut out = Polynomial::zero(vars);
    if let Some(t) = vars.time_index() {
        if include_time {
            out = w.differentiate(t)?;
        } else if w.uses_var(t) {
            return Err(PolyError::TimeDependent);
        }
    }
    for (k, fk) in f.iter().enumerate() {
        let dw = w.differentiate(vars.state_index(k))?;
        if !dw.is_zero() {
            out = &out + &(&dw * fk);
        }
    }
    Ok(out)
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out.canonicalize();
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out.canonicalize();
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.check_same(rhs);
        let mut out = Polynomial::zero(&self.vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out.canonicalize();
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, &c)) in self.terms.iter().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (i, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            let factors: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| {
                    if e == 1 {
                        self.vars.name(v).to_owned()
                    } else {
                        format!("{}^{}", self.vars.name(v), e)
                    }
                })
                .collect();
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Int(u64),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and its starting position.
    fn next(&mut self) -> Result<(Tok, usize), PolyError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut p = self.pos;
            let mut integral = true;
            while p < self.src.len() && self.src[p].is_ascii_digit() {
                p += 1;
            }
            if p < self.src.len() && self.src[p] == b'.' {
                integral = false;
                p += 1;
                while p < self.src.len() && self.src[p].is_ascii_digit() {
                    p += 1;
                }
            }
            if p < self.src.len() && (self.src[p] == b'e' || self.src[p] == b'E') {
                let mut q = p + 1;
                if q < self.src.len() && (self.src[q] == b'+' || self.src[q] == b'-') {
                    q += 1;
                }
                if q < self.src.len() && self.src[q].is_ascii_digit() {
                    integral = false;
                    while q < self.src.len() && self.src[q].is_ascii_digit() {
                        q += 1;
                    }
                    p = q;
                }
            }
            let text = std::str::from_utf8(&self.src[start..p]).unwrap();
            self.pos = p;
            if integral {
                if let Ok(i) = text.parse::<u64>() {
                    return Ok((Tok::Int(i), start));
                }
            }
            return text
                .parse::<f64>()
                .map(|v| (Tok::Num(v), start))
                .map_err(|_| PolyError::Syntax { pos: start, msg: format!("malformed number `{text}`") });
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut p = self.pos;
            while p < self.src.len() && (self.src[p].is_ascii_alphanumeric() || self.src[p] == b'_') {
                p += 1;
            }
            self.pos = p;
            let name = std::str::from_utf8(&self.src[start..p]).unwrap().to_owned();
            return Ok((Tok::Ident(name), start));
        }
        if b"+-*^()".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Op(c as char), start));
        }
        Err(PolyError::Syntax { pos: start, msg: format!("unexpected character `{}`", c as char) })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    pos: usize,
    vars: &'a Arc<VarSet>,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), PolyError> {
        let (t, p) = self.lex.next()?;
        self.tok = t;
        self.pos = p;
        Ok(())
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    acc = &acc + &self.term()?;
                }
                Tok::Op('-') => {
                    self.bump()?;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while self.tok == Tok::Op('*') {
            self.bump()?;
            acc = &acc * &self.factor()?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        match self.tok {
            Tok::Op('-') => {
                self.bump()?;
                return Ok(-&self.factor()?);
            }
            Tok::Op('+') => {
                self.bump()?;
                return self.factor();
            }
            _ => {}
        }
        let base = self.base()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let pos = self.pos;
            match self.tok {
                Tok::Int(n) if n <= u32::MAX as u64 => {
                    self.bump()?;
                    Ok(base.pow(n as u32))
                }
                Tok::Num(_) | Tok::Op('-') | Tok::Int(_) => Err(PolyError::BadExponent { pos }),
                _ => Err(PolyError::Syntax { pos, msg: "expected exponent".into() }),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Polynomial, PolyError> {
        let pos = self.pos;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Polynomial::constant(self.vars, v))
            }
            Tok::Int(i) => {
                self.bump()?;
                Ok(Polynomial::constant(self.vars, i as f64))
            }
            Tok::Ident(name) => {
                let idx = self
                    .vars
                    .index_of(&name)
                    .ok_or(PolyError::UnknownIdentifier { name, pos })?;
                self.bump()?;
                Ok(Polynomial::var(self.vars, idx))
            }
            Tok::Op('(') => {
                self.bump()?;
                let inner = self.expr()?;
                if self.tok != Tok::Op(')') {
                    return Err(PolyError::Syntax { pos: self.pos, msg: "expected `)`".into() });
                }
                self.bump()?;
                Ok(inner)
            }
            Tok::End => Err(PolyError::Syntax { pos, msg: "unexpected end of input".into() }),
            Tok::Op(c) => Err(PolyError::Syntax { pos, msg: format!("unexpected `{c}`") }),
        }
    }
}

/// Parses a polynomial expression over `vars`.
///
/// Grammar: `expr := term (('+'|'-') term)*`, `term := factor ('*' factor)*`,
/// `factor := ('+'|'-') factor | base ('^' uint)?`,
/// `base := number | ident | '(' expr ')'`. Positions in errors are byte
/// offsets into `text`.
pub fn parse_poly(text: &str, vars: &Arc<VarSet>) -> Result<Polynomial, PolyError> {
    let mut p = Parser {
        lex: Lexer { src: text.as_bytes(), pos: 0 },
        tok: Tok::End,
        pos: 0,
        vars,
    };
    p.bump()?;
    let out = p.expr()?;
    if p.tok != Tok::End {
        return Err(PolyError::Syntax { pos: p.pos, msg: "trailing input".into() });
    }
    Ok(out)
}
