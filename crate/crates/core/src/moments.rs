//! Truncated monomial bases, moment indexing and closed-form moments of
//! known measures.

use std::collections::HashMap;

use thiserror::Error;

use crate::ocp::{DiracFactor, UniformFactor};
use crate::poly::Monomial;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("monomial {0:?} is outside the basis")]
    OutOfRange(Vec<u32>),
}

/// All monomials of degree `<= degree` in `vars`, graded lexicographic.
///
/// Monomials are stored as full-length exponent vectors of the parent
/// variable set with zeros outside `vars`.
#[derive(Debug, Clone)]
pub struct MomentBasis {
    vars: Vec<usize>,
    nvars_total: usize,
    degree: u32,
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

/// Builds the complete graded lexicographic basis of degree `d` over `vars`
/// (indices into a variable set of size `nvars_total`).
pub fn basis(vars: &[usize], nvars_total: usize, d: u32) -> MomentBasis {
    let mut monomials = Vec::new();
    let mut exps = vec![0u32; nvars_total];
    for k in 0..=d {
        push_degree(vars, k, &mut exps, &mut monomials);
    }
    let index = monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
    MomentBasis { vars: vars.to_vec(), nvars_total, degree: d, monomials, index }
}

fn push_degree(vars: &[usize], k: u32, exps: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    match vars {
        [] => {
            if k == 0 {
                out.push(Monomial::new(exps.clone()));
            }
        }
        [last] => {
            exps[*last] = k;
            out.push(Monomial::new(exps.clone()));
            exps[*last] = 0;
        }
        [first, rest @ ..] => {
            for e in (0..=k).rev() {
                exps[*first] = e;
                push_degree(rest, k - e, exps, out);
            }
            exps[*first] = 0;
        }
    }
}

impl MomentBasis {
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn nvars_total(&self) -> usize {
        self.nvars_total
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn get(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Position of `m` in the basis.
    pub fn moment_index(&self, m: &Monomial) -> Result<usize, MomentError> {
        self.get(m).ok_or_else(|| MomentError::OutOfRange(m.exponents().to_vec()))
    }

    /// Basis of half the degree (rows of the moment matrix).
    pub fn half(&self) -> MomentBasis {
        basis(&self.vars, self.nvars_total, self.degree / 2)
    }

    /// `M[i][j] = y[index(a_i + a_j)]` for the order-`degree/2` basis.
    pub fn moment_matrix(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let rows = self.half();
        rows.monomials
            .iter()
            .map(|a| {
                rows.monomials
                    .iter()
                    .map(|b| y[self.index[&a.mul(b)]])
                    .collect()
            })
            .collect()
    }
}

/// `C(n + d, d)`.
pub fn basis_size(n: usize, d: u32) -> usize {
    let mut r: u128 = 1;
    for k in 1..=d as u128 {
        r = r * (n as u128 + k) / k;
    }
    r as usize
}

/// A measure with closed-form moments.
#[derive(Debug, Clone, PartialEq)]
pub enum KnownFactor {
    Dirac(DiracFactor),
    Uniform(UniformFactor),
}

impl KnownFactor {
    pub fn vars(&self) -> &[usize] {
        match self {
            KnownFactor::Dirac(d) => &d.vars,
            KnownFactor::Uniform(u) => &u.vars,
        }
    }

    /// Moment of the monomial restricted to this factor's variables.
    pub fn moment(&self, m: &Monomial) -> f64 {
        let e = m.exponents();
        match self {
            KnownFactor::Dirac(d) => d
                .points
                .iter()
                .zip(&d.weights)
                .map(|(p, w)| {
                    w * d.vars.iter().zip(p).map(|(&v, &x)| x.powi(e[v] as i32)).product::<f64>()
                })
                .sum(),
            KnownFactor::Uniform(u) => u
                .vars
                .iter()
                .zip(&u.intervals)
                .map(|(&v, &(a, b))| uniform_moment(a, b, e[v]))
                .product(),
        }
    }
}

/// `(b^{k+1} - a^{k+1}) / ((k+1)(b - a))`, evaluated as a sum to avoid
/// cancellation on narrow intervals.
pub fn uniform_moment(a: f64, b: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut ap = 1.0;
    for j in 0..=k {
        s += ap * b.powi((k - j) as i32);
        ap *= a;
    }
    s / (k + 1) as f64
}

/// Moments of one known factor on every basis monomial.
pub fn known_moments(factor: &KnownFactor, basis: &MomentBasis) -> Vec<f64> {
    basis.monomials().iter().map(|m| factor.moment(m)).collect()
}

/// Moment of a product of independent factors over disjoint variables.
pub fn product_moment(factors: &[KnownFactor], m: &Monomial) -> f64 {
    factors.iter().map(|f| f.moment(m)).product()
}
