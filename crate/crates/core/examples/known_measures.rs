//! Closed-form moments of Dirac mixtures, uniform boxes and their products.
//!
//! cargo run --example known_measures

use polyocp::moments::{basis, known_moments, product_moment, KnownFactor};
use polyocp::ocp::{DiracFactor, UniformFactor};
use polyocp::poly::Monomial;

fn main() {
    // Variables: 0 = time (unused), 1 = x1, 2 = x2, 3 = x3.
    let mixture = KnownFactor::Dirac(DiracFactor {
        vars: vec![1, 2],
        points: vec![vec![0.0, 1.0], vec![1.0, 1.0]],
        weights: vec![0.8, 0.2],
    });
    let box3 = KnownFactor::Uniform(UniformFactor { vars: vec![3], intervals: vec![(-1.0, 2.0)] });

    let b = basis(&[1, 2], 4, 2);
    for (m, y) in b.monomials().iter().zip(known_moments(&mixture, &b)) {
        println!("mixture  {:?}: {y}", &m.exponents()[1..3]);
    }
    let b3 = basis(&[3], 4, 4);
    for (m, y) in b3.monomials().iter().zip(known_moments(&box3, &b3)) {
        println!("uniform  x3^{}: {y:.6}", m.exponents()[3]);
    }
    let m = Monomial::new(vec![0, 1, 1, 2]);
    println!("product  x1*x2*x3^2: {}", product_moment(&[mixture, box3], &m));
}
