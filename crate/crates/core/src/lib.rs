//! Lower bounds, value functions and feedback laws for polynomial optimal
//! control problems via moment relaxations of occupation measures.
//!
//! The usual path is [`ocp::ProblemSpec`] → [`ocp::build_problem`] →
//! [`pipeline::solve`], or [`cli::parse_problem_file`] for the sectioned
//! text format. The individual stages live in [`relaxation`], [`solver`]
//! and [`hjb`]; [`sim`] integrates the closed loop.

pub mod cli;
pub mod hjb;
pub mod moments;
pub mod ocp;
pub mod pipeline;
pub mod poly;
pub mod relaxation;
pub mod sim;
pub mod solver;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Poly(#[from] poly::PolyError),
    #[error(transparent)]
    Ocp(#[from] ocp::OcpError),
    #[error(transparent)]
    Relax(#[from] relaxation::RelaxError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Hjb(#[from] hjb::HjbError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    ProblemFile(#[from] cli::ProblemFileError),
}

/// JSON has no infinities or NaN; such values travel as strings.
pub(crate) mod serde_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("not a number: {t}"))),
            },
        }
    }
}
