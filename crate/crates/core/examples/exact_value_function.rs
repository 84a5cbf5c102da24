//! A problem whose value function x2^2 is recovered exactly at test-function
//! degree 2.
//!
//! cargo run --release --example exact_value_function

use polyocp::ocp::{build_problem, BoundarySpec, ProblemSpec, SupportConstraint};
use polyocp::pipeline::{solve, PipelineOptions};
use polyocp::relaxation::DegreeMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = ProblemSpec::new(&["x1", "x2"], &["u"])?;
    s.dynamics = vec![s.poly("-x1^3 + x1*u")?, s.poly("u")?];
    s.scost = s.poly("x2^2 + u^2")?;
    s.initial = BoundarySpec::dirac_point(vec![1, 2], vec![1.0, 1.0]);
    s.final_ = BoundarySpec::dirac_point(vec![1, 2], vec![0.0, 0.0]);
    for v in ["x1", "x2"] {
        s.tconstraints.push(SupportConstraint::geq(&s.poly(v)?, &s.poly("-1.1")?));
        s.tconstraints.push(SupportConstraint::leq(&s.poly(v)?, &s.poly("1.1")?));
    }
    let p = build_problem(s)?;
    let out = solve(&p, &PipelineOptions::new(DegreeMode::TfDegree(2)))?;
    let vf = out.value_function.map_err(|e| e.to_string())?;
    println!("lower bound: {:.8}", out.solution.objective_value);
    println!("{vf}");
    Ok(())
}
