//! Scalar regulator x' = u with cost x^2 + u^2: the relaxation reproduces the
//! Riccati solution v = x^2 and the feedback u = -x.
//!
//! cargo run --release --example scalar_riccati

use polyocp::ocp::{build_problem, BoundarySpec, ProblemSpec};
use polyocp::pipeline::{solve, PipelineOptions};
use polyocp::relaxation::DegreeMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = ProblemSpec::new(&["x"], &["u"])?;
    s.dynamics = vec![s.poly("u")?];
    s.scost = s.poly("x^2 + u^2")?;
    s.initial = BoundarySpec::dirac_point(vec![1], vec![1.0]);
    s.final_ = BoundarySpec::dirac_point(vec![1], vec![0.0]);
    let p = build_problem(s)?;
    for d in [2, 4] {
        let out = solve(&p, &PipelineOptions::new(DegreeMode::TfDegree(d)))?;
        let v = &out.value_function.as_ref().map_err(|e| e.to_string())?.v;
        let u = &out.controller.as_ref().map_err(|e| e.to_string())?[0];
        println!("tf degree {d}: bound {:.8}, v = {v}, u = {u}", out.solution.objective_value);
    }
    Ok(())
}
