//! Lower bounds on the minimum time to steer a double integrator from
//! (1, 1) to the origin, for increasing relaxation degrees.
//!
//! cargo run --release --example min_time

use polyocp::ocp::{build_problem, BoundarySpec, ProblemSpec, SupportConstraint};
use polyocp::pipeline::{solve, PipelineOptions};
use polyocp::relaxation::{DegreeMode, RelaxOptions};

fn main() -> Result<(), polyocp::Error> {
    let mut s = ProblemSpec::new(&["x1", "x2"], &["u"])?;
    s.dynamics = vec![s.poly("x2")?, s.poly("u")?];
    s.scost = s.poly("1")?;
    s.initial = BoundarySpec::dirac_point(vec![1, 2], vec![1.0, 1.0]);
    s.final_ = BoundarySpec::dirac_point(vec![1, 2], vec![0.0, 0.0]);
    s.tconstraints = vec![
        SupportConstraint::geq(&s.poly("x2")?, &s.poly("-1")?),
        SupportConstraint::geq(&s.poly("u")?, &s.poly("-1")?),
        SupportConstraint::leq(&s.poly("u")?, &s.poly("1")?),
    ];
    let p = build_problem(s)?;

    println!("degree  bound      status");
    for d in (4..=14).step_by(2) {
        let mut opts = PipelineOptions::new(DegreeMode::MomDegree(d));
        opts.relax = RelaxOptions { moment_bound: Some(10.0) };
        let out = solve(&p, &opts)?;
        println!("{d:>6}  {:.6}  {:?}", out.solution.objective_value, out.status());
    }
    println!("true minimum time: 3.5");
    Ok(())
}
