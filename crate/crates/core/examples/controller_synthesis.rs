//! Stabilizing feedback for x1' = x2 + x1^2 - x1^3, x2' = u from a degree-8
//! polynomial subsolution, then closed-loop simulation from a few states.
//!
//! cargo run --release --example controller_synthesis [-- out.csv]

use polyocp::hjb::value_at;
use polyocp::ocp::{apply_scaling, build_problem, BoundarySpec, ProblemSpec, UniformFactor};
use polyocp::pipeline::{solve, PipelineOptions};
use polyocp::relaxation::{DegreeMode, RelaxOptions};
use polyocp::sim::{export_csv, simulate, PolynomialFeedback, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = ProblemSpec::new(&["x1", "x2"], &["u"])?;
    s.dynamics = vec![s.poly("x2 + x1^2 - x1^3")?, s.poly("u")?];
    s.scost = s.poly("x1^2 + x2^2 + 0.01*u^2")?;
    s.initial.uniform = Some(UniformFactor { vars: vec![1, 2], intervals: vec![(-1.0, 1.0), (-1.0, 1.0)] });
    s.final_ = BoundarySpec::dirac_point(vec![1, 2], vec![0.0, 0.0]);
    s.tmax = Some(100.0);
    let p = build_problem(s)?;
    // Inputs are large near the box edges; scale u so the trace bound admits them.
    let scaled = apply_scaling(&p, &[1.0, 1.0, 1.0, 20.0])?;

    let mut opts = PipelineOptions::new(DegreeMode::TfDegree(8));
    opts.relax = RelaxOptions { moment_bound: Some(10.0) };
    let out = solve(&scaled, &opts)?;
    let vf = out.value_function.as_ref().map_err(|e| e.to_string())?;
    let laws = out.controller.clone().map_err(|e| e.to_string())?;
    println!("lower bound {:.6}, verification passed: {}", out.solution.objective_value, vf.verification.passed);
    println!("u(x) = {}", laws[0]);

    let feedback = PolynomialFeedback { laws };
    for x0 in [[1.0, 1.0], [-1.0, 0.5], [0.5, -1.0]] {
        let traj = simulate(&p, &feedback, &x0, &SimOptions::default())?;
        let xf = traj.final_state();
        println!(
            "x0 = {x0:?}: {:?} at t = {:.3}, |x| = {:.2e}, cost {:.4} >= v(x0) = {:.4}",
            traj.status,
            traj.final_time(),
            xf.iter().map(|x| x * x).sum::<f64>().sqrt(),
            traj.running_cost(),
            value_at(&vf.v, &x0)
        );
        if let Some(path) = std::env::args().nth(1) {
            export_csv(&traj, std::path::Path::new(&path))?;
        }
    }
    Ok(())
}
