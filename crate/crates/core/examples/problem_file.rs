//! Parse a problem file, solve it and print the JSON report.
//!
//! cargo run --release --example problem_file -- crates/core/problems/exact_value.ocp 2

use polyocp::cli::{parse_problem_file, SolveReport};
use polyocp::pipeline::{solve, PipelineOptions};
use polyocp::relaxation::DegreeMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/problems/scalar_lq.ocp").into());
    let degree: u32 = args.next().map_or(Ok(2), |d| d.parse())?;
    let file = parse_problem_file(path.as_ref())?;
    let mut opts = PipelineOptions::new(DegreeMode::TfDegree(degree));
    opts.relax = file.relax;
    let out = solve(&file.problem, &opts)?;
    let report = SolveReport::from_outcome(&out, &std::fs::read_to_string(&path)?, file.relax, file.seed.unwrap_or(0));
    println!("{}", report.to_json());
    Ok(())
}
