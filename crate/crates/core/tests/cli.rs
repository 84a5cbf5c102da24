use std::path::{Path, PathBuf};
use std::process::Command;

use polyocp::cli::{run, SolveReport, Term, EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn polyocp(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("polyocp").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn solve_to(dir: &Path, file: &str, flags: &[&str]) -> (i32, PathBuf) {
    let out = dir.join(file.replace(".ocp", ".json"));
    let path = problem(file);
    let mut args = vec!["solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(flags);
    let (code, _, err) = polyocp(&args);
    assert!(err.is_empty() || code == EXIT_OK, "{err}");
    (code, out)
}

fn load(path: &Path) -> SolveReport {
    SolveReport::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exact_value_report_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report_path) = solve_to(dir.path(), "exact_value.ocp", &["--tf-degree", "2"]);
    assert_eq!(code, EXIT_OK);
    let report = load(&report_path);
    assert!((report.lower_bound.unwrap() - 1.0).abs() < 1e-3);
    assert_eq!(report.degree.tf_degree, 2);
    assert_eq!(report.variables, ["t", "x1", "x2", "u"]);
    assert_eq!(report.measures.len(), 3);
    let vf = report.vf.as_ref().unwrap();
    for t in &vf.terms {
        let want = if t.exponents == [0, 0, 2, 0] { 1.0 } else { 0.0 };
        assert!((t.coeff - want).abs() < 1e-3, "{t:?}");
    }
    let laws = report.controller.as_ref().unwrap();
    assert_eq!(laws[0].input, "u");

    let (code, out, _) = polyocp(&["verify", "--report", report_path.to_str().unwrap(), "--grid", "11"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("min HJB residual") && out.contains("passed"));
}

#[test]
fn perturbed_value_function_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report_path) = solve_to(dir.path(), "exact_value.ocp", &["--tf-degree", "2"]);
    let mut report = load(&report_path);
    report.vf.as_mut().unwrap().terms.push(Term { exponents: vec![0, 4, 0, 0], coeff: 1.0 });
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, report.to_json()).unwrap();
    let (code, out, _) = polyocp(&["verify", "--report", bad.to_str().unwrap(), "--grid", "11"]);
    assert_ne!(code, EXIT_OK);
    assert!(out.contains("FAILED"), "{out}");
}

#[test]
fn single_point_grid_still_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report_path) = solve_to(dir.path(), "scalar_lq.ocp", &["--tf-degree", "2"]);
    let (code, out, err) = polyocp(&["verify", "--report", report_path.to_str().unwrap(), "--grid", "1"]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    assert!(out.contains("samples: 1 trajectory"), "{out}");
}

#[test]
fn report_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report_path) = solve_to(dir.path(), "scalar_lq.ocp", &["--tf-degree", "4"]);
    let text = std::fs::read_to_string(&report_path).unwrap();
    let report = SolveReport::from_json(&text).unwrap();
    assert_eq!(SolveReport::from_json(&report.to_json()).unwrap(), report);
    assert_eq!(report.to_json(), text);
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let flags = ["--tf-degree", "4", "--seed", "5"];
    let mut ra = load(&solve_to(&a, "exact_value.ocp", &flags).1);
    let mut rb = load(&solve_to(&b, "exact_value.ocp", &flags).1);
    assert_eq!(ra.seed, 5);
    ra.timings = Default::default();
    rb.timings = Default::default();
    assert_eq!(ra.to_json(), rb.to_json());
}

#[test]
fn degree_flag_is_required_and_exclusive() {
    let path = problem("scalar_lq.ocp");
    let file = path.to_str().unwrap();
    assert_eq!(polyocp(&["solve", file]).0, EXIT_USAGE);
    assert_eq!(polyocp(&["solve", file, "--tf-degree", "2", "--mom-degree", "4"]).0, EXIT_USAGE);
    assert_eq!(polyocp(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(polyocp(&["--help"]).0, EXIT_OK);
}

#[test]
fn infeasible_problem_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // Reaching 0 from 1 with |u| <= 1 takes at least one time unit.
    let text = std::fs::read_to_string(problem("scalar_lq.ocp"))
        .unwrap()
        .replace("horizon = free", "horizon = 0.5")
        + "\n[trajectory]\nu >= -1\nu <= 1\nx >= -2\nx <= 2\n";
    let file = dir.path().join("short.ocp");
    std::fs::write(&file, text).unwrap();
    let out = dir.path().join("short.json");
    let (code, stdout, _) =
        polyocp(&["solve", file.to_str().unwrap(), "--tf-degree", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_INFEASIBLE, "{stdout}");
    let report = load(&out);
    assert_eq!(report.lower_bound, None);
    assert!(report.vf.is_none() && !report.notes.is_empty());
}

#[test]
fn malformed_file_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.ocp");
    std::fs::write(&file, "[variables]\nstates = x\ninputs = u\n[dynamics]\nx' = u +* x\n").unwrap();
    let (code, _, err) = polyocp(&["solve", file.to_str().unwrap(), "--tf-degree", "2"]);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("line 5, column"), "{err}");
}

#[test]
fn simulate_from_target_and_bad_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report_path) = solve_to(dir.path(), "scalar_lq.ocp", &["--tf-degree", "2"]);
    let file = problem("scalar_lq.ocp");
    let csv = dir.path().join("traj.csv");
    let base = ["simulate", file.to_str().unwrap(), "--report", report_path.to_str().unwrap()];

    let mut args = base.to_vec();
    args.extend(["--x0", "0", "--csv", csv.to_str().unwrap()]);
    let (code, out, err) = polyocp(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("ReachedTarget") && out.contains("achieved cost: 0\n"), "{out}");
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv_text.lines().count(), 2);
    assert_eq!(csv_text.lines().next(), Some("t,x1,u1,cost"));

    let mut args = base.to_vec();
    args.extend(["--x0", "1,2"]);
    let (code, _, err) = polyocp(&args);
    assert_eq!(code, EXIT_FAILURE);
    assert!(err.contains("states"), "{err}");

    let mut args = base.to_vec();
    args.extend(["--x0", "-1"]);
    let (code, out, _) = polyocp(&args);
    assert_eq!(code, EXIT_OK);
    let cost: f64 = out.lines().find_map(|l| l.strip_prefix("achieved cost: ")).unwrap().parse().unwrap();
    // Optimal cost from |x0| = 1 is 1; the simulation stops at radius 1e-3.
    assert!((cost - 1.0).abs() < 1e-2, "{cost}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_polyocp");
    let status = Command::new(bin).args(["solve"]).output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let file = problem("scalar_lq.ocp");
    let status = Command::new(bin).args(["solve", file.to_str().unwrap(), "--tf-degree", "2"]).output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_OK));
}
