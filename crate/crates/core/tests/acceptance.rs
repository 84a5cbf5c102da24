//! Acceptance criteria 1-7. Every criterion writes one `PASS`/`FAIL` line
//! to stderr (outside the harness capture) and then asserts.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use polyocp::cli::{parse_problem_file, ProblemFile};
use polyocp::hjb::value_at;
use polyocp::moments::{basis, known_moments, KnownFactor};
use polyocp::ocp::{apply_scaling, DiracFactor, UniformFactor};
use polyocp::pipeline::{solve, Outcome, PipelineOptions};
use polyocp::poly::Monomial;
use polyocp::relaxation::{build_moment_problem, resolve_degrees, DegreeMode, MeasureId};
use polyocp::sim::{empirical_moments, simulate, PolynomialFeedback, SimOptions};
use polyocp::solver::SolveStatus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("acceptance criterion {n}: {} - {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn load(name: &str) -> ProblemFile {
    parse_problem_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)).unwrap()
}

fn run(file: &ProblemFile, mode: DegreeMode) -> Outcome {
    let mut opts = PipelineOptions::new(mode);
    opts.relax = file.relax;
    solve(&file.problem, &opts).unwrap()
}

fn min_time(d: u32) -> &'static Outcome {
    static CELLS: [OnceLock<Outcome>; 6] = [const { OnceLock::new() }; 6];
    CELLS[(d / 2 - 2) as usize].get_or_init(|| run(&load("min_time.ocp"), DegreeMode::MomDegree(d)))
}

fn stabilization() -> &'static (ProblemFile, Outcome) {
    static CELL: OnceLock<(ProblemFile, Outcome)> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = load("stabilization.ocp");
        let out = run(&f, DegreeMode::TfDegree(8));
        (f, out)
    })
}

fn exact_value() -> &'static (ProblemFile, Outcome) {
    static CELL: OnceLock<(ProblemFile, Outcome)> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = load("exact_value.ocp");
        let out = run(&f, DegreeMode::TfDegree(2));
        (f, out)
    })
}

fn scalar() -> &'static (ProblemFile, Outcome) {
    static CELL: OnceLock<(ProblemFile, Outcome)> = OnceLock::new();
    CELL.get_or_init(|| {
        let f = load("scalar_lq.ocp");
        let out = run(&f, DegreeMode::TfDegree(4));
        (f, out)
    })
}

#[test]
fn criterion_1_min_time_bound() {
    let bounds: Vec<f64> = (4..=14)
        .step_by(2)
        .map(|d| {
            let out = min_time(d);
            assert_eq!(out.status(), SolveStatus::Optimal, "degree {d}");
            out.lower_bound().unwrap()
        })
        .collect();
    let b14 = bounds[5];
    let in_range = (3.47..=3.5001).contains(&b14) && (b14 - 3.4988).abs() <= 0.01;
    let monotone = bounds.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    let below = bounds.iter().all(|&b| b <= 3.5 + 1e-4);
    verdict(
        1,
        in_range && monotone && below,
        &format!("degree 14 bound {b14:.6} (reference 3.4988); degrees 4..14: {bounds:.5?}"),
    );
}

#[test]
fn criterion_2_exact_value_function() {
    let (_, out) = exact_value();
    let vf = out.value_function.as_ref().unwrap();
    let x2sq = Monomial::new(vec![0, 0, 2, 0]);
    let lead = vf.v.coefficient(&x2sq);
    let others = vf.v.terms().filter(|(m, _)| **m != x2sq).map(|(_, c)| c.abs()).fold(0.0, f64::max);
    let bound = out.lower_bound().unwrap();
    verdict(
        2,
        (lead - 1.0).abs() <= 1e-3 && others <= 1e-3 && (bound - 1.0).abs() <= 1e-3,
        &format!("x2^2 coefficient {lead:.8}, largest other {others:.2e}, bound {bound:.8}"),
    );
}

#[test]
fn criterion_3_controller_synthesis() {
    let (file, out) = stabilization();
    let p = file.problem.unscaled();
    let vf = out.value_function.as_ref().unwrap();
    let law = &out.controller.as_ref().unwrap()[0];
    let expected = vf.v.differentiate(2).unwrap().scale(-50.0);
    let identity = (law - &expected).max_abs_coeff() <= 1e-12 * (1.0 + expected.max_abs_coeff());
    let bound = out.lower_bound().unwrap();
    let tol = 1e-3 * (1.0 + bound.abs());

    let feedback = PolynomialFeedback { laws: vec![law.clone()] };
    let opts = SimOptions { t_max: 20.0, stop_radius: 0.1, ..SimOptions::default() };
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let (mut reached, mut certified, mut total_cost, mut below_average) = (0, 0, 0.0, 0);
    for &a in &grid {
        for &b in &grid {
            let tr = simulate(&p, &feedback, &[a, b], &opts).unwrap();
            let xf = tr.final_state();
            reached += usize::from(xf.iter().map(|x| x * x).sum::<f64>().sqrt() <= 0.1);
            // Cost to go from x0 is at least v(x0); what remains at x_end is at least v(x_end).
            let cost = tr.running_cost();
            certified += usize::from(cost + value_at(&vf.v, xf) >= value_at(&vf.v, &[a, b]) - tol);
            below_average += usize::from(cost < bound - tol);
            total_cost += cost;
        }
    }
    let mean = total_cost / 25.0;
    verdict(
        3,
        identity && reached >= 23 && certified == 25 && mean >= bound - tol,
        &format!(
            "u = -50 dv/dx2: {identity}; {reached}/25 reach |x| <= 0.1; pointwise certificate holds {certified}/25; \
             mean grid cost {mean:.4} vs averaged bound {bound:.4} ({below_average} single starts lie below the average)"
        ),
    );
}

#[test]
fn criterion_4_scalar_riccati() {
    let (_, out) = scalar();
    let bound = out.lower_bound().unwrap();
    let law = &out.controller.as_ref().unwrap()[0];
    let err = (0..=200)
        .map(|k| -1.0 + 0.01 * k as f64)
        .map(|x| (law.eval(&[0.0, x, 0.0]) + x).abs())
        .fold(0.0, f64::max);
    verdict(
        4,
        (bound - 1.0).abs() <= 1e-4 && err <= 1e-3,
        &format!("bound {bound:.8}, max |u(x) + x| on [-1, 1] = {err:.2e}"),
    );
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let legendre = |x: f64| {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
            };
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

#[test]
fn criterion_5_moment_oracles() {
    let gl = gauss_legendre(16);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vars = [1, 2, 3];
    let b = basis(&vars, 4, 12);
    let close = |got: f64, want: f64| (got - want).abs() <= 1e-10 * want.abs().max(1.0);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..100 {
        let intervals: Vec<(f64, f64)> = (0..3)
            .map(|_| {
                let a = rng.random_range(-2.0..2.0);
                (a, a + rng.random_range(0.05..2.0))
            })
            .collect();
        let y = known_moments(&KnownFactor::Uniform(UniformFactor { vars: vars.to_vec(), intervals: intervals.clone() }), &b);
        for (m, &got) in b.monomials().iter().zip(&y) {
            let e = m.exponents();
            // Tensor-product quadrature of the normalized monomial.
            let want: f64 = intervals
                .iter()
                .zip(&e[1..])
                .map(|(&(lo, hi), &k)| {
                    gl.iter().map(|&(x, w)| 0.5 * w * (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).powi(k as i32)).sum::<f64>()
                })
                .product();
            ok &= close(got, want);
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }

        let atoms = rng.random_range(1..6);
        let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let points: Vec<Vec<f64>> = (0..atoms).map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let y = known_moments(
            &KnownFactor::Dirac(DiracFactor { vars: vars.to_vec(), points: points.clone(), weights: weights.clone() }),
            &b,
        );
        for (m, &got) in b.monomials().iter().zip(&y) {
            let e = m.exponents();
            let want: f64 = points
                .iter()
                .zip(&weights)
                .map(|(p, w)| w * p.iter().zip(&e[1..]).map(|(x, &k)| (0..k).fold(1.0, |acc, _| acc * x)).product::<f64>())
                .sum();
            ok &= close(got, want);
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    verdict(
        5,
        ok,
        &format!("100 boxes and 100 mixtures, {} monomials each, worst relative error {worst:.2e}", b.len()),
    );
}

#[test]
fn criterion_6_liouville_rows() {
    let file = load("min_time.ocp");
    let p = file.problem.unscaled();
    let plan = resolve_degrees(&p, DegreeMode::MomDegree(8)).unwrap();
    let mp = build_moment_problem(&p, &plan).unwrap();
    // Time-optimal control from (1, 1): brake, ride x2 = -1, then accelerate.
    let control = |t: f64, _: &[f64]| vec![if t < 2.0 { -1.0 } else if t < 2.5 { 0.0 } else { 1.0 }];
    let opts = SimOptions { t_max: 3.5, dt: 1e-4, stop_radius: 0.0, ..SimOptions::default() };
    let tr = simulate(&p, &control, &[1.0, 1.0], &opts).unwrap();
    let tb = mp.measure(MeasureId::Trajectory).full_basis();
    let y = mp.internal_trajectory_moments(&empirical_moments(&tr, &tb).unwrap());
    let residuals = mp.liouville_residuals(&y).unwrap();
    let worst = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let xf = tr.final_state();
    verdict(
        6,
        worst <= 1e-3,
        &format!(
            "{} rows, max residual {worst:.2e}; trajectory ends at ({:.1e}, {:.1e}) at t = {}",
            residuals.len(),
            xf[0],
            xf[1],
            tr.final_time()
        ),
    );
}

#[test]
fn criterion_7_structural_invariants() {
    let golden: [(&str, &Outcome); 4] = [
        ("min_time", min_time(14)),
        ("stabilization", &stabilization().1),
        ("exact_value", &exact_value().1),
        ("scalar_lq", &scalar().1),
    ];
    let mut min_eig = f64::INFINITY;
    let mut hankel = true;
    let mut contract = Vec::new();
    for (name, out) in &golden {
        for m in out.measures.as_ref().unwrap() {
            min_eig = min_eig.min(m.matrix.symmetric_eigenvalues().min());
            let half = m.basis.half();
            for (i, mi) in half.monomials().iter().enumerate() {
                for (j, mj) in half.monomials().iter().enumerate() {
                    let k = m.basis.get(&mi.mul(mj)).unwrap();
                    hankel &= m.matrix[(i, j)] == m.moments[k] && m.matrix[(i, j)] == m.matrix[(j, i)];
                }
            }
        }
        let passed = out.value_function.as_ref().is_ok_and(|vf| vf.verification.passed);
        contract.push(format!("{name} {}", if passed { "ok" } else { "FAILED" }));
    }
    let contract_ok = contract.iter().all(|c| c.ends_with("ok"));

    // Rescaling leaves the bound unchanged on problems whose optional
    // compactness rows are absent.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_shift = 0.0f64;
    for (file, out, mode) in [(&exact_value().0, &exact_value().1, 2), (&scalar().0, &scalar().1, 4)] {
        let reference = out.lower_bound().unwrap();
        for _ in 0..3 {
            let n = file.problem.vars().len();
            let factors: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
            let scaled = apply_scaling(&file.problem, &factors).unwrap();
            let b = run(&ProblemFile { problem: scaled, ..file.clone() }, DegreeMode::TfDegree(mode)).lower_bound().unwrap();
            worst_shift = worst_shift.max((b - reference).abs() / (1.0 + reference.abs()));
        }
    }
    verdict(
        7,
        min_eig >= -1e-6 && hankel && contract_ok && worst_shift <= 1e-5,
        &format!(
            "min eigenvalue {min_eig:.2e}; Hankel exact: {hankel}; contract: {}; worst relative bound shift under scaling {worst_shift:.2e}",
            contract.join(", ")
        ),
    );
}
