use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use polyocp::cli::{parse_problem_str, Term};
use polyocp::hjb::{Sampling, Verification};
use polyocp::moments::{basis, known_moments, uniform_moment, KnownFactor};
use polyocp::ocp::{DiracFactor, UniformFactor};
use polyocp::poly::{parse_poly, Monomial, Polynomial, VarSet};
use polyocp::solver::{solve_conic, AffineRow, ConicProgram, SolveStatus, SolverOptions};

fn vars() -> Arc<VarSet> {
    VarSet::new(&["x", "y"], &["u"], Some("t")).unwrap()
}

prop_compose! {
    fn polynomial()(terms in prop::collection::vec(
        (prop::collection::vec(0u32..4, 4), prop_oneof![(-5i32..=5i32).prop_map(f64::from), -10.0f64..10.0]),
        0..6,
    )) -> Polynomial {
        let vs = vars();
        Polynomial::from_terms(&vs, terms.into_iter().map(|(e, c)| (Monomial::new(e), c)))
    }
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 4)
}

fn min_eigenvalue(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    m.symmetric_eigenvalues().min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn display_parses_back_exactly(p in polynomial()) {
        let q = parse_poly(&p.to_string(), &vars()).unwrap();
        prop_assert_eq!(q, p);
    }

    #[test]
    fn arithmetic_commutes_with_evaluation(p in polynomial(), q in polynomial(), x in point()) {
        let (a, b) = (p.eval(&x), q.eval(&x));
        let tol = 1e-9 * (1.0 + a.abs()) * (1.0 + b.abs());
        prop_assert!(((&p + &q).eval(&x) - (a + b)).abs() <= tol);
        prop_assert!(((&p * &q).eval(&x) - a * b).abs() <= tol);
        prop_assert!(((&p - &p).is_zero()));
    }

    #[test]
    fn product_rule(p in polynomial(), q in polynomial(), x in point(), var in 0usize..4) {
        let lhs = (&p * &q).differentiate(var).unwrap().eval(&x);
        let rhs = p.differentiate(var).unwrap().eval(&x) * q.eval(&x) + p.eval(&x) * q.differentiate(var).unwrap().eval(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs()));
    }

    #[test]
    fn rescaling_is_invertible(p in polynomial(), s in prop::collection::vec(0.5f64..2.0, 4), x in point()) {
        let inv: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
        let back = p.scale_vars(&s).scale_vars(&inv);
        prop_assert!((back.eval(&x) - p.eval(&x)).abs() <= 1e-9 * (1.0 + p.max_abs_coeff()));
        // scale_vars substitutes z -> s z.
        let sx: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a * b).collect();
        prop_assert!((p.scale_vars(&s).eval(&x) - p.eval(&sx)).abs() <= 1e-8 * (1.0 + p.max_abs_coeff()));
    }

    #[test]
    fn dirac_mixture_moments(
        atoms in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 2), 0.05f64..1.0), 1..5),
    ) {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let d = DiracFactor {
            vars: vec![1, 2],
            points: atoms.iter().map(|a| a.0.clone()).collect(),
            weights: atoms.iter().map(|a| a.1 / total).collect(),
        };
        let b = basis(&[1, 2], 4, 6);
        let y = known_moments(&KnownFactor::Dirac(d.clone()), &b);
        prop_assert!((y[0] - 1.0).abs() < 1e-12);
        prop_assert!(min_eigenvalue(&b.moment_matrix(&y)) >= -1e-9);

        // Mirroring the mixture makes every odd moment vanish.
        let mut sym = d.clone();
        for p in &d.points {
            sym.points.push(p.iter().map(|x| -x).collect());
        }
        sym.weights = d.weights.iter().chain(&d.weights).map(|w| w / 2.0).collect();
        let ys = known_moments(&KnownFactor::Dirac(sym), &b);
        for (m, v) in b.monomials().iter().zip(ys) {
            if m.degree() % 2 == 1 {
                prop_assert!(v.abs() < 1e-12, "{:?} -> {}", m, v);
            }
        }
    }

    #[test]
    fn uniform_moments_match_closed_form(a in -3.0f64..3.0, w in 0.1f64..4.0, k in 0u32..12) {
        let b = a + w;
        let closed = (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / ((k + 1) as f64 * (b - a));
        prop_assert!((uniform_moment(a, b, k) - closed).abs() <= 1e-9 * (1.0 + closed.abs()));
    }

    #[test]
    fn uniform_box_moment_matrix_is_psd(
        bounds in prop::collection::vec((-2.0f64..2.0, 0.1f64..2.0), 2),
    ) {
        let u = UniformFactor { vars: vec![1, 2], intervals: bounds.iter().map(|&(a, w)| (a, a + w)).collect() };
        let b = basis(&[1, 2], 4, 4);
        let y = known_moments(&KnownFactor::Uniform(u), &b);
        prop_assert!(min_eigenvalue(&b.moment_matrix(&y)) >= -1e-9);
    }

    #[test]
    fn moment_matrices_are_hankel(y in prop::collection::vec(-1.0f64..1.0, 28)) {
        let b = basis(&[1, 2], 4, 6);
        prop_assert_eq!(b.len(), 28);
        let half = b.half();
        let m = b.moment_matrix(&y);
        for (i, mi) in half.monomials().iter().enumerate() {
            for (j, mj) in half.monomials().iter().enumerate() {
                prop_assert_eq!(m[i][j], y[b.get(&mi.mul(mj)).unwrap()]);
                prop_assert_eq!(m[i][j], m[j][i]);
            }
        }
    }

    #[test]
    fn box_lp_optimum(lo in -5.0f64..5.0, w in 0.1f64..5.0, c in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0]) {
        let hi = lo + w;
        let cp = ConicProgram {
            num_vars: 1,
            objective: vec![(0, c)],
            nonneg: vec![
                AffineRow { coeffs: vec![(0, 1.0)], constant: -lo },
                AffineRow { coeffs: vec![(0, -1.0)], constant: hi },
            ],
            ..Default::default()
        };
        let sol = solve_conic(&cp, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let want = if c > 0.0 { c * lo } else { c * hi };
        prop_assert!((sol.objective_value - want).abs() <= 1e-6 * (1.0 + want.abs()));
        prop_assert!((sol.dual_objective - want).abs() <= 1e-6 * (1.0 + want.abs()));
    }

    #[test]
    fn verification_json_round_trips(
        vals in prop::collection::vec(prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
        ], 7),
        seed in any::<u64>(),
        passed in any::<bool>(),
    ) {
        let v = Verification {
            min_hjb_residual: vals[0],
            terminal_violation: vals[1],
            bound_error: vals[2],
            lower_bound: vals[3],
            scale: vals[4].abs().min(1e300),
            residual_tol: vals[5].abs().min(1e300),
            bound_tol: vals[6].abs().min(1e300),
            trajectory_samples: 10,
            final_samples: 1,
            initial_samples: 0,
            sampling: Sampling::Halton { points: 10, seed },
            passed,
        };
        let back: Verification = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn terms_json_round_trips(coeff in any::<f64>().prop_filter("finite", |x| x.is_finite()), e in prop::collection::vec(0u32..20, 4)) {
        let t = Term { exponents: e, coeff };
        let back: Term = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn problem_file_numbers_are_exact(a in -10.0f64..10.0, w in 0.01f64..10.0, x0 in -10.0f64..10.0) {
        let b = a + w;
        let text = format!(
            "[variables]\nstates = x, y\ninputs = u\n[dynamics]\nx' = u\ny' = x\n[cost]\nintegrand = u^2\n\
             [initial]\nuniform x in [{a}, {b}]\ndirac y = {x0}\n[final]\ndirac x = 0\ndirac y = 0\n"
        );
        let f = parse_problem_str(&text).unwrap();
        let init = f.problem.initial();
        prop_assert_eq!(&init.uniform.as_ref().unwrap().intervals, &vec![(a, b)]);
        prop_assert_eq!(&init.dirac.as_ref().unwrap().points, &vec![vec![x0]]);
    }
}
