//! The embedded interior-point solver on a small semidefinite program:
//! minimize y0 + y1 subject to [[y0, 1], [1, y1]] being positive semidefinite
//! and y0 - y1 = 0. The optimum is y0 = y1 = 1.
//!
//! cargo run --example conic_solver

use polyocp::solver::{solve_conic, BlockEntry, ConicProgram, PsdBlock, SolverOptions, SparseRow};

fn main() -> Result<(), polyocp::solver::SolverError> {
    let cp = ConicProgram {
        num_vars: 2,
        objective: vec![(0, 1.0), (1, 1.0)],
        objective_offset: 0.0,
        equalities: vec![SparseRow { coeffs: vec![(0, 1.0), (1, -1.0)], rhs: 0.0 }],
        psd_blocks: vec![PsdBlock {
            size: 2,
            entries: vec![
                BlockEntry { row: 0, col: 0, var: Some(0), coeff: 1.0 },
                BlockEntry { row: 0, col: 1, var: None, coeff: 1.0 },
                BlockEntry { row: 1, col: 1, var: Some(1), coeff: 1.0 },
            ],
            label: "2x2".into(),
        }],
        nonneg: Vec::new(),
    };
    let sol = solve_conic(&cp, &SolverOptions::default())?;
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    println!("y = {:?}, objective {:.9}, dual objective {:.9}", sol.y, sol.objective_value, sol.dual_objective);
    println!("residuals {:?}", sol.residuals);
    Ok(())
}
