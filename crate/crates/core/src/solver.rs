//! Conic programs in linear-matrix-inequality form and an embedded
//! primal-dual interior-point solver.
//!
//! The program is
//!
//! ```text
//! minimize    c'y + offset
//! subject to  A y = b
//!             F_k(y) = C0_k + sum_i y_i C_ik  >= 0   (PSD blocks)
//!             g_j(y) = d_j + a_j'y            >= 0   (nonnegative rows)
//! ```
//!
//! and its dual is `maximize b'l - sum_k <C0_k, Z_k> + offset` subject to
//! `A'l + sum_k A_k*(Z_k) = c`, `Z_k >= 0`. The solver follows the central
//! path with Nesterov-Todd scaling and a Mehrotra predictor-corrector, and
//! returns both primal moments and the equality multipliers `l`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed conic program: {0}")]
    Malformed(String),
    #[error("solution is not optimal (status {0:?})")]
    NotOptimal(SolveStatus),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse linear equality `coeffs . y = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Affine form `coeffs . y + constant`, required nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRow {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

/// One entry of a symmetric affine matrix map, stored on the upper triangle
/// (`row <= col`); `var == None` marks the constant part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub var: Option<usize>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub size: usize,
    pub entries: Vec<BlockEntry>,
    pub label: String,
}

impl PsdBlock {
    /// Dense value of the block at `y`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for e in &self.entries {
            let v = e.coeff * e.var.map_or(1.0, |i| y[i]);
            m[(e.row, e.col)] += v;
            if e.row != e.col {
                m[(e.col, e.row)] += v;
            }
        }
        m
    }
}

/// Standard-form conic program.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
    pub equalities: Vec<SparseRow>,
    pub psd_blocks: Vec<PsdBlock>,
    pub nonneg: Vec<AffineRow>,
}

impl ConicProgram {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Malformed(msg));
        if self.num_vars == 0 {
            return bad("no variables".into());
        }
        let n = self.num_vars;
        let check = |c: &[(usize, f64)], what: &str| -> Result<(), SolverError> {
            match c.iter().find(|(i, v)| *i >= n || !v.is_finite()) {
                Some((i, v)) => Err(SolverError::Malformed(format!("{what}: bad entry ({i}, {v})"))),
                None => Ok(()),
            }
        };
        check(&self.objective, "objective")?;
        for (k, r) in self.equalities.iter().enumerate() {
            check(&r.coeffs, &format!("equality {k}"))?;
            if !r.rhs.is_finite() {
                return bad(format!("equality {k}: non-finite right-hand side"));
            }
        }
        for (k, r) in self.nonneg.iter().enumerate() {
            check(&r.coeffs, &format!("nonnegative row {k}"))?;
        }
        for (k, b) in self.psd_blocks.iter().enumerate() {
            for e in &b.entries {
                if e.row > e.col || e.col >= b.size || e.var.is_some_and(|v| v >= n) || !e.coeff.is_finite() {
                    return bad(format!("block {k} ({}): bad entry {e:?}", b.label));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * y[i]).sum::<f64>() + self.objective_offset
    }

    /// Writes the program as text, one nonzero per line:
    ///
    /// ```text
    /// obj 0 0 <var> <coeff>            objective (var 0 is the constant offset)
    /// eq  <row> 0 <var> <coeff>        equality rows (var 0 is the right-hand side)
    /// psd <block> <row> <col> <var> <coeff>
    /// lin <row> 0 <var> <coeff>        nonnegative rows (var 0 is the constant)
    /// ```
    ///
    /// Block, row and column indices are 0-based; variable `j >= 1` is `y[j-1]`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# vars {}", self.num_vars)?;
        writeln!(out, "obj 0 0 0 {:e}", self.objective_offset)?;
        for &(i, c) in &self.objective {
            writeln!(out, "obj 0 0 {} {:e}", i + 1, c)?;
        }
        for (r, row) in self.equalities.iter().enumerate() {
            writeln!(out, "eq {r} 0 0 {:e}", row.rhs)?;
            for &(i, c) in &row.coeffs {
                writeln!(out, "eq {r} 0 {} {:e}", i + 1, c)?;
            }
        }
        for (k, b) in self.psd_blocks.iter().enumerate() {
            writeln!(out, "# block {k} size {} {}", b.size, b.label)?;
            for e in &b.entries {
                writeln!(out, "psd {k} {} {} {} {:e}", e.row, e.col, e.var.map_or(0, |v| v + 1), e.coeff)?;
            }
        }
        for (r, row) in self.nonneg.iter().enumerate() {
            writeln!(out, "lin {r} 0 0 {:e}", row.constant)?;
            for &(i, c) in &row.coeffs {
                writeln!(out, "lin {r} 0 {} {:e}", i + 1, c)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// `max(|Ay - b| / (1 + |b|), |F(y) - S| / (1 + |C0|))`
    pub primal: f64,
    /// `|c - A'l - A*(Z)| / (1 + |c|)`
    pub dual: f64,
    /// `|pobj - dobj| / (1 + |pobj| + |dobj|)`
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    /// One multiplier per equality row, in row order.
    pub eq_duals: Vec<f64>,
    /// Dual matrix of every PSD block.
    pub psd_duals: Vec<DMatrix<f64>>,
    /// Multiplier of every nonnegative row.
    pub nonneg_duals: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative duality gap target.
    pub gap_tol: f64,
    /// Relative primal and dual residual target.
    pub feas_tol: f64,
    /// Looser threshold accepted as optimal once progress stalls.
    pub accept_tol: f64,
    pub max_iter: usize,
    /// Relative diagonal regularization of the Schur complement.
    pub regularization: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            accept_tol: 1e-7,
            max_iter: 200,
            regularization: 1e-9,
            verbose: false,
        }
    }
}

/// Pluggable conic solver.
pub trait ConicBackend {
    fn solve(&self, cp: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution, SolverError>;
}

/// The embedded interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn solve(&self, cp: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution, SolverError> {
        solve_conic(cp, opts)
    }
}

/// A PSD cone with its affine map grouped by variable.
struct Cone {
    n: usize,
    c0: DMatrix<f64>,
    /// Global variable index of each local variable.
    vars: Vec<usize>,
    /// Upper-triangle entries `(row, col, coeff)` per local variable.
    entries: Vec<Vec<(usize, usize, f64)>>,
}

impl Cone {
    fn from_block(b: &PsdBlock) -> Cone {
        let mut c0 = DMatrix::zeros(b.size, b.size);
        let mut map = std::collections::BTreeMap::<usize, Vec<(usize, usize, f64)>>::new();
        for e in &b.entries {
            match e.var {
                None => {
                    c0[(e.row, e.col)] += e.coeff;
                    if e.row != e.col {
                        c0[(e.col, e.row)] += e.coeff;
                    }
                }
                Some(v) => map.entry(v).or_default().push((e.row, e.col, e.coeff)),
            }
        }
        let (vars, entries) = map.into_iter().unzip();
        Cone { n: b.size, c0, vars, entries }
    }

    fn from_row(r: &AffineRow) -> Cone {
        let mut map = std::collections::BTreeMap::<usize, f64>::new();
        for &(i, c) in &r.coeffs {
            *map.entry(i).or_default() += c;
        }
        let (vars, entries): (Vec<usize>, Vec<Vec<(usize, usize, f64)>>) =
            map.into_iter().map(|(i, c)| (i, vec![(0, 0, c)])).unzip();
        Cone { n: 1, c0: DMatrix::from_element(1, 1, r.constant), vars, entries }
    }

    /// `sum_i dy_i C_i` (without the constant).
    fn apply(&self, dy: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (a, &gi) in self.vars.iter().enumerate() {
            let s = dy[gi];
            if s == 0.0 {
                continue;
            }
            for &(r, c, v) in &self.entries[a] {
                m[(r, c)] += s * v;
                if r != c {
                    m[(c, r)] += s * v;
                }
            }
        }
        m
    }

    /// Adds `<C_i, Z>` into `out[i]`.
    fn adjoint_into(&self, z: &DMatrix<f64>, out: &mut DVector<f64>) {
        for (a, &gi) in self.vars.iter().enumerate() {
            out[gi] += self.inner(a, z);
        }
    }

    fn inner(&self, a: usize, z: &DMatrix<f64>) -> f64 {
        self.entries[a]
            .iter()
            .map(|&(r, c, v)| if r == c { v * z[(r, c)] } else { v * (z[(r, c)] + z[(c, r)]) })
            .sum()
    }

    fn frob_norm_c0(&self) -> f64 {
        self.c0.norm()
    }

    fn var_norm(&self, a: usize) -> f64 {
        self.entries[a]
            .iter()
            .map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    /// Adds `<C_i, W C_j W>` for all local pairs into `m`.
    fn schur_into(&self, w: &DMatrix<f64>, m: &mut DMatrix<f64>) {
        let n = self.n;
        let nv = self.vars.len();
        if n == 1 {
            let w2 = w[(0, 0)] * w[(0, 0)];
            for a in 0..nv {
                for b in 0..nv {
                    m[(self.vars[a], self.vars[b])] += self.entries[a][0].2 * self.entries[b][0].2 * w2;
                }
            }
            return;
        }
        let ws = w.as_slice();
        let cols: Vec<Vec<f64>> = (0..nv)
            .into_par_iter()
            .map(|a| {
                let mut t = vec![0.0; n * n];
                for &(r, c, v) in &self.entries[a] {
                    let wr = &ws[r * n..(r + 1) * n];
                    if r == c {
                        for j in 0..n {
                            let s = v * wr[j];
                            let col = &mut t[j * n..(j + 1) * n];
                            for i in 0..n {
                                col[i] += s * wr[i];
                            }
                        }
                    } else {
                        let wc = &ws[c * n..(c + 1) * n];
                        for j in 0..n {
                            let s1 = v * wc[j];
                            let s2 = v * wr[j];
                            let col = &mut t[j * n..(j + 1) * n];
                            for i in 0..n {
                                col[i] += s1 * wr[i] + s2 * wc[i];
                            }
                        }
                    }
                }
                (0..nv)
                    .map(|b| {
                        self.entries[b]
                            .iter()
                            .map(|&(r, c, v)| if r == c { v * t[r * n + r] } else { 2.0 * v * t[c * n + r] })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        for (a, col) in cols.iter().enumerate() {
            for (b, &val) in col.iter().enumerate() {
                m[(self.vars[b], self.vars[a])] += val;
            }
        }
    }
}

/// Nesterov-Todd scaling of one cone: `W = G G'`, `G' S G = G^{-1} Z G^{-T} = diag(lambda)`.
struct NtScaling {
    g: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<NtScaling> {
    let ls = s.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let svd = (lz.transpose() * &ls).svd(true, false);
    let u = svd.u?;
    let d = svd.singular_values;
    if d.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let mut g = lz * u;
    for (j, &dj) in d.iter().enumerate() {
        let f = 1.0 / dj.sqrt();
        g.column_mut(j).scale_mut(f);
    }
    let w = &g * g.transpose();
    Some(NtScaling { g, w, lambda: d })
}

/// Largest `a` with `X + a dX >= 0`, capped at `f64::INFINITY`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    if n == 1 {
        return if dx[(0, 0)] < 0.0 { -x[(0, 0)] / dx[(0, 0)] } else { f64::INFINITY };
    }
    let Some(ch) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(t) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let sym = (&t + t.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    if min_eig < 0.0 {
        -1.0 / min_eig
    } else {
        f64::INFINITY
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Affine parametrization `{y : A y = b} = {y_p + N z}` with orthonormal `N`,
/// plus the pieces needed to recover multipliers by least squares.
struct EqualityReduction {
    y_p: DVector<f64>,
    /// Orthonormal basis of the null space of `A`; `None` means identity.
    null: Option<DMatrix<f64>>,
    /// `A = W diag(sigma) U_r'` restricted to the numerical rank.
    u_r: DMatrix<f64>,
    w_r: DMatrix<f64>,
    sigma: DVector<f64>,
}

impl EqualityReduction {
    /// Returns `None` when the rows are inconsistent.
    fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<EqualityReduction> {
        let (m, n) = a.shape();
        if m == 0 {
            return Some(EqualityReduction {
                y_p: DVector::zeros(n),
                null: None,
                u_r: DMatrix::zeros(n, 0),
                w_r: DMatrix::zeros(0, 0),
                sigma: DVector::zeros(0),
            });
        }
        // SVD of A' padded to at least n columns so that U spans R^n.
        let cols = m.max(n);
        let mut at = DMatrix::zeros(n, cols);
        at.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
        let svd = at.svd(true, true);
        let u = svd.u.expect("requested");
        let vt = svd.v_t.expect("requested");
        let s = svd.singular_values;
        let smax = s.max();
        let tol = 1e-10 * smax.max(1e-300) * (m.max(n) as f64).sqrt();
        let rank = s.iter().filter(|&&x| x > tol).count();
        let u_r = u.columns(0, rank).into_owned();
        let w_r = vt.rows(0, rank).transpose().rows(0, m).into_owned();
        let sigma = DVector::from_fn(rank, |i, _| s[i]);
        let coef = DVector::from_fn(rank, |i, _| w_r.column(i).dot(b) / sigma[i]);
        let y_p = &u_r * coef;
        let res = (a * &y_p - b).norm();
        if res > 1e-8 * (1.0 + b.norm()) {
            return None;
        }
        let null = u.columns(rank, n - rank).into_owned();
        Some(EqualityReduction { y_p, null: Some(null), u_r, w_r, sigma })
    }

    fn dim(&self) -> usize {
        self.null.as_ref().map_or(self.y_p.len(), |n| n.ncols())
    }

    fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.null {
            Some(n) => n * z,
            None => z.clone(),
        }
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.null {
            Some(n) => n.transpose() * v,
            None => v.clone(),
        }
    }

    fn reduce_schur(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        match &self.null {
            Some(n) => n.transpose() * (m * n),
            None => m,
        }
    }

    /// Least-squares `l` with `A' l = r`.
    fn multipliers(&self, r: &DVector<f64>) -> DVector<f64> {
        let coef = DVector::from_fn(self.sigma.len(), |i, _| self.u_r.column(i).dot(r) / self.sigma[i]);
        &self.w_r * coef
    }
}

struct Iterate {
    z: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    x: Vec<DMatrix<f64>>,
}

/// Solves `cp` with the embedded interior-point method.
///
/// Equality constraints are eliminated first through an orthonormal basis
/// of their null space; the remaining pure LMI problem is solved by a
/// path-following method and the equality multipliers are recovered by least
/// squares from the stationarity condition.
pub fn solve_conic(cp: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution, SolverError> {
    cp.validate()?;
    let nvar = cp.num_vars;

    let m_all = cp.equalities.len();
    let mut a = DMatrix::zeros(m_all, nvar);
    let mut b = DVector::zeros(m_all);
    let mut row_scale = vec![1.0; m_all];
    for (r, row) in cp.equalities.iter().enumerate() {
        for &(i, c) in &row.coeffs {
            a[(r, i)] += c;
        }
        let nrm = a.row(r).norm();
        if nrm > 0.0 {
            row_scale[r] = 1.0 / nrm;
        }
        a.row_mut(r).scale_mut(row_scale[r]);
        b[r] = row.rhs * row_scale[r];
    }
    let infeasible = || ConicSolution {
        status: SolveStatus::Infeasible,
        y: vec![0.0; nvar],
        objective_value: f64::NAN,
        dual_objective: f64::NAN,
        eq_duals: vec![0.0; m_all],
        psd_duals: cp.psd_blocks.iter().map(|b| DMatrix::zeros(b.size, b.size)).collect(),
        nonneg_duals: vec![0.0; cp.nonneg.len()],
        residuals: Residuals::default(),
        iterations: 0,
    };
    let Some(red) = EqualityReduction::new(&a, &b) else {
        return Ok(infeasible());
    };
    let k = red.dim();

    let mut c: DVector<f64> = DVector::zeros(nvar);
    for &(i, v) in &cp.objective {
        c[i] += v;
    }
    let c_red = red.project(&c);

    let cones: Vec<Cone> = cp
        .psd_blocks
        .iter()
        .map(Cone::from_block)
        .chain(cp.nonneg.iter().map(Cone::from_row))
        .collect();
    let n_total: usize = cones.iter().map(|k| k.n).sum();
    let eval_f = |y: &DVector<f64>| -> Vec<DMatrix<f64>> { cones.iter().map(|k| &k.c0 + k.apply(y)).collect() };
    let adjoint = |z: &[DMatrix<f64>]| -> DVector<f64> {
        let mut out = DVector::zeros(nvar);
        for (k, zk) in cones.iter().zip(z) {
            k.adjoint_into(zk, &mut out);
        }
        out
    };
    // Constant part of the reduced problem.
    let f_p = eval_f(&red.y_p);
    let cy_p = c.dot(&red.y_p);
    let norm_c = c_red.norm();
    let norm_f0 = f_p.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();

    // Starting point.
    let mut it = Iterate { z: DVector::zeros(k), s: Vec::new(), x: Vec::new() };
    for cone in &cones {
        let nf = cone.n as f64;
        let max_a = (0..cone.vars.len()).map(|a| cone.var_norm(a)).fold(0.0, f64::max);
        let mut xi_x: f64 = 10f64.max(nf.sqrt());
        for (a, &gi) in cone.vars.iter().enumerate() {
            xi_x = xi_x.max(nf * (1.0 + c[gi].abs()) / (1.0 + cone.var_norm(a)));
        }
        let xi_s = 10f64.max(nf.sqrt()).max(max_a).max(cone.frob_norm_c0());
        it.s.push(DMatrix::identity(cone.n, cone.n) * xi_s);
        it.x.push(DMatrix::identity(cone.n, cone.n) * xi_x);
    }

    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    let mut res = Residuals::default();
    let mut best: Option<(f64, Iterate, Residuals)> = None;
    let mut best_iter = 0;
    let mut stall = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let y = &red.y_p + red.lift(&it.z);
        let f = eval_f(&y);
        let rs: Vec<DMatrix<f64>> = f.iter().zip(&it.s).map(|(fk, sk)| fk - sk).collect();
        let ax = adjoint(&it.x);
        let rd = &c_red - red.project(&ax);
        let pobj = c.dot(&y);
        let fpx: f64 = f_p.iter().zip(&it.x).map(|(a, b)| inner(a, b)).sum();
        let dobj = cy_p - fpx;
        let sx: f64 = it.s.iter().zip(&it.x).map(|(s, x)| inner(s, x)).sum();
        let mu = sx / n_total.max(1) as f64;

        let rs_norm = rs.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        res = Residuals {
            primal: rs_norm / (1.0 + norm_f0),
            dual: rd.norm() / (1.0 + norm_c),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        };
        if opts.verbose {
            eprintln!(
                "{iter:3} pobj {pobj:+.10e} dobj {dobj:+.10e} p {:.2e} d {:.2e} gap {:.2e} mu {mu:.2e}",
                res.primal, res.dual, res.gap
            );
        }
        if !pobj.is_finite() || !dobj.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let merit = res.primal.max(res.dual).max(res.gap);
        if best.as_ref().is_none_or(|bst| merit < bst.0) {
            best = Some((merit, Iterate { z: it.z.clone(), s: it.s.clone(), x: it.x.clone() }, res));
            best_iter = iter;
        }
        if res.primal <= opts.feas_tol && res.dual <= opts.feas_tol && res.gap <= opts.gap_tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Farkas-type certificates: X >= 0 with N'A*(X) ~ 0 and <F(y_p), X> < 0
        // proves primal infeasibility; a direction d = N z with A(d) >= 0 and
        // c'd < 0 proves unboundedness.
        if fpx < 0.0 && red.project(&ax).norm() <= 1e-8 * (-fpx) && -fpx > 1e8 * (1.0 + norm_c) {
            status = SolveStatus::Infeasible;
            break;
        }
        if pobj < 0.0 {
            let d = red.lift(&it.z);
            let cd = c.dot(&d);
            if cd < -1e8 * (1.0 + norm_f0) {
                let neg: f64 = cones
                    .iter()
                    .map(|cone| {
                        let m = cone.apply(&d);
                        (-m.symmetric_eigenvalues().min()).max(0.0)
                    })
                    .sum();
                if neg <= 1e-8 * (-cd) {
                    status = SolveStatus::Unbounded;
                    break;
                }
            }
        }
        if iter == opts.max_iter {
            break;
        }
        // Accuracy has been lost if an acceptable point is long past.
        if iter >= best_iter + 10 && best.as_ref().is_some_and(|b| b.0 <= opts.accept_tol) {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // Scaling and reduced Schur complement.
        let mut nts = Vec::with_capacity(cones.len());
        for (s, x) in it.s.iter().zip(&it.x) {
            match nt_scaling(s, x) {
                Some(nt) => nts.push(nt),
                None => break,
            }
        }
        if nts.len() != cones.len() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let mut schur = DMatrix::zeros(nvar, nvar);
        for (cone, nt) in cones.iter().zip(&nts) {
            cone.schur_into(&nt.w, &mut schur);
        }
        let schur = red.reduce_schur(schur);
        let chol = if k == 0 {
            None
        } else {
            let max_diag = schur.diagonal().max().max(1e-300);
            let mut reg = 0.0;
            loop {
                let mut mm = schur.clone();
                for i in 0..k {
                    mm[(i, i)] += reg * max_diag;
                }
                if let Some(ch) = mm.cholesky() {
                    break Some(ch);
                }
                reg = if reg == 0.0 { opts.regularization } else { reg * 100.0 };
                if reg > 1e-2 {
                    break None;
                }
            }
        };
        if k > 0 && chol.is_none() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        let wrsw: Vec<DMatrix<f64>> = nts.iter().zip(&rs).map(|(nt, r)| &nt.w * r * &nt.w).collect();
        let schur_solve = |h: &DVector<f64>| -> DVector<f64> {
            let Some(ch) = &chol else { return DVector::zeros(0) };
            let mut dz = ch.solve(h);
            let mut r = h - &schur * &dz;
            for _ in 0..3 {
                let rn = r.norm();
                if rn <= 1e-14 * h.norm() {
                    break;
                }
                let cand = &dz + ch.solve(&r);
                let rc = h - &schur * &cand;
                if rc.norm() >= rn {
                    break;
                }
                dz = cand;
                r = rc;
            }
            dz
        };
        let direction = |dz: &DVector<f64>, q: &[DMatrix<f64>]| -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let dy = red.lift(dz);
            let mut ds = Vec::with_capacity(cones.len());
            let mut dx = Vec::with_capacity(cones.len());
            for (((cone, nt), qk), rsk) in cones.iter().zip(&nts).zip(q).zip(&rs) {
                let ady = cone.apply(&dy);
                let dxk = qk - &nt.w * &ady * &nt.w;
                dx.push((&dxk + dxk.transpose()) * 0.5);
                ds.push(ady + rsk);
            }
            (ds, dx)
        };
        // Newton system: A(dy) - dS = -Rs, N'A*(dX) = rd and the linearized
        // complementarity dX = Q - W A(dy) W, which reduces to
        // M dz = N'A*(Q) - rd. The reduced equation is refined against the
        // operator form since M loses accuracy as mu shrinks.
        let solve_dir = |q: &[DMatrix<f64>]| -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let h = red.project(&adjoint(q)) - &rd;
            let mut dz = schur_solve(&h);
            let (mut ds, mut dx) = direction(&dz, q);
            if k == 0 {
                return (dz, ds, dx);
            }
            let mut err = (&rd - red.project(&adjoint(&dx))).norm();
            for _ in 0..4 {
                if err <= 1e-15 * (1.0 + norm_c) {
                    break;
                }
                let e = &rd - red.project(&adjoint(&dx));
                let cand = &dz - schur_solve(&e);
                let (cs, cx) = direction(&cand, q);
                let cerr = (&rd - red.project(&adjoint(&cx))).norm();
                if cerr >= 0.5 * err {
                    if cerr < err {
                        (dz, ds, dx) = (cand, cs, cx);
                    }
                    break;
                }
                (dz, ds, dx, err) = (cand, cs, cx, cerr);
            }
            (dz, ds, dx)
        };

        // Predictor.
        let q_aff: Vec<DMatrix<f64>> = it.x.iter().zip(&wrsw).map(|(x, w)| -x - w).collect();
        let (_, ds_a, dx_a) = solve_dir(&q_aff);
        let ap = it.s.iter().zip(&ds_a).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min).min(1.0);
        let ad = it.x.iter().zip(&dx_a).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min).min(1.0);
        let mu_aff: f64 = it
            .s
            .iter()
            .zip(&ds_a)
            .zip(it.x.iter().zip(&dx_a))
            .map(|((s, ds), (x, dx))| inner(&(s + ds * ap), &(x + dx * ad)))
            .sum::<f64>()
            / n_total.max(1) as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let q_cor: Vec<DMatrix<f64>> = nts
            .iter()
            .zip(&ds_a)
            .zip(&wrsw)
            .map(|((nt, ds), w)| {
                let n = nt.lambda.len();
                let ds_hat = nt.g.transpose() * ds * &nt.g;
                let mut dx_hat = -&ds_hat;
                for i in 0..n {
                    dx_hat[(i, i)] -= nt.lambda[i];
                }
                let prod = &dx_hat * &ds_hat;
                let mut rc = -(&prod + prod.transpose()) * 0.5;
                for i in 0..n {
                    rc[(i, i)] += sigma * mu - nt.lambda[i] * nt.lambda[i];
                }
                let li = DMatrix::from_fn(n, n, |i, j| 2.0 * rc[(i, j)] / (nt.lambda[i] + nt.lambda[j]));
                &nt.g * li * nt.g.transpose() - w
            })
            .collect();
        let (dz, ds, dx) = solve_dir(&q_cor);
        let ap_max = it.s.iter().zip(&ds).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min);
        let ad_max = it.x.iter().zip(&dx).map(|(x, d)| max_step(x, d)).fold(f64::INFINITY, f64::min);
        let gamma = 0.9 + 0.09 * ap_max.min(ad_max).min(1.0);
        let ap = (gamma * ap_max).min(1.0);
        let ad = (gamma * ad_max).min(1.0);
        if opts.verbose {
            let dir_res = (&rd - red.project(&adjoint(&dx))).norm() / (1.0 + norm_c);
            eprintln!("    ap {ap:.3e} ad {ad:.3e} sigma {sigma:.3e} direction residual {dir_res:.2e}");
        }
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
        } else {
            stall = 0;
        }
        if stall >= 3 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        it.z.axpy(ap, &dz, 1.0);
        for (s, d) in it.s.iter_mut().zip(&ds) {
            *s += d * ap;
            *s = (&*s + s.transpose()) * 0.5;
        }
        for (x, d) in it.x.iter_mut().zip(&dx) {
            *x += d * ad;
            *x = (&*x + x.transpose()) * 0.5;
        }
    }

    if matches!(status, SolveStatus::IterationLimit | SolveStatus::NumericalFailure) {
        if let Some((merit, bi, br)) = best {
            it = bi;
            res = br;
            if merit <= opts.accept_tol {
                status = SolveStatus::Optimal;
            }
        }
    }

    let y = &red.y_p + red.lift(&it.z);
    let ax = adjoint(&it.x);
    let lam = red.multipliers(&(&c - &ax));
    let dual_res = (&c - a.transpose() * &lam - &ax).norm() / (1.0 + c.norm());
    res.dual = res.dual.max(dual_res);
    let fpx: f64 = f_p.iter().zip(&it.x).map(|(a, b)| inner(a, b)).sum();
    let eq_duals = lam.iter().zip(&row_scale).map(|(l, s)| l * s).collect();
    let nblocks = cp.psd_blocks.len();
    let nonneg_duals = it.x[nblocks..].iter().map(|x| x[(0, 0)]).collect();
    let mut psd_duals = it.x;
    psd_duals.truncate(nblocks);
    Ok(ConicSolution {
        status,
        objective_value: c.dot(&y) + cp.objective_offset,
        dual_objective: cy_p - fpx + cp.objective_offset,
        y: y.iter().copied().collect(),
        eq_duals,
        psd_duals,
        nonneg_duals,
        residuals: res,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_block(var: usize) -> PsdBlock {
        PsdBlock {
            size: 1,
            entries: vec![BlockEntry { row: 0, col: 0, var: Some(var), coeff: 1.0 }],
            label: "y".into(),
        }
    }

    #[test]
    fn single_variable_lp() {
        let cp = ConicProgram {
            num_vars: 1,
            objective: vec![(0, 1.0)],
            equalities: vec![SparseRow { coeffs: vec![(0, 1.0)], rhs: 3.0 }],
            psd_blocks: vec![scalar_block(0)],
            ..Default::default()
        };
        let sol = solve_conic(&cp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 3.0).abs() < 1e-7);
        assert!((sol.eq_duals[0] - 1.0).abs() < 1e-6, "dual {}", sol.eq_duals[0]);
    }

    #[test]
    fn contradictory_equality_is_infeasible() {
        let cp = ConicProgram {
            num_vars: 1,
            objective: vec![],
            equalities: vec![SparseRow { coeffs: vec![(0, 1.0)], rhs: -1.0 }],
            psd_blocks: vec![scalar_block(0)],
            ..Default::default()
        };
        let sol = solve_conic(&cp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn inconsistent_rows_are_infeasible() {
        let cp = ConicProgram {
            num_vars: 1,
            objective: vec![(0, 1.0)],
            equalities: vec![
                SparseRow { coeffs: vec![(0, 1.0)], rhs: 1.0 },
                SparseRow { coeffs: vec![(0, 2.0)], rhs: 3.0 },
            ],
            psd_blocks: vec![scalar_block(0)],
            ..Default::default()
        };
        assert_eq!(solve_conic(&cp, &SolverOptions::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -y0 s.t. y0 >= 0
        let cp = ConicProgram {
            num_vars: 1,
            objective: vec![(0, -1.0)],
            psd_blocks: vec![scalar_block(0)],
            ..Default::default()
        };
        assert_eq!(solve_conic(&cp, &SolverOptions::default()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn min_eigenvalue_sdp() {
        // min t s.t. [[t-2, -1], [-1, t-2]] >= 0  -> t = 3 (largest eigenvalue of [[2,1],[1,2]])
        let block = PsdBlock {
            size: 2,
            entries: vec![
                BlockEntry { row: 0, col: 0, var: Some(0), coeff: 1.0 },
                BlockEntry { row: 1, col: 1, var: Some(0), coeff: 1.0 },
                BlockEntry { row: 0, col: 0, var: None, coeff: -2.0 },
                BlockEntry { row: 1, col: 1, var: None, coeff: -2.0 },
                BlockEntry { row: 0, col: 1, var: None, coeff: -1.0 },
            ],
            label: "lmi".into(),
        };
        let cp = ConicProgram { num_vars: 1, objective: vec![(0, 1.0)], psd_blocks: vec![block], ..Default::default() };
        let sol = solve_conic(&cp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 3.0).abs() < 1e-7);
        // complementary dual: Z = 1/2 [[1, 1], [1, 1]] has trace 1
        let z = &sol.psd_duals[0];
        assert!((z.trace() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonnegative_rows() {
        // min y0 + y1 s.t. y0 - 1 >= 0, y1 - 2 >= 0, y0 + y1 >= 0 (psd 1x1)
        let cp = ConicProgram {
            num_vars: 2,
            objective: vec![(0, 1.0), (1, 1.0)],
            nonneg: vec![
                AffineRow { coeffs: vec![(0, 1.0)], constant: -1.0 },
                AffineRow { coeffs: vec![(1, 1.0)], constant: -2.0 },
            ],
            psd_blocks: vec![PsdBlock {
                size: 1,
                entries: vec![
                    BlockEntry { row: 0, col: 0, var: Some(0), coeff: 1.0 },
                    BlockEntry { row: 0, col: 0, var: Some(1), coeff: 1.0 },
                ],
                label: "sum".into(),
            }],
            ..Default::default()
        };
        let sol = solve_conic(&cp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective_value - 3.0).abs() < 1e-7);
        assert!((sol.nonneg_duals[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn malformed_programs_rejected() {
        let cp = ConicProgram { num_vars: 0, ..Default::default() };
        assert!(matches!(solve_conic(&cp, &SolverOptions::default()), Err(SolverError::Malformed(_))));
        let cp = ConicProgram { num_vars: 1, objective: vec![(3, 1.0)], ..Default::default() };
        assert!(cp.validate().is_err());
    }

    #[test]
    fn dump_lists_every_nonzero() {
        let cp = ConicProgram {
            num_vars: 1,
            objective: vec![(0, 1.0)],
            equalities: vec![SparseRow { coeffs: vec![(0, 1.0)], rhs: 3.0 }],
            psd_blocks: vec![scalar_block(0)],
            ..Default::default()
        };
        let mut buf = Vec::new();
        cp.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("eq 0 0 1 1e0"));
        assert!(text.contains("psd 0 0 0 1 1e0"));
    }
}
