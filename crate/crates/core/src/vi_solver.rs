//! Primal-dual active-set solution of the discrete contact problem and
//! reconstruction of the contact multiplier.
//!
//! The coupled matrix `K = [[A, -B^T], [-B, -C]]` is quasi-definite and is
//! factored once. The active-set iteration then runs on the dense contact
//! Schur complement `S = N K^{-1} N^T`, where `N` maps displacements to the
//! normal traces at the constraint points. Its iterates are those of the
//! active-set method on the full system.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::assembly::SystemBlocks;
use crate::error::{invalid, Error, Result};
use crate::mesh::{side_reference_point, Mesh};
use crate::quad_basis::{gauss_legendre, gauss_lobatto, LagrangeBasis};
use crate::space::{ContactConstraintSet, DofMap};
use crate::sparse::{SymmetricFactor, UpperCsc};

/// Where the active-set iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialActiveSet {
    /// constraints whose bound is already non-positive
    #[default]
    GapNonPositive,
    Empty,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// weight `c` in the update `lambda + c (u_n - g) > 0`
    pub c_pdas: f64,
    pub max_iterations: usize,
    /// relative KKT tolerance
    pub kkt_tol: f64,
    pub initial: InitialActiveSet,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            c_pdas: 1.0,
            max_iterations: 50,
            kkt_tol: 1e-9,
            initial: InitialActiveSet::GapNonPositive,
        }
    }
}

/// Final residuals of a solve (max norms).
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct KktResiduals {
    /// `A u - B^T p + N^T lambda - fe`
    pub momentum: f64,
    /// `-B u - C p - ff`
    pub mass: f64,
    /// `max(0, u_n - g)`
    pub feasibility: f64,
    /// `max(0, -lambda)`
    pub dual: f64,
    /// `max |lambda (g - u_n)|`
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct VISolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// multiplier per constraint row
    pub lambda: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub residuals: KktResiduals,
    /// scale the relative tolerances refer to
    pub scale: f64,
}

impl VISolution {
    pub fn active_rows(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }
}

/// Factorization of the coupled contact-free operator.
#[derive(Debug)]
pub struct CoupledFactor {
    factor: SymmetricFactor,
    n_u: usize,
    n_p: usize,
}

impl CoupledFactor {
    pub fn new(blocks: &SystemBlocks) -> Result<Self> {
        let (n_u, n_p) = (blocks.n_u(), blocks.n_p());
        let n = n_u + n_p;
        let nnz = blocks.a.nnz() / 2 + blocks.b.nnz() + blocks.c.nnz() / 2 + n;
        let mut k = UpperCsc::with_capacity(n, nnz);
        for j in 0..n_u {
            let (cols, vals) = blocks.a.row(j);
            for (&i, &v) in cols.iter().zip(vals) {
                if i <= j {
                    k.push(i, v);
                }
            }
            k.finish_column();
        }
        for q in 0..n_p {
            let (cols, vals) = blocks.b.row(q);
            for (&i, &v) in cols.iter().zip(vals) {
                k.push(i, -v);
            }
            let (cols, vals) = blocks.c.row(q);
            for (&i, &v) in cols.iter().zip(vals) {
                if i <= q {
                    k.push(n_u + i, -v);
                }
            }
            k.finish_column();
        }
        Ok(Self {
            factor: SymmetricFactor::new(&k)?,
            n_u,
            n_p,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve(rhs)
    }

    pub fn solve_many_in_place(&self, rhs: &mut [f64], ncols: usize) {
        self.factor.solve_many_in_place(rhs, ncols)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_u, self.n_p)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `(A u - B^T p - fe, -B u - C p - ff)`.
pub fn block_residual(blocks: &SystemBlocks, u: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let au = blocks.a.matvec(u);
    let btp = blocks.b.transpose_matvec(p);
    let r1 = (0..u.len()).map(|i| au[i] - btp[i] - blocks.fe[i]).collect();
    let bu = blocks.b.matvec(u);
    let cp = blocks.c.matvec(p);
    let r2 = (0..p.len()).map(|i| -bu[i] - cp[i] - blocks.ff[i]).collect();
    (r1, r2)
}

fn rhs_of(blocks: &SystemBlocks) -> Vec<f64> {
    let mut rhs = blocks.fe.clone();
    rhs.extend_from_slice(&blocks.ff);
    rhs
}

/// Contact-free solve of `[A, -B^T; -B, -C] (u, p) = (fe, ff)`.
pub fn solve_linear(blocks: &SystemBlocks) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = CoupledFactor::new(blocks)?;
    let rhs = rhs_of(blocks);
    let mut z = k.solve(&rhs);
    let p = z.split_off(blocks.n_u());
    let (r1, r2) = block_residual(blocks, &z, &p);
    let res = max_abs(&r1).max(max_abs(&r2));
    let bound = 1e-10 * (1.0 + max_abs(&rhs));
    if !(res <= bound) {
        return Err(Error::Solver(format!(
            "block residual {res:e} exceeds {bound:e}"
        )));
    }
    Ok((z, p))
}

fn dense_cholesky_solve(s: &[f64], n: usize, idx: &[usize], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = idx.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mat = Mat::<f64>::from_fn(m, m, |i, j| s[idx[i] * n + idx[j]]);
    let llt = mat
        .llt(Side::Lower)
        .map_err(|e| Error::Solver(format!("contact Schur complement is not definite: {e:?}")))?;
    let mut x = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
    llt.solve_in_place(x.as_mut());
    Ok((0..m).map(|i| x[(i, 0)]).collect())
}

/// Solves the discrete variational inequality by the primal-dual active-set method.
pub fn solve_vi(
    blocks: &SystemBlocks,
    constraints: &ContactConstraintSet,
    opts: &SolverOptions,
) -> Result<VISolution> {
    let k = CoupledFactor::new(blocks)?;
    solve_vi_with(&k, blocks, constraints, opts)
}

/// As [`solve_vi`] with a precomputed factorization.
pub fn solve_vi_with(
    k: &CoupledFactor,
    blocks: &SystemBlocks,
    constraints: &ContactConstraintSet,
    opts: &SolverOptions,
) -> Result<VISolution> {
    let (n_u, n_p) = (blocks.n_u(), blocks.n_p());
    if k.dims() != (n_u, n_p) {
        return Err(invalid("factorization does not match the system"));
    }
    if !(opts.c_pdas > 0.0) || opts.max_iterations == 0 {
        return Err(invalid("c_pdas must be positive and max_iterations nonzero"));
    }
    let rows = &constraints.rows;
    for r in rows {
        if r.terms.iter().any(|&(i, _)| i >= n_u) {
            return Err(invalid("constraint references an unknown outside the system"));
        }
    }
    let nc = rows.len();
    let n = n_u + n_p;
    let rhs = rhs_of(blocks);
    let z0 = k.solve(&rhs);
    let trace = |z: &[f64]| -> Vec<f64> { rows.iter().map(|r| r.normal_displacement(z)).collect() };
    let d0 = trace(&z0);
    let g: Vec<f64> = rows.iter().map(|r| r.gap).collect();

    // dense S = N K^{-1} N^T, built in column blocks
    let mut s = vec![0.0; nc * nc];
    const BLOCK: usize = 16;
    let mut buf = Vec::new();
    for start in (0..nc).step_by(BLOCK) {
        let m = BLOCK.min(nc - start);
        buf.clear();
        buf.resize(n * m, 0.0);
        for c in 0..m {
            for &(i, w) in &rows[start + c].terms {
                buf[c * n + i] += w;
            }
        }
        k.solve_many_in_place(&mut buf, m);
        for c in 0..m {
            let col = &buf[c * n..(c + 1) * n];
            for (i, r) in rows.iter().enumerate() {
                s[i * nc + start + c] = r.normal_displacement(col);
            }
        }
    }
    for i in 0..nc {
        for j in 0..i {
            let v = 0.5 * (s[i * nc + j] + s[j * nc + i]);
            s[i * nc + j] = v;
            s[j * nc + i] = v;
        }
    }

    let mut active: Vec<bool> = match opts.initial {
        InitialActiveSet::GapNonPositive => g.iter().map(|&x| x <= 0.0).collect(),
        InitialActiveSet::Empty => vec![false; nc],
        InitialActiveSet::All => vec![true; nc],
    };
    let mut history: Vec<Vec<bool>> = vec![active.clone()];
    let mut lambda = vec![0.0; nc];
    let mut un = d0.clone();
    let mut iterations = 0;
    loop {
        if nc == 0 {
            break;
        }
        iterations += 1;
        let idx: Vec<usize> = (0..nc).filter(|&i| active[i]).collect();
        let r: Vec<f64> = idx.iter().map(|&i| d0[i] - g[i]).collect();
        let la = dense_cholesky_solve(&s, nc, &idx, &r)?;
        lambda.iter_mut().for_each(|x| *x = 0.0);
        for (&i, &v) in idx.iter().zip(&la) {
            lambda[i] = v;
        }
        for i in 0..nc {
            let mut v = d0[i];
            for (&j, &l) in idx.iter().zip(&la) {
                v -= s[i * nc + j] * l;
            }
            un[i] = v;
        }
        let next: Vec<bool> = (0..nc)
            .map(|i| lambda[i] + opts.c_pdas * (un[i] - g[i]) > 0.0)
            .collect();
        if next == active {
            break;
        }
        if let Some(pos) = history.iter().position(|h| *h == next) {
            return Err(Error::Cycling {
                iteration: iterations,
                period: history.len() - pos,
            });
        }
        if iterations >= opts.max_iterations {
            let residual = (0..nc)
                .map(|i| (un[i] - g[i]).max(0.0).max(-lambda[i]))
                .fold(0.0, f64::max);
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        history.push(next.clone());
        active = next;
    }

    // final primal solve with the converged multiplier
    let mut rhs_l = rhs.clone();
    for (r, &l) in rows.iter().zip(&lambda) {
        if l != 0.0 {
            for &(i, w) in &r.terms {
                rhs_l[i] -= w * l;
            }
        }
    }
    let mut u = k.solve(&rhs_l);
    let p = u.split_off(n_u);
    let residuals = kkt_residuals(blocks, constraints, &u, &p, &lambda);
    let scale = 1.0 + max_abs(&rhs).max(max_abs(&g)).max(max_abs(&lambda));
    let worst = residuals
        .momentum
        .max(residuals.mass)
        .max(residuals.feasibility)
        .max(residuals.dual)
        .max(residuals.complementarity);
    if !(worst <= opts.kkt_tol * scale) {
        return Err(Error::NoConvergence {
            iterations,
            residual: worst,
        });
    }
    Ok(VISolution {
        u,
        p,
        lambda,
        active,
        iterations,
        residuals,
        scale,
    })
}

/// KKT residuals of a candidate `(u, p, lambda)`.
pub fn kkt_residuals(
    blocks: &SystemBlocks,
    constraints: &ContactConstraintSet,
    u: &[f64],
    p: &[f64],
    lambda: &[f64],
) -> KktResiduals {
    let (mut r1, r2) = block_residual(blocks, u, p);
    let mut out = KktResiduals::default();
    for (row, &l) in constraints.rows.iter().zip(lambda) {
        for &(i, w) in &row.terms {
            r1[i] += w * l;
        }
        let gap = row.gap - row.normal_displacement(u);
        out.feasibility = out.feasibility.max(-gap);
        out.dual = out.dual.max(-l);
        out.complementarity = out.complementarity.max((l * gap).abs());
    }
    out.momentum = max_abs(&r1);
    out.mass = max_abs(&r2);
    out
}

/// How `<lambda, v . n>` on the contact boundary is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPairing {
    /// `(r_e + 1)`-point Gauss–Lobatto rule on each contact edge (the
    /// constraint points), which makes the boundary mass diagonal
    #[default]
    Lobatto,
    /// exact integration
    Exact,
}

/// Discrete multiplier `lambda_hr` in the normal-trace space on the contact
/// boundary, stored by its values at the constraint points.
#[derive(Debug, Clone)]
pub struct ContactMultiplier {
    pub values: Vec<f64>,
}

impl ContactMultiplier {
    /// `lambda_hr` on contact edge `edge` at side parameter `t`.
    pub fn eval(&self, constraints: &ContactConstraintSet, edge: usize, t: f64) -> f64 {
        let rows = &constraints.edges[edge].rows;
        let basis = LagrangeBasis::<f64>::new(rows.len() - 1).expect("edge degree");
        let coeffs: Vec<f64> = rows.iter().map(|&r| self.values[r]).collect();
        basis.interpolate(&coeffs, t)
    }
}

/// Solves `<lambda_hr, v . n> = -a(u, v) + b(v, p) + <fe, v>` for all
/// discrete `v` whose normal trace on the contact boundary does not vanish.
pub fn reconstruct_lambda(
    solution: &VISolution,
    blocks: &SystemBlocks,
    mesh: &Mesh,
    dofs: &DofMap,
    constraints: &ContactConstraintSet,
    pairing: BoundaryPairing,
) -> Result<ContactMultiplier> {
    let nr = constraints.rows.len();
    if nr == 0 {
        return Ok(ContactMultiplier { values: Vec::new() });
    }
    let (r1, _) = block_residual(blocks, &solution.u, &solution.p);
    // test unknowns: everything with a nonzero normal trace on the contact boundary
    let mut tests: Vec<usize> = constraints
        .rows
        .iter()
        .flat_map(|r| r.terms.iter().map(|t| t.0))
        .collect();
    tests.sort_unstable();
    tests.dedup();
    let slot = |i: usize| tests.binary_search(&i).ok();
    let nt = tests.len();
    let nd = dofs.displacement.n_free();
    let mut m = vec![0.0; nt * nr];
    for edge in &constraints.edges {
        let pos = dofs
            .position(edge.cell)
            .ok_or_else(|| invalid("contact edge on an inactive cell"))?;
        let p = dofs.displacement.degree(pos);
        let rule = match pairing {
            BoundaryPairing::Lobatto => gauss_lobatto::<f64>(p + 1)?,
            BoundaryPairing::Exact => gauss_legendre::<f64>(p + 1)?,
        };
        let basis = LagrangeBasis::<f64>::new(p)?;
        let normal = mesh.side_normal(edge.cell, edge.side);
        let half = 0.5 * mesh.side_length(edge.cell, edge.side);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let (xi, eta) = side_reference_point(edge.side, t);
            let bx = basis.tabulate(xi);
            let by = basis.tabulate(eta);
            let trace = basis.tabulate(t);
            for jj in 0..=p {
                for ii in 0..=p {
                    let phi = bx[0][ii] * by[0][jj];
                    if phi == 0.0 {
                        continue;
                    }
                    let l = jj * (p + 1) + ii;
                    for &(f, c) in dofs.displacement.node_terms(pos, l) {
                        for (comp, &nc) in normal.iter().enumerate() {
                            if nc == 0.0 {
                                continue;
                            }
                            let Some(ti) = slot(comp * nd + f) else { continue };
                            for (k, &row) in edge.rows.iter().enumerate() {
                                m[ti * nr + row] += w * half * c * nc * phi * trace[0][k];
                            }
                        }
                    }
                }
            }
        }
    }
    let rhs: Vec<f64> = tests.iter().map(|&i| -r1[i]).collect();
    // least squares through the normal equations (square and regular for
    // axis-aligned contact boundaries)
    let mtm = Mat::<f64>::from_fn(nr, nr, |a, b| (0..nt).map(|i| m[i * nr + a] * m[i * nr + b]).sum());
    let llt = mtm
        .llt(Side::Lower)
        .map_err(|_| Error::Geometry("singular contact boundary mass matrix".into()))?;
    let mut x = Mat::<f64>::from_fn(nr, 1, |a, _| (0..nt).map(|i| m[i * nr + a] * rhs[i]).sum());
    llt.solve_in_place(x.as_mut());
    Ok(ContactMultiplier {
        values: (0..nr).map(|a| x[(a, 0)]).collect(),
    })
}
