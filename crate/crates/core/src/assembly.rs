//! Sparse matrices and load vectors of the forms `a`, `b`, `c` on the free unknowns.

use crate::element::{element_values, tabulate_rule, ElementValues, Tab1d};
use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quad_basis::{gauss_legendre, LagrangeBasis, QuadratureRule};
use crate::space::{DofMap, ScalarSpace, Term};
use crate::sparse::{dot, CsrMatrix, SymmetricFactor, UpperCsc};
use std::collections::hash_map::Entry;
use std::collections::HashMap;

/// Physical coefficients of the Biot model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaterialParams {
    /// second Lamé parameter
    pub tau: f64,
    /// first Lamé parameter
    pub iota: f64,
    /// Biot–Willis constant
    pub alpha: f64,
    /// permeability (symmetric positive definite)
    pub kappa: [[f64; 2]; 2],
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            tau: 1.0,
            iota: 1.0,
            alpha: 1.0,
            kappa: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let k = self.kappa;
        let tr = k[0][0] + k[1][1];
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        if !(self.tau > 0.0 && self.iota > 0.0 && self.alpha > 0.0) {
            return Err(invalid("tau, iota and alpha must be positive"));
        }
        if k[0][1] != k[1][0] || !(tr > 0.0 && det > 0.0) {
            return Err(invalid("kappa must be symmetric positive definite"));
        }
        Ok(())
    }

    /// Largest eigenvalue of `kappa`.
    pub fn kappa_max_eigenvalue(&self) -> f64 {
        let k = self.kappa;
        let m = 0.5 * (k[0][0] + k[1][1]);
        let d = (0.25 * (k[0][0] - k[1][1]).powi(2) + k[0][1] * k[1][0]).sqrt();
        m + d
    }
}

/// Assembled system. `B` has pressure rows and displacement columns, so the
/// contact-free equations read `A u - B^T p = fe`, `-B u - C p = ff`.
#[derive(Debug, Clone)]
pub struct SystemBlocks {
    pub a: CsrMatrix<f64>,
    pub b: CsrMatrix<f64>,
    pub c: CsrMatrix<f64>,
    pub fe: Vec<f64>,
    pub ff: Vec<f64>,
    /// `H^1` Gram matrices of the displacement and pressure spaces
    pub gram: Option<(CsrMatrix<f64>, CsrMatrix<f64>)>,
    pub material: MaterialParams,
}

impl SystemBlocks {
    pub fn n_u(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.c.nrows()
    }
}

/// Which of the two unknown spaces a dual norm refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Displacement,
    Pressure,
}

/// Free-unknown lists of every active cell plus the inverse incidence.
struct Incidence {
    cell_unknowns: Vec<Vec<usize>>,
    unknown_cells: Vec<Vec<u32>>,
}

impl Incidence {
    fn new(space: &ScalarSpace, n_cells: usize) -> Self {
        let cell_unknowns: Vec<Vec<usize>> = (0..n_cells).map(|p| space.cell_unknowns(p)).collect();
        let mut unknown_cells = vec![Vec::new(); space.n_free()];
        for (p, us) in cell_unknowns.iter().enumerate() {
            for &u in us {
                unknown_cells[u].push(p as u32);
            }
        }
        Self {
            cell_unknowns,
            unknown_cells,
        }
    }

    /// Sorted columns coupled to unknown `i` through some cell of `cols`.
    fn row_pattern(&self, i: usize, cols: &Incidence, buf: &mut Vec<usize>) {
        buf.clear();
        for &p in &self.unknown_cells[i] {
            buf.extend_from_slice(&cols.cell_unknowns[p as usize]);
        }
        buf.sort_unstable();
        buf.dedup();
    }
}

/// Pattern of a matrix over stacked components: `rc` row and `cc` column copies.
fn stacked_pattern(
    rows: &Incidence,
    cols: &Incidence,
    n_row: usize,
    n_col: usize,
    rc: usize,
    cc: usize,
) -> CsrMatrix<f64> {
    let mut buf = Vec::new();
    let mut base: Vec<Vec<usize>> = Vec::with_capacity(n_row);
    for i in 0..n_row {
        rows.row_pattern(i, cols, &mut buf);
        base.push(buf.clone());
    }
    let mut pattern = Vec::with_capacity(rc * n_row);
    for _ in 0..rc {
        for b in &base {
            let mut r = Vec::with_capacity(cc * b.len());
            for c in 0..cc {
                r.extend(b.iter().map(|&j| c * n_col + j));
            }
            pattern.push(r);
        }
    }
    CsrMatrix::from_pattern(cc * n_col, pattern)
}

/// Scatters a local matrix `K[a][b]` (local node space) through the node
/// constraint terms. With `upper_only`, only global entries `i <= j` are written.
#[allow(clippy::too_many_arguments)]
fn scatter<'a>(
    target: &mut CsrMatrix<f64>,
    local: &[f64],
    n_rows: usize,
    n_cols: usize,
    row_terms: &dyn Fn(usize) -> (usize, &'a [Term]),
    col_terms: &dyn Fn(usize) -> (usize, &'a [Term]),
    upper_only: bool,
) {
    for a in 0..n_rows {
        let (ro, rt) = row_terms(a);
        for b in 0..n_cols {
            let v = local[a * n_cols + b];
            if v == 0.0 {
                continue;
            }
            let (co, ct) = col_terms(b);
            for &(i, wi) in rt {
                let gi = ro + i;
                for &(j, wj) in ct {
                    let gj = co + j;
                    if !upper_only || gi <= gj {
                        target.add(gi, gj, wi * wj * v);
                    }
                }
            }
        }
    }
}

fn scatter_vector<'a>(target: &mut [f64], local: &[f64], terms: &dyn Fn(usize) -> (usize, &'a [Term])) {
    for (a, &v) in local.iter().enumerate() {
        let (o, t) = terms(a);
        for &(i, w) in t {
            target[o + i] += w * v;
        }
    }
}

/// Caches 1D tabulations by (degree, number of Gauss points).
#[derive(Default)]
pub(crate) struct TabCache {
    rules: HashMap<usize, QuadratureRule<f64>>,
    bases: HashMap<usize, LagrangeBasis<f64>>,
    tabs: HashMap<(usize, usize), Vec<Tab1d>>,
}

impl TabCache {
    pub(crate) fn rule(&mut self, n: usize) -> Result<&QuadratureRule<f64>> {
        if let Entry::Vacant(v) = self.rules.entry(n) {
            v.insert(gauss_legendre(n)?);
        }
        Ok(&self.rules[&n])
    }

    pub(crate) fn basis(&mut self, p: usize) -> Result<&LagrangeBasis<f64>> {
        if let Entry::Vacant(v) = self.bases.entry(p) {
            v.insert(LagrangeBasis::new(p)?);
        }
        Ok(&self.bases[&p])
    }

    pub(crate) fn tab(&mut self, p: usize, n: usize) -> Result<&[Tab1d]> {
        if !self.tabs.contains_key(&(p, n)) {
            let rule = self.rule(n)?.clone();
            let basis = self.basis(p)?.clone();
            self.tabs.insert((p, n), tabulate_rule(&basis, &rule));
        }
        Ok(&self.tabs[&(p, n)])
    }
}

/// Assembles `A`, `B`, `C`, `fe`, `ff` with `max(r, s) + 1` Gauss–Legendre
/// points per direction on each cell. Constraints are applied by congruence.
pub fn assemble(
    mesh: &Mesh,
    dofs: &DofMap,
    mat: &MaterialParams,
    fe_fun: &dyn Fn(Point) -> [f64; 2],
    ff_fun: &dyn Fn(Point) -> f64,
    with_gram: bool,
) -> Result<SystemBlocks> {
    mat.validate()?;
    let active = dofs.active();
    let nc = active.len();
    let us = &dofs.displacement;
    let ps = &dofs.pressure;
    let n = us.n_free();
    let np = ps.n_free();
    let inc_u = Incidence::new(us, nc);
    let inc_p = Incidence::new(ps, nc);
    let mut a = stacked_pattern(&inc_u, &inc_u, n, n, 2, 2);
    let mut b = stacked_pattern(&inc_p, &inc_u, np, n, 1, 2);
    let mut c = stacked_pattern(&inc_p, &inc_p, np, np, 1, 1);
    drop(inc_u);
    drop(inc_p);
    let mut gram = with_gram.then(|| (a.clone(), c.clone()));
    let mut fe = vec![0.0; 2 * n];
    let mut ff = vec![0.0; np];
    let mut cache = TabCache::default();
    let (tau, iota, alpha, k) = (mat.tau, mat.iota, mat.alpha, mat.kappa);
    let m_coef = alpha * alpha / iota;

    for (pos, &e) in active.iter().enumerate() {
        let r = us.degree(pos);
        let s = ps.degree(pos);
        let nq = r.max(s) + 1;
        let rule = cache.rule(nq)?.clone();
        let tu = cache.tab(r, nq)?.to_vec();
        let ev_u: ElementValues = element_values(mesh, e, &tu, &rule, false)?;
        let ev_p: ElementValues = if s == r {
            ev_u.clone()
        } else {
            let tp = cache.tab(s, nq)?.to_vec();
            element_values(mesh, e, &tp, &rule, false)?
        };
        let nu = (r + 1) * (r + 1);
        let npl = (s + 1) * (s + 1);
        // local displacement index: comp * nu + a
        let mut ka = vec![0.0; 4 * nu * nu];
        let mut kb = vec![0.0; npl * 2 * nu];
        let mut kc = vec![0.0; npl * npl];
        let mut gu = if with_gram { vec![0.0; nu * nu] } else { Vec::new() };
        let mut gp = if with_gram { vec![0.0; npl * npl] } else { Vec::new() };
        let mut lfe = vec![0.0; 2 * nu];
        let mut lff = vec![0.0; npl];
        for q in 0..ev_u.jxw.len() {
            let w = ev_u.jxw[q];
            let pu = &ev_u.points[q];
            let pp = &ev_p.points[q];
            let f = fe_fun(pu.x);
            let g = ff_fun(pu.x);
            for ai in 0..nu {
                let ga = pu.grad[ai];
                lfe[ai] += w * f[0] * pu.phi[ai];
                lfe[nu + ai] += w * f[1] * pu.phi[ai];
                for bi in 0..nu {
                    let gb = pu.grad[bi];
                    let gg = ga[0] * gb[0] + ga[1] * gb[1];
                    for cc in 0..2 {
                        for dd in 0..2 {
                            // test (a, cc), trial (b, dd)
                            let mut v = tau * ga[dd] * gb[cc] + iota * ga[cc] * gb[dd];
                            if cc == dd {
                                v += tau * gg;
                            }
                            ka[(cc * nu + ai) * 2 * nu + dd * nu + bi] += w * v;
                        }
                    }
                    if with_gram {
                        gu[ai * nu + bi] += w * (gg + pu.phi[ai] * pu.phi[bi]);
                    }
                }
            }
            for qi in 0..npl {
                let psi = pp.phi[qi];
                let gq = pp.grad[qi];
                lff[qi] += w * g * psi;
                for bi in 0..nu {
                    for dd in 0..2 {
                        kb[qi * 2 * nu + dd * nu + bi] += w * alpha * pu.grad[bi][dd] * psi;
                    }
                }
                let kgq = [k[0][0] * gq[0] + k[0][1] * gq[1], k[1][0] * gq[0] + k[1][1] * gq[1]];
                for pj in 0..npl {
                    let gpj = pp.grad[pj];
                    kc[qi * npl + pj] +=
                        w * (m_coef * psi * pp.phi[pj] + kgq[0] * gpj[0] + kgq[1] * gpj[1]);
                    if with_gram {
                        gp[qi * npl + pj] +=
                            w * (psi * pp.phi[pj] + gq[0] * gpj[0] + gq[1] * gpj[1]);
                    }
                }
            }
        }
        let u_terms = |l: usize| -> (usize, &[Term]) {
            let comp = l / nu;
            (comp * n, us.node_terms(pos, l % nu))
        };
        let p_terms = |l: usize| -> (usize, &[Term]) { (0, ps.node_terms(pos, l)) };
        scatter(&mut a, &ka, 2 * nu, 2 * nu, &u_terms, &u_terms, true);
        scatter(&mut b, &kb, npl, 2 * nu, &p_terms, &u_terms, false);
        scatter(&mut c, &kc, npl, npl, &p_terms, &p_terms, true);
        scatter_vector(&mut fe, &lfe, &u_terms);
        scatter_vector(&mut ff, &lff, &p_terms);
        if let Some((ga, gc)) = gram.as_mut() {
            let mut gu2 = vec![0.0; 4 * nu * nu];
            for ai in 0..nu {
                for bi in 0..nu {
                    gu2[ai * 2 * nu + bi] = gu[ai * nu + bi];
                    gu2[(nu + ai) * 2 * nu + nu + bi] = gu[ai * nu + bi];
                }
            }
            scatter(ga, &gu2, 2 * nu, 2 * nu, &u_terms, &u_terms, true);
            scatter(gc, &gp, npl, npl, &p_terms, &p_terms, true);
        }
    }
    a.mirror_upper();
    c.mirror_upper();
    if let Some((ga, gc)) = gram.as_mut() {
        ga.mirror_upper();
        gc.mirror_upper();
    }
    if fe.iter().chain(&ff).any(|v| !v.is_finite()) {
        return Err(invalid("load functions produced non-finite values"));
    }
    Ok(SystemBlocks {
        a,
        b,
        c,
        fe,
        ff,
        gram,
        material: *mat,
    })
}

fn checked_sqrt(q: f64) -> Result<f64> {
    if q < -1e-12 {
        return Err(Error::AssemblyCorruption { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

/// `(sqrt(u^T A u), sqrt(p^T C p))`.
pub fn energy_norms(blocks: &SystemBlocks, u: &[f64], p: &[f64]) -> Result<(f64, f64)> {
    if u.len() != blocks.n_u() || p.len() != blocks.n_p() {
        return Err(invalid("vector length does not match the system"));
    }
    Ok((
        checked_sqrt(blocks.a.quadratic_form(u))?,
        checked_sqrt(blocks.c.quadratic_form(p))?,
    ))
}

/// Factorization of `A` or `C` for repeated dual-norm evaluations.
#[derive(Debug)]
pub struct DualNorm {
    factor: SymmetricFactor,
}

impl DualNorm {
    pub fn new(blocks: &SystemBlocks, which: Field) -> Result<Self> {
        let m = match which {
            Field::Displacement => &blocks.a,
            Field::Pressure => &blocks.c,
        };
        Ok(Self {
            factor: SymmetricFactor::new(&UpperCsc::from_symmetric(m))?,
        })
    }

    /// `sqrt(f^T M^{-1} f)`.
    pub fn eval(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.factor.dim() {
            return Err(invalid("vector length does not match the system"));
        }
        let x = self.factor.solve(f);
        checked_sqrt(dot(f, &x))
    }
}

/// Discrete dual norm `sqrt(f^T A^{-1} f)` or `sqrt(f^T C^{-1} f)`.
pub fn dual_norm(blocks: &SystemBlocks, which: Field, f: &[f64]) -> Result<f64> {
    DualNorm::new(blocks, which)?.eval(f)
}
