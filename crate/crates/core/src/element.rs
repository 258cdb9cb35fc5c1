//! Shape functions of one cell mapped to physical coordinates.

use crate::error::{Error, Result};
use crate::mesh::{ElemId, Mesh, Point};
use crate::quad_basis::{LagrangeBasis, QuadratureRule};

/// Tensor-product values at one reference point. Local index `j * (p + 1) + i`.
#[derive(Debug, Clone, Default)]
pub struct PointValues {
    pub x: Point,
    /// `det J`
    pub det: f64,
    pub phi: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// `(xx, xy, yy)`; empty unless requested
    pub hess: Vec<[f64; 3]>,
}

/// One-dimensional tabulation `[values, first, second derivatives]`.
pub type Tab1d = [Vec<f64>; 3];

/// Evaluates the degree-`p` tensor basis of cell `e` at `(xi, eta)`, where
/// `bx` and `by` are the 1D tabulations at `xi` and `eta`.
pub fn eval_point(
    mesh: &Mesh,
    e: ElemId,
    bx: &Tab1d,
    by: &Tab1d,
    xi: f64,
    eta: f64,
    with_hess: bool,
    out: &mut PointValues,
) -> Result<()> {
    let n1 = bx[0].len();
    let j = mesh.jacobian(e, xi, eta);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det > 0.0) {
        return Err(Error::Geometry(format!(
            "non-positive Jacobian {det:e} in cell {e}"
        )));
    }
    // rows: d(xi, eta)/dx, d(xi, eta)/dy
    let inv = [
        [j[1][1] / det, -j[0][1] / det],
        [-j[1][0] / det, j[0][0] / det],
    ];
    out.x = mesh.map(e, xi, eta);
    out.det = det;
    let n = n1 * n1;
    out.phi.resize(n, 0.0);
    out.grad.resize(n, [0.0; 2]);
    if with_hess {
        out.hess.resize(n, [0.0; 3]);
    } else {
        out.hess.clear();
    }
    let twist = mesh.map_twist(e);
    for jj in 0..n1 {
        for ii in 0..n1 {
            let l = jj * n1 + ii;
            let v = bx[0][ii] * by[0][jj];
            let gx = bx[1][ii] * by[0][jj];
            let ge = bx[0][ii] * by[1][jj];
            out.phi[l] = v;
            let g = [inv[0][0] * gx + inv[1][0] * ge, inv[0][1] * gx + inv[1][1] * ge];
            out.grad[l] = g;
            if with_hess {
                let hxx = bx[2][ii] * by[0][jj];
                let hxe = bx[1][ii] * by[1][jj] - (g[0] * twist[0] + g[1] * twist[1]);
                let hee = bx[0][ii] * by[2][jj];
                // H_x = J^{-T} H_ref J^{-1}
                let h = |a: usize, b: usize| {
                    inv[0][a] * (hxx * inv[0][b] + hxe * inv[1][b])
                        + inv[1][a] * (hxe * inv[0][b] + hee * inv[1][b])
                };
                out.hess[l] = [h(0, 0), h(0, 1), h(1, 1)];
            }
        }
    }
    Ok(())
}

/// Basis values of one cell at all points of a tensor quadrature rule.
/// Point index `qj * n + qi`.
#[derive(Debug, Clone)]
pub struct ElementValues {
    pub points: Vec<PointValues>,
    pub jxw: Vec<f64>,
}

/// 1D tabulations of `basis` at every point of `rule`.
pub fn tabulate_rule(basis: &LagrangeBasis<f64>, rule: &QuadratureRule<f64>) -> Vec<Tab1d> {
    rule.points.iter().map(|&x| basis.tabulate(x)).collect()
}

pub fn element_values(
    mesh: &Mesh,
    e: ElemId,
    tab: &[Tab1d],
    rule: &QuadratureRule<f64>,
    with_hess: bool,
) -> Result<ElementValues> {
    let n = rule.len();
    let mut points = Vec::with_capacity(n * n);
    let mut jxw = Vec::with_capacity(n * n);
    for qj in 0..n {
        for qi in 0..n {
            let mut pv = PointValues::default();
            eval_point(
                mesh,
                e,
                &tab[qi],
                &tab[qj],
                rule.points[qi],
                rule.points[qj],
                with_hess,
                &mut pv,
            )?;
            jxw.push(pv.det * rule.weights[qi] * rule.weights[qj]);
            points.push(pv);
        }
    }
    Ok(ElementValues { points, jxw })
}

/// Value, gradient and (optionally) Hessian of a local nodal expansion.
pub fn combine(pv: &PointValues, coeffs: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
    let mut v = 0.0;
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for (l, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        v += c * pv.phi[l];
        g[0] += c * pv.grad[l][0];
        g[1] += c * pv.grad[l][1];
        if let Some(hl) = pv.hess.get(l) {
            h[0] += c * hl[0];
            h[1] += c * hl[1];
            h[2] += c * hl[2];
        }
    }
    (v, g, h)
}

/// Convenience evaluation at one reference point with a fresh tabulation.
pub fn eval_at(
    mesh: &Mesh,
    e: ElemId,
    basis: &LagrangeBasis<f64>,
    xi: f64,
    eta: f64,
    with_hess: bool,
) -> Result<PointValues> {
    let bx = basis.tabulate(xi);
    let by = basis.tabulate(eta);
    let mut pv = PointValues::default();
    eval_point(mesh, e, &bx, &by, xi, eta, with_hess, &mut pv)?;
    Ok(pv)
}

/// Displacement and pressure of a discrete solution at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldValues {
    pub x: Point,
    pub u: [f64; 2],
    /// `grad_u[c] = grad of component c`
    pub grad_u: [[f64; 2]; 2],
    /// `(xx, xy, yy)` per component
    pub hess_u: [[f64; 3]; 2],
    pub p: f64,
    pub grad_p: [f64; 2],
    pub hess_p: [f64; 3],
}

impl FieldValues {
    pub fn div_u(&self) -> f64 {
        self.grad_u[0][0] + self.grad_u[1][1]
    }

    /// Effective stress `theta(u) = 2 tau eps(u) + iota div(u) I`.
    pub fn theta(&self, tau: f64, iota: f64) -> [[f64; 2]; 2] {
        let g = self.grad_u;
        let d = iota * self.div_u();
        let off = tau * (g[0][1] + g[1][0]);
        [[2.0 * tau * g[0][0] + d, off], [off, 2.0 * tau * g[1][1] + d]]
    }

    /// `div theta(u)_i = tau lap u_i + (tau + iota) d_i div u`.
    pub fn div_theta(&self, tau: f64, iota: f64) -> [f64; 2] {
        let h = self.hess_u;
        // d_x div u = u0_xx + u1_xy, d_y div u = u0_xy + u1_yy
        let ddiv = [h[0][0] + h[1][1], h[0][1] + h[1][2]];
        [
            tau * (h[0][0] + h[0][2]) + (tau + iota) * ddiv[0],
            tau * (h[1][0] + h[1][2]) + (tau + iota) * ddiv[1],
        ]
    }
}

/// Local nodal coefficients of `(u_x, u_y, p)` on every active cell, with
/// evaluation at arbitrary reference points.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    coeffs: Vec<[Vec<f64>; 3]>,
    degrees: Vec<(usize, usize)>,
    bases: Vec<Option<LagrangeBasis<f64>>>,
    position: Vec<usize>,
}

impl LocalSolution {
    pub fn new(dofs: &crate::space::DofMap, u: &[f64], p: &[f64]) -> Result<Self> {
        let n = dofs.active().len();
        let mut coeffs = Vec::with_capacity(n);
        let mut degrees = Vec::with_capacity(n);
        let mut bases: Vec<Option<LagrangeBasis<f64>>> = Vec::new();
        for pos in 0..n {
            let r = dofs.displacement.degree(pos);
            let s = dofs.pressure.degree(pos);
            for d in [r, s] {
                if bases.len() <= d {
                    bases.resize(d + 1, None);
                }
                if bases[d].is_none() {
                    bases[d] = Some(LagrangeBasis::new(d)?);
                }
            }
            coeffs.push([
                dofs.displacement_coeffs(pos, 0, u),
                dofs.displacement_coeffs(pos, 1, u),
                dofs.pressure.local_coeffs(pos, p),
            ]);
            degrees.push((r, s));
        }
        let len = dofs.active().iter().max().map_or(0, |&e| e + 1);
        let mut position = vec![usize::MAX; len];
        for (pos, &e) in dofs.active().iter().enumerate() {
            position[e] = pos;
        }
        Ok(Self {
            coeffs,
            degrees,
            bases,
            position,
        })
    }

    /// Active position of cell `e`.
    pub fn position(&self, e: ElemId) -> Option<usize> {
        self.position.get(e).copied().filter(|&p| p != usize::MAX)
    }

    pub fn num_cells(&self) -> usize {
        self.coeffs.len()
    }

    /// `(r, s)` on the cell at `pos`.
    pub fn degrees(&self, pos: usize) -> (usize, usize) {
        self.degrees[pos]
    }

    /// Nodal coefficients `[u_x, u_y, p]` on the cell at `pos`.
    pub fn coeffs(&self, pos: usize) -> &[Vec<f64>; 3] {
        &self.coeffs[pos]
    }

    pub fn basis(&self, degree: usize) -> &LagrangeBasis<f64> {
        self.bases[degree].as_ref().expect("basis of a used degree")
    }

    pub fn eval(
        &self,
        mesh: &Mesh,
        e: ElemId,
        pos: usize,
        xi: f64,
        eta: f64,
        with_hess: bool,
    ) -> Result<FieldValues> {
        let (r, s) = self.degrees[pos];
        let c = &self.coeffs[pos];
        let pu = eval_at(mesh, e, self.basis(r), xi, eta, with_hess)?;
        let (ux, gx, hx) = combine(&pu, &c[0]);
        let (uy, gy, hy) = combine(&pu, &c[1]);
        let pp = if s == r {
            pu
        } else {
            eval_at(mesh, e, self.basis(s), xi, eta, with_hess)?
        };
        let (p, gp, hp) = combine(&pp, &c[2]);
        Ok(FieldValues {
            x: pp.x,
            u: [ux, uy],
            grad_u: [gx, gy],
            hess_u: [hx, hy],
            p,
            grad_p: gp,
            hess_p: hp,
        })
    }
}
