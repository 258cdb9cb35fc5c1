//! Residual a posteriori error indicators for the contact problem.

use crate::assembly::MaterialParams;
use crate::element::{FieldValues, LocalSolution};
use crate::error::{invalid, Error, Result};
use crate::mesh::{side_reference_point, DisplacementTag, ElemId, Mesh, Point, PressureTag, SideKind};
use crate::quad_basis::{gauss_legendre, QuadratureRule};
use crate::space::{ContactConstraintSet, DofMap};
use crate::vi_solver::ContactMultiplier;

/// Constant of the cut-off functions.
pub const CUTOFF: f64 = 45.0 / 469.0;
/// Weight of the complementarity coupling.
pub const COUPLING: f64 = 90.0 / 469.0;

/// Squared jump norms across one interior (sub)edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeJump {
    /// cell on the side the edge was integrated from
    pub cell: ElemId,
    pub side: usize,
    pub neighbor: ElemId,
    pub length: f64,
    pub stress_sq: f64,
    pub flux_sq: f64,
}

/// The three pieces of the contact functional.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct ContactTerms {
    /// `(h / r) |lambda - mu|^2`
    pub multiplier: f64,
    /// `(r / h) |zeta|^2`
    pub gap: f64,
    /// `(90/469) (<lambda, zeta> + <mu, g - u_n>)`
    pub coupling: f64,
}

impl ContactTerms {
    pub fn sum(&self) -> f64 {
        self.multiplier + self.gap + self.coupling
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorReport {
    /// per active position
    pub eta_u_sq: Vec<f64>,
    pub eta_p_sq: Vec<f64>,
    /// contact functional localized to the cells owning the contact edges
    pub contact_sq: Vec<f64>,
    pub contact: ContactTerms,
    /// `eta^2`, the sum of all indicators and the contact functional
    pub total: f64,
    pub jumps: Vec<EdgeJump>,
}

impl EstimatorReport {
    /// `eta = sqrt(total)`
    pub fn eta(&self) -> f64 {
        self.total.max(0.0).sqrt()
    }

    /// Per-cell indicators used for marking.
    pub fn indicators(&self) -> Vec<f64> {
        (0..self.eta_u_sq.len())
            .map(|i| self.eta_u_sq[i] + self.eta_p_sq[i] + self.contact_sq[i])
            .collect()
    }
}

/// Problem data entering the residuals.
pub struct EstimatorData<'a> {
    pub material: MaterialParams,
    pub fe: &'a dyn Fn(Point) -> [f64; 2],
    pub ff: &'a dyn Fn(Point) -> f64,
    pub gap: &'a dyn Fn(Point) -> f64,
}

fn mat_vec(m: [[f64; 2]; 2], v: Point) -> Point {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn norm_sq(v: Point) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

struct Ctx<'a> {
    mesh: &'a Mesh,
    dofs: &'a DofMap,
    local: &'a LocalSolution,
    mat: MaterialParams,
}

impl Ctx<'_> {
    fn pos(&self, e: ElemId) -> Result<usize> {
        self.dofs
            .position(e)
            .ok_or_else(|| invalid(format!("cell {e} is not active")))
    }

    fn at(&self, e: ElemId, xi: f64, eta: f64) -> Result<FieldValues> {
        self.local.eval(self.mesh, e, self.pos(e)?, xi, eta, false)
    }

    fn at_point(&self, e: ElemId, x: Point) -> Result<FieldValues> {
        let (xi, eta) = self
            .mesh
            .inverse_map(e, x)
            .ok_or_else(|| Error::Geometry(format!("cannot locate point in cell {e}")))?;
        self.at(e, xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0))
    }

    fn traction(&self, f: &FieldValues, n: Point) -> Point {
        mat_vec(f.theta(self.mat.tau, self.mat.iota), n)
    }

    fn flux(&self, f: &FieldValues, n: Point) -> f64 {
        let k = mat_vec(self.mat.kappa, f.grad_p);
        k[0] * n[0] + k[1] * n[1]
    }

    /// Integrates the squared jumps along side `side` of `e` against `other`.
    fn jump(&self, e: ElemId, side: usize, other: ElemId) -> Result<EdgeJump> {
        let pos = self.pos(e)?;
        let pos_o = self.pos(other)?;
        let (r, s) = self.local.degrees(pos);
        let (ro, so) = self.local.degrees(pos_o);
        let rule = gauss_legendre::<f64>(r.max(s).max(ro).max(so) + 2)?;
        let n = self.mesh.side_normal(e, side);
        let len = self.mesh.side_length(e, side);
        let (mut su, mut sp) = (0.0, 0.0);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let (xi, eta) = side_reference_point(side, t);
            let fa = self.at(e, xi, eta)?;
            let fb = self.at_point(other, fa.x)?;
            let ta = self.traction(&fa, n);
            let tb = self.traction(&fb, n);
            su += w * norm_sq([ta[0] - tb[0], ta[1] - tb[1]]);
            sp += w * (self.flux(&fa, n) - self.flux(&fb, n)).powi(2);
        }
        Ok(EdgeJump {
            cell: e,
            side,
            neighbor: other,
            length: len,
            stress_sq: su * len / 2.0,
            flux_sq: sp * len / 2.0,
        })
    }
}

/// `L^2` norms of the jumps of `theta(u) n` and `kappa grad p . n` across
/// side `side` of cell `e`. A side with a hanging node is integrated over its
/// two halves; a half side is integrated against its coarse neighbor.
pub fn edge_jump(
    mesh: &Mesh,
    dofs: &DofMap,
    local: &LocalSolution,
    mat: &MaterialParams,
    e: ElemId,
    side: usize,
) -> Result<(f64, f64)> {
    let ctx = Ctx {
        mesh,
        dofs,
        local,
        mat: *mat,
    };
    if !mesh.is_active(e) || side > 3 {
        return Err(invalid("edge_jump needs an active cell and a side index below 4"));
    }
    let parts = match mesh.sides(e)[side] {
        SideKind::Boundary(_) => return Err(invalid("edge_jump called on a boundary edge")),
        SideKind::Conforming { neighbor, .. } => vec![ctx.jump(e, side, neighbor)?],
        SideKind::Slave { master, .. } => vec![ctx.jump(e, side, master)?],
        SideKind::Master { fine, .. } => vec![
            ctx.jump(fine[0].0, fine[0].1, e)?,
            ctx.jump(fine[1].0, fine[1].1, e)?,
        ],
    };
    let su: f64 = parts.iter().map(|j| j.stress_sq).sum();
    let sp: f64 = parts.iter().map(|j| j.flux_sq).sum();
    Ok((su.sqrt(), sp.sqrt()))
}

fn volume_rule(cache: &mut Vec<Option<QuadratureRule<f64>>>, n: usize) -> Result<QuadratureRule<f64>> {
    if cache.len() <= n {
        cache.resize(n + 1, None);
    }
    if cache[n].is_none() {
        cache[n] = Some(gauss_legendre(n)?);
    }
    Ok(cache[n].clone().expect("cached rule"))
}

/// Evaluates all indicators. `lambda` is required when the mesh has contact edges.
pub fn estimate(
    mesh: &Mesh,
    dofs: &DofMap,
    local: &LocalSolution,
    data: &EstimatorData<'_>,
    constraints: &ContactConstraintSet,
    lambda: Option<&ContactMultiplier>,
) -> Result<EstimatorReport> {
    let mat = data.material;
    let ctx = Ctx {
        mesh,
        dofs,
        local,
        mat,
    };
    let nc = dofs.active().len();
    let mut eta_u = vec![0.0; nc];
    let mut eta_p = vec![0.0; nc];
    let mut contact_sq = vec![0.0; nc];
    let mut jumps = Vec::new();
    let mut rules = Vec::new();
    let (tau, iota, alpha, k) = (mat.tau, mat.iota, mat.alpha, mat.kappa);
    let has_contact = !constraints.edges.is_empty();
    if has_contact && lambda.is_none() {
        return Err(Error::Precondition(
            "the contact multiplier must be reconstructed before estimating".into(),
        ));
    }

    for (pos, &e) in dofs.active().iter().enumerate() {
        let (r, s) = local.degrees(pos);
        let rule = volume_rule(&mut rules, r.max(s) + 2)?;
        let h = mesh.diameter(e);
        let (mut vu, mut vp) = (0.0, 0.0);
        for (qj, &wj) in rule.weights.iter().enumerate() {
            for (qi, &wi) in rule.weights.iter().enumerate() {
                let (xi, eta) = (rule.points[qi], rule.points[qj]);
                let f = local.eval(mesh, e, pos, xi, eta, true)?;
                let jac = mesh.jacobian(e, xi, eta);
                let w = wi * wj * (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]);
                let dt = f.div_theta(tau, iota);
                let fe = (data.fe)(f.x);
                let ru = [
                    dt[0] - alpha * f.grad_p[0] + fe[0],
                    dt[1] - alpha * f.grad_p[1] + fe[1],
                ];
                let hp = f.hess_p;
                let div_kgrad = k[0][0] * hp[0] + (k[0][1] + k[1][0]) * hp[1] + k[1][1] * hp[2];
                let rp = div_kgrad - alpha * alpha / iota * f.p - alpha * f.div_u() - (data.ff)(f.x);
                vu += w * norm_sq(ru);
                vp += w * rp * rp;
            }
        }
        eta_u[pos] += h * h / (r * r) as f64 * vu;
        eta_p[pos] += h * h / (s * s) as f64 * vp;

        for side in 0..4 {
            match mesh.sides(e)[side] {
                SideKind::Conforming { neighbor, .. } if e < neighbor => {
                    jumps.push(ctx.jump(e, side, neighbor)?);
                }
                SideKind::Master { fine, .. } => {
                    for (fe_cell, fe_side) in fine {
                        jumps.push(ctx.jump(fe_cell, fe_side, e)?);
                    }
                }
                SideKind::Boundary(tags) => {
                    let n = mesh.side_normal(e, side);
                    let len = mesh.side_length(e, side);
                    let traction = tags.displacement == DisplacementTag::Traction;
                    let flux = tags.pressure == PressureTag::Flux;
                    let contact = tags.displacement == DisplacementTag::Contact;
                    if !(traction || flux || contact) {
                        continue;
                    }
                    let rule = gauss_legendre::<f64>(r.max(s) + 2)?;
                    let edge_idx = if contact {
                        constraints
                            .edges
                            .iter()
                            .position(|ed| ed.cell == e && ed.side == side)
                    } else {
                        None
                    };
                    let (mut su, mut sp) = (0.0, 0.0);
                    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                        let (xi, eta) = side_reference_point(side, t);
                        let f = ctx.at(e, xi, eta)?;
                        let th = ctx.traction(&f, n);
                        if traction || contact {
                            let lam = match (edge_idx, lambda) {
                                (Some(i), Some(l)) => l.eval(constraints, i, t),
                                _ => 0.0,
                            };
                            let q = alpha * f.p - lam;
                            su += w * norm_sq([th[0] - q * n[0], th[1] - q * n[1]]);
                        }
                        if flux {
                            sp += w * ctx.flux(&f, n).powi(2);
                        }
                    }
                    eta_u[pos] += len / r as f64 * su * len / 2.0;
                    eta_p[pos] += len / s as f64 * sp * len / 2.0;
                }
                _ => {}
            }
        }
    }

    for j in &jumps {
        let pa = ctx.pos(j.cell)?;
        let pb = ctx.pos(j.neighbor)?;
        let (ra, sa) = local.degrees(pa);
        let (rb, sb) = local.degrees(pb);
        let wu = j.length / (2.0 * ra.min(rb) as f64);
        let wp = j.length / (2.0 * sa.min(sb) as f64);
        for p in [pa, pb] {
            eta_u[p] += wu * j.stress_sq;
            eta_p[p] += wp * j.flux_sq;
        }
    }

    let mut contact = ContactTerms::default();
    if let Some(lam) = lambda {
        for (idx, edge) in constraints.edges.iter().enumerate() {
            let pos = ctx.pos(edge.cell)?;
            let r = (edge.rows.len() - 1) as f64;
            let h = mesh.side_length(edge.cell, edge.side);
            let n = mesh.side_normal(edge.cell, edge.side);
            let rule = gauss_legendre::<f64>(edge.rows.len() + 3)?;
            let mut part = ContactTerms::default();
            for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                let (xi, eta) = side_reference_point(edge.side, t);
                let f = ctx.at(edge.cell, xi, eta)?;
                let un = f.u[0] * n[0] + f.u[1] * n[1];
                let g = (data.gap)(f.x);
                let l = lam.eval(constraints, idx, t);
                let (mu, zeta) = cutoffs(l, un, g, h, r);
                let jw = w * h / 2.0;
                part.multiplier += jw * (h / r) * (l - mu).powi(2);
                part.gap += jw * (r / h) * zeta * zeta;
                part.coupling += jw * COUPLING * (l * zeta + mu * (g - un));
            }
            contact.multiplier += part.multiplier;
            contact.gap += part.gap;
            contact.coupling += part.coupling;
            contact_sq[pos] += part.sum();
        }
    }

    let total = eta_u.iter().sum::<f64>() + eta_p.iter().sum::<f64>() + contact.sum();
    Ok(EstimatorReport {
        eta_u_sq: eta_u,
        eta_p_sq: eta_p,
        contact_sq,
        contact,
        total,
        jumps,
    })
}

/// `(mu, zeta)` at one point, with local mesh size `h` and degree `r`.
pub fn cutoffs(lambda: f64, un: f64, g: f64, h: f64, r: f64) -> (f64, f64) {
    let mu = (lambda - CUTOFF * r / h * (g - un)).max(0.0);
    let zeta = (un - g).max(-CUTOFF * h / r * lambda);
    (mu, zeta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoffs_follow_their_formulas() {
        let (mu, zeta) = cutoffs(2.0, -0.1, 0.3, 0.25, 2.0);
        assert_eq!(mu, (2.0 - CUTOFF * 8.0 * 0.4f64).max(0.0));
        assert_eq!(zeta, (-0.4f64).max(-CUTOFF * 0.125 * 2.0));
        let (mu, _) = cutoffs(0.0, 0.0, 1.0, 1.0, 1.0);
        assert_eq!(mu, 0.0);
    }

    #[test]
    fn contact_integrand_is_nonnegative() {
        // pointwise value of the three contact pieces over a grid of states
        for &l in &[0.0, 0.1, 1.0, 5.0] {
            for &s in &[-0.2, 0.0, 1e-3, 0.05, 1.0] {
                for &(h, r) in &[(0.1, 1.0), (0.5, 3.0)] {
                    let (mu, zeta) = cutoffs(l, 0.0, s, h, r);
                    let v = (h / r) * (l - mu).powi(2) + (r / h) * zeta * zeta + COUPLING * (l * zeta + mu * s);
                    assert!(v >= -1e-15, "l={l} s={s} h={h} r={r}: {v}");
                }
            }
        }
    }
}
