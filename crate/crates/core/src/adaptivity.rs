//! Dörfler marking and the choice between quartering and degree elevation.

use crate::element::LocalSolution;
use crate::error::{invalid, Error, Result};
use crate::mesh::ElemId;
use crate::quad_basis::{gauss_legendre, legendre};

/// Refinement applied to a marked cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Action {
    /// quarter the cell
    H,
    /// raise the degree by one
    P,
}

/// Marked cells with their actions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkDecision {
    pub marked: Vec<(ElemId, Action)>,
}

impl MarkDecision {
    pub fn h_cells(&self) -> Vec<ElemId> {
        self.with(Action::H)
    }

    pub fn p_cells(&self) -> Vec<ElemId> {
        self.with(Action::P)
    }

    fn with(&self, a: Action) -> Vec<ElemId> {
        self.marked.iter().filter(|m| m.1 == a).map(|m| m.0).collect()
    }
}

/// Default decay threshold `log 4` per unit degree.
pub fn default_sigma() -> f64 {
    4f64.ln()
}

/// Smallest prefix of the indicators sorted in descending order (ties by
/// ascending index) whose sum reaches `theta` times the total. Returns indices.
pub fn doerfler_mark(eta_sq: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid(format!("bulk parameter {theta} outside (0, 1]")));
    }
    if eta_sq.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("indicators must be finite and non-negative"));
    }
    let mut order: Vec<usize> = (0..eta_sq.len()).collect();
    order.sort_by(|&a, &b| eta_sq[b].total_cmp(&eta_sq[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| eta_sq[i]).sum();
    if total <= 0.0 {
        return Err(Error::NothingToMark);
    }
    let goal = theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= goal || eta_sq[i] == 0.0 {
            break;
        }
        acc += eta_sq[i];
        out.push(i);
    }
    Ok(out)
}

/// Least-squares decay rate `sigma` of `magnitudes[k] ~ C exp(-sigma k)` over
/// `k >= 1`, ignoring entries that vanish relative to the largest one.
/// `None` when fewer than two entries are usable.
pub fn decay_slope(magnitudes: &[f64]) -> Option<f64> {
    let top = magnitudes.iter().skip(1).fold(0.0f64, |m, &v| m.max(v.abs()));
    if !(top > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = magnitudes
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| v.abs() > 1e-13 * top)
        .map(|(k, v)| (k as f64, v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

/// Decision from a decay rate: degree elevation when the rate reaches `sigma_star`.
pub fn decide(slope: Option<f64>, sigma_star: f64) -> Action {
    match slope {
        Some(s) if s >= sigma_star * (1.0 - 1e-9) => Action::P,
        _ => Action::H,
    }
}

/// Legendre shell magnitudes `b_k = |(a_mn)_{max(m,n)=k}|` of a tensor
/// expansion given by nodal coefficients on Gauss–Lobatto nodes.
pub fn legendre_shells(basis: &crate::quad_basis::LagrangeBasis<f64>, nodal: &[f64]) -> Result<Vec<f64>> {
    let p = basis.degree();
    if nodal.len() != (p + 1) * (p + 1) {
        return Err(invalid("coefficient count does not match the degree"));
    }
    let rule = gauss_legendre::<f64>(p + 1)?;
    let nq = rule.len();
    let tab: Vec<Vec<f64>> = rule.points.iter().map(|&x| basis.tabulate(x)[0].clone()).collect();
    // values at the tensor Gauss points
    let mut f = vec![0.0; nq * nq];
    for qj in 0..nq {
        for qi in 0..nq {
            let mut v = 0.0;
            for j in 0..=p {
                for i in 0..=p {
                    v += nodal[j * (p + 1) + i] * tab[qi][i] * tab[qj][j];
                }
            }
            f[qj * nq + qi] = v;
        }
    }
    let leg: Vec<Vec<f64>> = rule
        .points
        .iter()
        .map(|&x| (0..=p).map(|m| legendre(m, x).0).collect())
        .collect();
    let mut shells = vec![0.0; p + 1];
    for m in 0..=p {
        for n in 0..=p {
            let mut a = 0.0;
            for qj in 0..nq {
                for qi in 0..nq {
                    a += rule.weights[qi] * rule.weights[qj] * f[qj * nq + qi] * leg[qi][m] * leg[qj][n];
                }
            }
            a *= (2 * m + 1) as f64 * (2 * n + 1) as f64 / 4.0;
            shells[m.max(n)] += a * a;
        }
    }
    Ok(shells.into_iter().map(f64::sqrt).collect())
}

/// Chooses between quartering and degree elevation for the cell at active
/// position `pos` from the Legendre decay of the local displacement and
/// pressure. Every field with a usable fit must decay at rate `sigma_star`
/// for degree elevation; cells without any usable fit are quartered.
pub fn hp_decide(local: &LocalSolution, pos: usize, sigma_star: f64) -> Result<Action> {
    let (r, s) = local.degrees(pos);
    let c = local.coeffs(pos);
    let mut slopes = Vec::new();
    for (field, deg) in [(0, r), (1, r), (2, s)] {
        let shells = legendre_shells(local.basis(deg), &c[field])?;
        if let Some(sl) = decay_slope(&shells) {
            slopes.push(sl);
        }
    }
    if slopes.is_empty() {
        return Ok(Action::H);
    }
    let worst = slopes.into_iter().fold(f64::INFINITY, f64::min);
    Ok(decide(Some(worst), sigma_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad_basis::LagrangeBasis;

    #[test]
    fn doerfler_examples() {
        assert_eq!(doerfler_mark(&[4.0, 3.0, 2.0, 1.0], 0.5).unwrap(), vec![0, 1]);
        assert_eq!(doerfler_mark(&[1.0, 0.0, 2.0], 1.0).unwrap(), vec![2, 0]);
        assert_eq!(doerfler_mark(&[0.3], 0.01).unwrap(), vec![0]);
        assert!(matches!(doerfler_mark(&[0.0, 0.0], 0.5), Err(Error::NothingToMark)));
        assert!(doerfler_mark(&[1.0], 0.0).is_err());
        assert!(doerfler_mark(&[1.0], 1.5).is_err());
        assert!(doerfler_mark(&[-1.0], 0.5).is_err());
    }

    #[test]
    fn ties_broken_by_index() {
        assert_eq!(doerfler_mark(&[1.0, 2.0, 2.0, 1.0], 0.5).unwrap(), vec![1, 2]);
        assert_eq!(doerfler_mark(&[1.0, 1.0, 1.0, 1.0], 0.3).unwrap(), vec![0, 1]);
    }

    #[test]
    fn slope_rules() {
        let geometric: Vec<f64> = (0..=4).map(|k| 4f64.powi(-k)).collect();
        let s = decay_slope(&geometric).unwrap();
        assert!((s - 4f64.ln()).abs() < 1e-12);
        assert_eq!(decide(Some(s), default_sigma()), Action::P);
        let algebraic: Vec<f64> = (0..=5).map(|k| if k == 0 { 1.0 } else { (k as f64).powi(-2) }).collect();
        assert_eq!(decide(decay_slope(&algebraic), default_sigma()), Action::H);
        assert_eq!(decay_slope(&[1.0, 0.5]), None);
        assert_eq!(decide(None, default_sigma()), Action::H);
    }

    #[test]
    fn shells_of_a_legendre_polynomial() {
        let basis = LagrangeBasis::<f64>::new(3).unwrap();
        let nodes = basis.nodes().to_vec();
        // f = P_2(x) P_1(y)
        let nodal: Vec<f64> = (0..16)
            .map(|l| legendre(2, nodes[l % 4]).0 * legendre(1, nodes[l / 4]).0)
            .collect();
        let b = legendre_shells(&basis, &nodal).unwrap();
        assert!(b[0].abs() < 1e-13 && b[1].abs() < 1e-13 && b[3].abs() < 1e-13);
        assert!((b[2] - 1.0).abs() < 1e-13);
    }
}
