#![allow(dead_code)]

use biot_hp::assembly::{assemble, SystemBlocks};
use biot_hp::mesh::Mesh;
use biot_hp::problem::{Problem, ProblemKind};
use biot_hp::space::{contact_constraints, ContactConstraintSet, DofMap};
use nalgebra::{DMatrix, DVector};

pub struct System {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub blocks: SystemBlocks,
    pub constraints: ContactConstraintSet,
}

pub fn contact_system(m: usize, r: usize, load_scale: f64, gap_shift: f64) -> System {
    let problem = Problem::new(ProblemKind::ContactSquare);
    let mesh = problem.mesh(m, r).unwrap();
    let dofs = DofMap::build(&mesh).unwrap();
    let blocks = assemble(
        &mesh,
        &dofs,
        &problem.material,
        &|x| {
            let f = problem.fe(x);
            [load_scale * f[0], load_scale * f[1]]
        },
        &|x| problem.ff(x),
        false,
    )
    .unwrap();
    let constraints = contact_constraints(&mesh, &dofs, |x| problem.gap(x) + gap_shift).unwrap();
    System { mesh, dofs, blocks, constraints }
}

pub fn dense(m: &biot_hp::SparseMatrix) -> DMatrix<f64> {
    let rows = m.to_dense();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| rows[i][j])
}

/// Exact solution of the contact problem by enumerating every active set.
pub struct Enumerated {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub energy: f64,
    /// active sets whose equality-constrained minimizer is primal and dual feasible
    pub kkt_candidates: usize,
}

/// Minimizes `1/2 u'Du - l'u` over `N u <= g` with `D = A + B'C^-1 B` and
/// `l = fe - B'C^-1 ff` by trying all `2^m` active sets. Pressure is recovered
/// from `p = -C^-1 (B u + ff)`.
pub fn enumerate_active_sets(blocks: &SystemBlocks, constraints: &ContactConstraintSet) -> Enumerated {
    let a = dense(&blocks.a);
    let b = dense(&blocks.b);
    let c = dense(&blocks.c);
    let c_chol = c.clone().cholesky().expect("C is positive definite");
    let ci_b = c_chol.solve(&b);
    let d = &a + b.transpose() * &ci_b;
    let ff = DVector::from_column_slice(&blocks.ff);
    let fe = DVector::from_column_slice(&blocks.fe);
    let l = &fe - b.transpose() * c_chol.solve(&ff);
    let n_u = blocks.n_u();
    let m = constraints.len();
    let mut nmat = DMatrix::zeros(m, n_u);
    for (i, row) in constraints.rows.iter().enumerate() {
        for &(j, w) in &row.terms {
            nmat[(i, j)] += w;
        }
    }
    let g = DVector::from_iterator(m, constraints.rows.iter().map(|r| r.gap));
    let d_chol = d.clone().cholesky().expect("D is positive definite");
    let u0 = d_chol.solve(&l);
    let dinv_nt = d_chol.solve(&nmat.transpose());
    let s = &nmat * &dinv_nt;
    let energy = |u: &DVector<f64>| 0.5 * u.dot(&(&d * u)) - l.dot(u);

    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut kkt_candidates = 0;
    for mask in 0u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let mut lambda = DVector::zeros(m);
        if !idx.is_empty() {
            let k = idx.len();
            let saa = DMatrix::from_fn(k, k, |i, j| s[(idx[i], idx[j])]);
            let rhs = DVector::from_fn(k, |i, _| (nmat.row(idx[i]) * &u0)[0] - g[idx[i]]);
            let Some(la) = saa.lu().solve(&rhs) else { continue };
            for (i, &r) in idx.iter().enumerate() {
                lambda[r] = la[i];
            }
        }
        let u = &u0 - &dinv_nt * &lambda;
        let un = &nmat * &u;
        let scale = 1.0 + g.amax();
        let primal = (0..m).all(|i| un[i] <= g[i] + 1e-11 * scale);
        let dual = lambda.iter().all(|&x| x >= -1e-11 * scale);
        if !primal {
            continue;
        }
        if dual {
            kkt_candidates += 1;
        }
        let e = energy(&u);
        if best.as_ref().is_none_or(|b| e < b.0) {
            best = Some((e, u, lambda));
        }
    }
    let (energy, u, lambda) = best.expect("some active set is feasible");
    let p = -c_chol.solve(&(&b * &u + &ff));
    Enumerated {
        u: u.as_slice().to_vec(),
        p: p.as_slice().to_vec(),
        lambda: lambda.as_slice().to_vec(),
        energy,
        kkt_candidates,
    }
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
