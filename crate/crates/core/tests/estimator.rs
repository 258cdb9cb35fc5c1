use biot_hp::assembly::{assemble, MaterialParams};
use biot_hp::element::LocalSolution;
use biot_hp::error::Error;
use biot_hp::estimator::{edge_jump, estimate, EstimatorData};
use biot_hp::mesh::{unit_square_mesh, Mesh, SideKind};
use biot_hp::problem::{Manufactured, Problem, ProblemKind};
use biot_hp::space::{contact_constraints, DofMap};
use biot_hp::study::solve_problem;
use biot_hp::vi_solver::{reconstruct_lambda, solve_vi, BoundaryPairing, SolverOptions};

fn hanging_mesh() -> Mesh {
    let m = unit_square_mesh(2).unwrap().refine(&[0]).unwrap();
    let first = m.active()[0];
    m.set_degree(first, 2).unwrap()
}

#[test]
fn zero_data_gives_zero_indicators() {
    let mesh = hanging_mesh();
    let dofs = DofMap::build(&mesh).unwrap();
    let mat = MaterialParams::default();
    let blocks = assemble(&mesh, &dofs, &mat, &|_| [0.0, 0.0], &|_| 0.0, false).unwrap();
    let gap = |x: [f64; 2]| 0.1 + x[0];
    let cs = contact_constraints(&mesh, &dofs, gap).unwrap();
    let sol = solve_vi(&blocks, &cs, &SolverOptions::default()).unwrap();
    assert!(sol.u.iter().chain(&sol.p).all(|&v| v == 0.0));
    let lam = reconstruct_lambda(&sol, &blocks, &mesh, &dofs, &cs, BoundaryPairing::Lobatto).unwrap();
    let local = LocalSolution::new(&dofs, &sol.u, &sol.p).unwrap();
    let data = EstimatorData { material: mat, fe: &|_| [0.0, 0.0], ff: &|_| 0.0, gap: &gap };
    let rep = estimate(&mesh, &dofs, &local, &data, &cs, Some(&lam)).unwrap();
    assert!(rep.indicators().iter().all(|&v| v == 0.0));
    assert_eq!(rep.total, 0.0);
}

#[test]
fn linear_fields_have_no_jumps() {
    let mesh = hanging_mesh();
    let dofs = DofMap::build(&mesh).unwrap();
    // fields vanishing on the clamped top edge
    let u: Vec<f64> = [0.7, -0.3]
        .iter()
        .flat_map(|&a| dofs.displacement.free_points().iter().map(move |x| a * (1.0 - x[1])))
        .collect();
    let p: Vec<f64> = dofs.pressure.free_points().iter().map(|x| 2.0 * (1.0 - x[1])).collect();
    let local = LocalSolution::new(&dofs, &u, &p).unwrap();
    let mat = MaterialParams::default();
    let mut interior = 0;
    for &e in mesh.active() {
        for side in 0..4 {
            if matches!(mesh.sides(e)[side], SideKind::Boundary(_)) {
                assert!(matches!(edge_jump(&mesh, &dofs, &local, &mat, e, side), Err(Error::InvalidArgument(_))));
                continue;
            }
            let (ju, jp) = edge_jump(&mesh, &dofs, &local, &mat, e, side).unwrap();
            assert!(ju < 1e-12 && jp < 1e-12, "jump ({ju}, {jp}) on cell {e} side {side}");
            interior += 1;
        }
    }
    assert!(interior > 8);
}

#[test]
fn single_cell_has_no_jumps_and_needs_a_multiplier() {
    let problem = Problem::new(ProblemKind::ContactSquare);
    let level = solve_problem(&problem, &problem.mesh(1, 2).unwrap(), &SolverOptions::default(), BoundaryPairing::Lobatto, true).unwrap();
    assert!(level.report.as_ref().unwrap().jumps.is_empty());
    let data = EstimatorData {
        material: problem.material,
        fe: &|x| problem.fe(x),
        ff: &|x| problem.ff(x),
        gap: &|x| problem.gap(x),
    };
    let missing = estimate(&level.mesh, &level.dofs, &level.local, &data, &level.constraints, None);
    assert!(matches!(missing, Err(Error::Precondition(_))));
}

#[test]
fn total_is_invariant_under_renumbering() {
    let problem = Problem::new(ProblemKind::ContactSquare);
    let mesh = problem.mesh(2, 1).unwrap();
    let mesh = mesh.refine(&[mesh.active()[1]]).unwrap();
    let n = mesh.num_active();
    let order: Vec<usize> = (0..n).rev().collect();
    let renumbered = mesh.flatten_permuted(&order).unwrap();
    let opts = SolverOptions::default();
    let a = solve_problem(&problem, &mesh, &opts, BoundaryPairing::Lobatto, true).unwrap();
    let b = solve_problem(&problem, &renumbered, &opts, BoundaryPairing::Lobatto, true).unwrap();
    let (ta, tb) = (a.report.unwrap().total, b.report.unwrap().total);
    assert!((ta - tb).abs() <= 1e-10 * ta, "{ta} vs {tb}");
}

#[test]
fn estimator_decreases_under_uniform_refinement() {
    let problem = Problem::new(ProblemKind::ContactSquare);
    let mut mesh = problem.mesh(2, 1).unwrap();
    let mut last = f64::INFINITY;
    for _ in 0..4 {
        let lvl = solve_problem(&problem, &mesh, &SolverOptions::default(), BoundaryPairing::Lobatto, true).unwrap();
        let eta = lvl.report.unwrap().eta();
        assert!(eta < last);
        last = eta;
        mesh = mesh.refine_uniform().unwrap();
    }
}

/// Central differences of the exact fields reproduce the manufactured loads.
#[test]
fn manufactured_loads_match_finite_differences() {
    let mat = MaterialParams { tau: 1.3, iota: 0.7, alpha: 0.9, kappa: [[1.2, 0.3], [0.3, 0.8]] };
    let m = Manufactured::new(mat);
    let h = 1e-4;
    let shift = |x: [f64; 2], d: [f64; 2], s: f64| [x[0] + s * d[0], x[1] + s * d[1]];
    let e = [[1.0, 0.0], [0.0, 1.0]];
    let grad_u = |x: [f64; 2]| -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for (j, d) in e.iter().enumerate() {
            let (a, b) = (m.displacement(shift(x, *d, h)), m.displacement(shift(x, *d, -h)));
            for i in 0..2 {
                g[i][j] = (a[i] - b[i]) / (2.0 * h);
            }
        }
        g
    };
    let stress = |x: [f64; 2]| -> [[f64; 2]; 2] {
        let g = grad_u(x);
        let div = g[0][0] + g[1][1];
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = mat.tau * (g[i][j] + g[j][i]) + if i == j { mat.iota * div } else { 0.0 };
            }
        }
        s
    };
    let flux = |x: [f64; 2]| -> [f64; 2] {
        let gp = [
            (m.pressure(shift(x, e[0], h)) - m.pressure(shift(x, e[0], -h))) / (2.0 * h),
            (m.pressure(shift(x, e[1], h)) - m.pressure(shift(x, e[1], -h))) / (2.0 * h),
        ];
        let k = mat.kappa;
        [k[0][0] * gp[0] + k[0][1] * gp[1], k[1][0] * gp[0] + k[1][1] * gp[1]]
    };
    for x in [[0.3, 0.6], [0.71, 0.12], [0.5, 0.5]] {
        let mut div_s = [0.0; 2];
        let mut div_f = 0.0;
        for (j, d) in e.iter().enumerate() {
            let (a, b) = (stress(shift(x, *d, h)), stress(shift(x, *d, -h)));
            for i in 0..2 {
                div_s[i] += (a[i][j] - b[i][j]) / (2.0 * h);
            }
            div_f += (flux(shift(x, *d, h))[j] - flux(shift(x, *d, -h))[j]) / (2.0 * h);
        }
        let gp = [
            (m.pressure(shift(x, e[0], h)) - m.pressure(shift(x, e[0], -h))) / (2.0 * h),
            (m.pressure(shift(x, e[1], h)) - m.pressure(shift(x, e[1], -h))) / (2.0 * h),
        ];
        let g = grad_u(x);
        let fe = m.fe(x);
        for i in 0..2 {
            let want = -div_s[i] + mat.alpha * gp[i];
            assert!((fe[i] - want).abs() < 1e-5 * (1.0 + want.abs()), "fe[{i}] at {x:?}: {} vs {want}", fe[i]);
        }
        let want = div_f - mat.alpha * mat.alpha / mat.iota * m.pressure(x) - mat.alpha * (g[0][0] + g[1][1]);
        assert!((m.ff(x) - want).abs() < 1e-5 * (1.0 + want.abs()));
    }
}
