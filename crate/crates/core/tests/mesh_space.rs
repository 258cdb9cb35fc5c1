use approx::assert_abs_diff_eq;
use biot_hp::element::LocalSolution;
use biot_hp::mesh::{unit_square_mesh, unit_square_mesh_tagged, contact_square_tags, Mesh, SideKind};
use biot_hp::space::{contact_constraints, DofMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_refinement(seed: u64, passes: usize, max_degree: usize) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = unit_square_mesh_tagged(rng.gen_range(1..=3), 1, contact_square_tags).unwrap();
    for _ in 0..passes {
        let marked: Vec<usize> = mesh.active().iter().copied().filter(|_| rng.gen_bool(0.35)).collect();
        if !marked.is_empty() {
            mesh = mesh.refine(&marked).unwrap();
        }
    }
    let targets: Vec<(usize, usize)> = mesh.active().iter().map(|&e| (e, rng.gen_range(1..=max_degree))).collect();
    mesh.set_degrees(&targets).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_keeps_the_mesh_rules(seed in 0u64..10_000, passes in 0usize..4) {
        let mesh = random_refinement(seed, passes, 4);
        mesh.audit().unwrap();
        let area: f64 = mesh.active().iter().map(|&e| mesh.area(e)).sum();
        prop_assert!((area - 1.0).abs() < 1e-13);
        for &e in mesh.active() {
            for &n in &mesh.neighbors(e) {
                prop_assert!(mesh.degree(e).abs_diff(mesh.degree(n)) <= 1);
            }
        }
        let dofs = DofMap::build(&mesh).unwrap();
        prop_assert_eq!(
            dofs.displacement.n_free() + dofs.displacement.n_constrained(),
            dofs.displacement.n_raw()
        );
    }
}

/// Evaluates a random free vector from both cells adjacent to every slave side
/// and checks that the traces agree.
#[test]
fn constrained_functions_are_continuous_across_hanging_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for seed in 0..12 {
        let mesh = random_refinement(seed, 3, 3);
        let dofs = DofMap::build(&mesh).unwrap();
        let u: Vec<f64> = (0..dofs.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..dofs.n_p()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let local = LocalSolution::new(&dofs, &u, &p).unwrap();
        for (pos, &e) in mesh.active().iter().enumerate() {
            for (side, kind) in mesh.sides(e).iter().enumerate() {
                let master = match kind {
                    SideKind::Slave { master, .. } => *master,
                    _ => continue,
                };
                let mpos = local.position(master).unwrap();
                for _ in 0..10 {
                    let t: f64 = rng.gen_range(-1.0..1.0);
                    let (xi, eta) = biot_hp::mesh::side_reference_point(side, t);
                    let a = local.eval(&mesh, e, pos, xi, eta, false).unwrap();
                    let (mx, my) = mesh.inverse_map(master, a.x).unwrap();
                    let b = local.eval(&mesh, master, mpos, mx, my, false).unwrap();
                    assert_abs_diff_eq!(a.u[0], b.u[0], epsilon = 1e-12);
                    assert_abs_diff_eq!(a.u[1], b.u[1], epsilon = 1e-12);
                    assert_abs_diff_eq!(a.p, b.p, epsilon = 1e-12);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100, "only {checked} hanging-edge samples");
}

#[test]
fn conforming_edges_with_different_degrees_are_continuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = unit_square_mesh(2).unwrap().set_degree(0, 3).unwrap();
    let dofs = DofMap::build(&mesh).unwrap();
    let u: Vec<f64> = (0..dofs.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p: Vec<f64> = (0..dofs.n_p()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let local = LocalSolution::new(&dofs, &u, &p).unwrap();
    for (pos, &e) in mesh.active().iter().enumerate() {
        for &n in &mesh.neighbors(e) {
            let npos = local.position(n).unwrap();
            for k in 0..10 {
                // points on the segment between the two cell centers, near the shared edge
                let ce = mesh.map(e, 0.0, 0.0);
                let cn = mesh.map(n, 0.0, 0.0);
                let t = 0.5 + 1e-9 * (k as f64 - 5.0);
                let x = [ce[0] + t * (cn[0] - ce[0]), ce[1] + t * (cn[1] - ce[1])];
                let (a0, a1) = mesh.inverse_map(e, x).unwrap();
                let (b0, b1) = mesh.inverse_map(n, x).unwrap();
                let a = local.eval(&mesh, e, pos, a0.clamp(-1.0, 1.0), a1.clamp(-1.0, 1.0), false).unwrap();
                let b = local.eval(&mesh, n, npos, b0.clamp(-1.0, 1.0), b1.clamp(-1.0, 1.0), false).unwrap();
                assert_abs_diff_eq!(a.u[0], b.u[0], epsilon = 1e-7);
                assert_abs_diff_eq!(a.p, b.p, epsilon = 1e-7);
            }
        }
    }
}

#[test]
fn single_cell_counts() {
    let mesh = unit_square_mesh(1).unwrap();
    let dofs = DofMap::build(&mesh).unwrap();
    assert_eq!(dofs.n_p(), 2);
    assert_eq!(dofs.n_u(), 4);
}

#[test]
fn cubic_contact_edge_has_lobatto_points() {
    let mesh = unit_square_mesh_tagged(1, 3, contact_square_tags).unwrap();
    let dofs = DofMap::build(&mesh).unwrap();
    let cs = contact_constraints(&mesh, &dofs, |_| 0.1).unwrap();
    assert_eq!(cs.len(), 4);
    let mut xs: Vec<f64> = cs.rows.iter().map(|r| r.point[0]).collect();
    xs.sort_by(f64::total_cmp);
    let s = 1.0 / 5f64.sqrt();
    for (x, e) in xs.iter().zip([0.0, 0.5 - 0.5 * s, 0.5 + 0.5 * s, 1.0]) {
        assert_abs_diff_eq!(*x, e, epsilon = 1e-14);
    }
    for r in &cs.rows {
        assert_eq!(r.normal, [0.0, -1.0]);
        assert!(r.simple_bound().is_some());
    }
    let linear = contact_constraints(&unit_square_mesh(1).unwrap(), &DofMap::build(&unit_square_mesh(1).unwrap()).unwrap(), |_| 0.0).unwrap();
    assert_eq!(linear.len(), 2);
}

#[test]
fn gap_at_the_midpoint_is_zero() {
    let problem = biot_hp::problem::Problem::new(biot_hp::problem::ProblemKind::ContactSquare);
    let mesh = problem.mesh(2, 1).unwrap();
    let dofs = DofMap::build(&mesh).unwrap();
    let cs = contact_constraints(&mesh, &dofs, |x| problem.gap(x)).unwrap();
    let mid = cs.rows.iter().find(|r| (r.point[0] - 0.5).abs() < 1e-14).unwrap();
    assert_eq!(mid.gap, 0.0);
}
