use biot_hp::assembly::energy_norms;
use biot_hp::element::LocalSolution;
use biot_hp::error::Error;
use biot_hp::problem::{Problem, ProblemKind};
use biot_hp::study::{
    compute_eoc, energy_error, reference_solution, run_study, solve_problem, Scheme, StudyConfig,
};
use biot_hp::validate::{run_properties, Mutation, ValidateOptions};
use biot_hp::vi_solver::{BoundaryPairing, SolverOptions};

fn small(scheme: Scheme, r: usize, max_dof: usize) -> StudyConfig {
    StudyConfig { scheme, r, max_dof, ..StudyConfig::default() }
}

#[test]
fn eoc_of_synthetic_sequences() {
    let seq: Vec<(usize, f64)> = [10usize, 40, 160, 640].iter().map(|&n| (n, (n as f64).powf(-1.5))).collect();
    for e in compute_eoc(&seq).into_iter().skip(1) {
        assert!((e.unwrap() - 1.5).abs() < 1e-12);
    }
    let c = compute_eoc(&[(5, 0.2), (9, 0.2), (20, 0.2)]);
    assert_eq!(c[1], Some(0.0));
}

#[test]
fn outputs_are_written_and_deterministic() {
    let config = small(Scheme::HpAdaptive, 2, 600);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_study(&config, Some(a.path())).unwrap();
    run_study(&config, Some(b.path())).unwrap();
    for name in ["convergence.csv", "marking.csv", "contact.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name} differs between runs");
    }
    let csv = std::fs::read_to_string(a.path().join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    assert_eq!(lines.next().unwrap(), "level,N,err_u_sq,err_p_sq,err,eta_total,eoc");
    assert_eq!(lines.count(), ra.records.len());
    let marking = std::fs::read_to_string(a.path().join("marking.csv")).unwrap();
    assert!(marking.starts_with("level,cell,eta_sq,action\n"));
    assert_eq!(marking.lines().count(), ra.marks.len() + 1);
    let contact = std::fs::read_to_string(a.path().join("contact.csv")).unwrap();
    assert!(contact.starts_with("x,y,lambda,un_minus_g\n"));
    for k in 0..ra.records.len() {
        let vtk = std::fs::read_to_string(biot_hp::study::level_vtk_path(a.path(), k)).unwrap();
        for key in ["VECTORS u", "SCALARS p", "SCALARS degree", "SCALARS eta_sq"] {
            assert!(vtk.contains(key), "level {k} lacks {key}");
        }
    }
    // the error grows with neither N nor level
    assert!(ra.records.last().unwrap().err < ra.records[0].err);
    assert!(ra.records.iter().all(|r| r.err > 0.0));
}

#[test]
fn reference_cap_is_enforced() {
    let problem = Problem::new(ProblemKind::ContactSquare);
    let mesh = problem.mesh(2, 1).unwrap();
    let err = reference_solution(&problem, &mesh, &SolverOptions::default(), BoundaryPairing::Lobatto, 10);
    assert!(matches!(err, Err(Error::ReferenceTooLarge { .. })));
    let config = StudyConfig { reference_max_dof: 10, max_dof: 100, ..StudyConfig::default() };
    assert!(matches!(run_study(&config, None), Err(Error::ReferenceTooLarge { .. })));
}

#[test]
fn energy_error_identities() {
    let problem = Problem::new(ProblemKind::ContactSquare);
    let opts = SolverOptions::default();
    let pairing = BoundaryPairing::Lobatto;
    let m2 = problem.mesh(2, 1).unwrap();
    let m4 = m2.refine_uniform().unwrap();
    let m8 = m4.refine_uniform().unwrap().raise_all_degrees(1).unwrap();
    let s2 = solve_problem(&problem, &m2, &opts, pairing, false).unwrap();
    let s4 = solve_problem(&problem, &m4, &opts, pairing, false).unwrap();
    let s8 = solve_problem(&problem, &m8, &opts, pairing, false).unwrap();
    let mat = &problem.material;

    let same = energy_error(&m4, &s4.local, &m4, &s4.local, mat).unwrap();
    assert_eq!(same, (0.0, 0.0));

    // zero coarse function: the error is the energy of the fine solution
    let zero = LocalSolution::new(&s2.dofs, &vec![0.0; s2.dofs.n_u()], &vec![0.0; s2.dofs.n_p()]).unwrap();
    let (eu, ep) = energy_error(&m2, &zero, &m8, &s8.local, mat).unwrap();
    let (nu, np) = energy_norms(&s8.blocks, &s8.solution.u, &s8.solution.p).unwrap();
    assert!((eu - nu * nu).abs() <= 1e-10 * (1.0 + nu * nu));
    assert!((ep - np * np).abs() <= 1e-10 * (1.0 + np * np));

    let d = |a: (f64, f64)| (a.0 + a.1).sqrt();
    let e28 = d(energy_error(&m2, &s2.local, &m8, &s8.local, mat).unwrap());
    let e24 = d(energy_error(&m2, &s2.local, &m4, &s4.local, mat).unwrap());
    let e48 = d(energy_error(&m4, &s4.local, &m8, &s8.local, mat).unwrap());
    assert!(e28 <= e24 + e48 + 1e-9);
    assert!(e28 > 0.0);

    let m3 = problem.mesh(3, 1).unwrap();
    let s3 = solve_problem(&problem, &m3, &opts, pairing, false).unwrap();
    assert!(matches!(energy_error(&m3, &s3.local, &m4, &s4.local, mat), Err(Error::InvalidArgument(_))));
}

#[test]
fn first_mesh_above_the_budget_is_rejected() {
    assert!(run_study(&small(Scheme::HUniform, 1, 5), None).is_err());
}

#[test]
fn manufactured_errors_use_the_exact_solution() {
    let config = StudyConfig { problem: ProblemKind::Manufactured, max_dof: 800, ..StudyConfig::default() };
    let res = run_study(&config, None).unwrap();
    assert!(res.reference_n.is_none());
    let last = res.records.last().unwrap();
    assert!(last.eoc.unwrap() > 0.35);
}

#[test]
fn sign_mutation_is_caught_by_the_equality_residual() {
    let clean = run_properties(&ValidateOptions { instances: 6, samples: 20, ..ValidateOptions::default() }).unwrap();
    assert!(clean.all_passed());
    let broken = run_properties(&ValidateOptions {
        instances: 6,
        samples: 20,
        mutation: Mutation::FlipCouplingSign,
        ..ValidateOptions::default()
    })
    .unwrap();
    assert!(broken.get("b-continuity").unwrap().passed);
    assert!(!broken.get("mass-balance").unwrap().passed);
    assert!(!broken.all_passed());
}

#[test]
fn validate_is_seeded() {
    let o = ValidateOptions { seed: 9, instances: 4, samples: 10, ..ValidateOptions::default() };
    let a = run_properties(&o).unwrap();
    let b = run_properties(&o).unwrap();
    for (x, y) in a.properties.iter().zip(&b.properties) {
        assert_eq!(x.max_violation, y.max_violation);
    }
}

#[test]
fn command_line_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_biot-hp");
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"problem":"contact-square","scheme":"h-uniform","r":1,"theta":0.5,"max_dof":300,"tolerances":{"kkt_tol":1e-9},"outputs":{"vtk":false}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let st = std::process::Command::new(exe)
        .args(["study", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--scheme", "h-adaptive", "--max-dof", "400"])
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("convergence.csv").exists());
    assert!(out.join("marking.csv").exists());
    assert!(!out.join("level_000.vtk").exists());

    let v = std::process::Command::new(exe)
        .args(["validate", "--instances", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(v.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("validate.json")).unwrap()).unwrap();
    assert_eq!(report["properties"].as_array().unwrap().len(), 8);

    let bad = std::process::Command::new(exe).args(["study", "--scheme", "p-uniform"]).output().unwrap();
    assert!(!bad.status.success());
}
