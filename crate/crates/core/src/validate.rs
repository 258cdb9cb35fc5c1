//! Randomized property suite for the discrete forms and the contact solver.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, DualNorm, Field, MaterialParams, SystemBlocks};
use crate::error::Result;
use crate::mesh::{unit_square_mesh_tagged, contact_square_tags, Mesh};
use crate::space::{contact_constraints, ContactConstraintSet, DofMap};
use crate::sparse::{dot, SymmetricFactor, UpperCsc};
use crate::vi_solver::{block_residual, solve_vi, InitialActiveSet, SolverOptions, VISolution};

/// Deliberate corruption of the solver input, used to check that the suite
/// detects broken assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum Mutation {
    #[default]
    None,
    /// the solver sees `-B` instead of `B`
    FlipCouplingSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    pub instances: usize,
    /// random vectors per instance for the quadratic-form checks
    pub samples: usize,
    pub solver: SolverOptions,
    pub mutation: Mutation,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            instances: 20,
            samples: 100,
            solver: SolverOptions::default(),
            mutation: Mutation::None,
        }
    }
}

/// Outcome of one property over all instances.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PropertyResult {
    pub name: String,
    /// the inequality or identity being checked
    pub statement: String,
    pub instances: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub instances: usize,
    pub mutation: Mutation,
    pub properties: Vec<PropertyResult>,
    pub seconds: f64,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:>9} {:>13} {:>9}  {:<6} statement",
            "property", "instances", "max viol.", "tol", "result"
        );
        for p in &self.properties {
            let _ = writeln!(
                s,
                "{:<20} {:>9} {:>13.3e} {:>9.0e}  {:<6} {}",
                p.name,
                p.instances,
                p.max_violation,
                p.tolerance,
                if p.passed { "pass" } else { "FAIL" },
                p.statement
            );
        }
        let _ = writeln!(s, "seed {}  {:.2} s", self.seed, self.seconds);
        s
    }
}

const PROPERTIES: [(&str, &str, f64); 8] = [
    ("b-continuity", "|q'Bv| <= |v|_A |q|_C", 1e-10),
    ("norm-upper-bounds", "v'Av <= (2tau+2iota) |v|_H1^2, q'Cq <= max(alpha^2/iota, kappa_max) |q|_H1^2", 1e-10),
    ("schur-positivity", "(Bv)'C^-1(Bv) >= 0, so v'Dv >= v'Av", 1e-12),
    ("energy-inequality", "u'Au + p'Cp + ff.p <= fe.u when 0 is admissible", 1e-9),
    ("discrete-stability", "|(u,p)| <= |fe|_A* + |ff|_C* when 0 is admissible", 1e-9),
    ("kkt", "feasibility, dual sign, complementarity, momentum (relative)", 1e-9),
    ("mass-balance", "-Bu - Cp = ff (relative)", 1e-9),
    ("uniqueness", "PDAS from empty and full active sets agree", 1e-9),
];

struct Instance {
    mesh: Mesh,
    fe: [f64; 6],
    ff: [f64; 3],
    gap: [f64; 2],
}

fn random_mesh(rng: &mut ChaCha8Rng) -> Result<Mesh> {
    let m = rng.gen_range(1..=4);
    let mut mesh = unit_square_mesh_tagged(m, 1, contact_square_tags)?;
    for _ in 0..rng.gen_range(0..=3) {
        let marked: Vec<usize> = mesh
            .active()
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.3))
            .collect();
        if !marked.is_empty() {
            mesh = mesh.refine(&marked)?;
        }
    }
    let targets: Vec<(usize, usize)> = mesh
        .active()
        .iter()
        .map(|&e| (e, rng.gen_range(1..=3)))
        .collect();
    mesh.set_degrees(&targets)
}

fn random_instance(rng: &mut ChaCha8Rng, zero: bool) -> Result<Instance> {
    let mesh = random_mesh(rng)?;
    if zero {
        return Ok(Instance { mesh, fe: [0.0; 6], ff: [0.0; 3], gap: [0.0, 0.0] });
    }
    let mut u = |a: f64, b: f64| rng.gen_range(a..b);
    let fe = [u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0), u(-4.0, -0.5), u(-1.0, 1.0), u(-1.0, 1.0)];
    let ff = [u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)];
    let gap = [u(0.0, 0.05), u(0.0, 2.0)];
    Ok(Instance { mesh, fe, ff, gap })
}

fn instance_system(inst: &Instance) -> Result<(DofMap, SystemBlocks, ContactConstraintSet)> {
    let dofs = DofMap::build(&inst.mesh)?;
    let (fe, ff) = (inst.fe, inst.ff);
    let blocks = assemble(
        &inst.mesh,
        &dofs,
        &MaterialParams::default(),
        &|x| [fe[0] + fe[1] * x[0] + fe[2] * x[1], fe[3] + fe[4] * x[0] + fe[5] * x[1]],
        &|x| ff[0] + ff[1] * x[0] + ff[2] * x[1],
        true,
    )?;
    let g = inst.gap;
    let constraints =
        contact_constraints(&inst.mesh, &dofs, |x| g[0] + g[1] * (x[0] - 0.5) * (x[0] - 0.5))?;
    Ok((dofs, blocks, constraints))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Tally {
    worst: Vec<f64>,
    count: Vec<usize>,
}

impl Tally {
    fn record(&mut self, k: usize, violation: f64) {
        // NaN counts as a failure
        self.worst[k] = if violation.is_nan() { f64::INFINITY } else { self.worst[k].max(violation) };
    }
}

fn form_properties(
    rng: &mut ChaCha8Rng,
    blocks: &SystemBlocks,
    samples: usize,
    tally: &mut Tally,
) -> Result<()> {
    let mat = &blocks.material;
    let (gu, gp) = blocks.gram.as_ref().expect("assembled with Gram matrices");
    let c_factor = SymmetricFactor::new(&UpperCsc::from_symmetric(&blocks.c))?;
    let (n_u, n_p) = (blocks.n_u(), blocks.n_p());
    let cu = 2.0 * mat.tau + 2.0 * mat.iota;
    let cp = (mat.alpha * mat.alpha / mat.iota).max(mat.kappa_max_eigenvalue());
    for _ in 0..samples {
        let v = random_vec(rng, n_u);
        let q = random_vec(rng, n_p);
        let va = blocks.a.quadratic_form(&v);
        let qc = blocks.c.quadratic_form(&q);
        // scale-free forms: normalize by the energy norms
        if va > 0.0 && qc > 0.0 {
            let bq = dot(&q, &blocks.b.matvec(&v)).abs();
            tally.record(0, bq / (va.sqrt() * qc.sqrt()) - 1.0);
        }
        let (vg, qg) = (gu.quadratic_form(&v), gp.quadratic_form(&q));
        if vg > 0.0 {
            tally.record(1, (va - cu * vg) / vg);
        }
        if qg > 0.0 {
            tally.record(1, (qc - cp * qg) / qg);
        }
        if va > 0.0 {
            let bv = blocks.b.matvec(&v);
            let s = dot(&bv, &c_factor.solve(&bv));
            tally.record(2, -s / va);
        }
    }
    Ok(())
}

fn solver_properties(
    blocks: &SystemBlocks,
    solver_blocks: &SystemBlocks,
    constraints: &ContactConstraintSet,
    opts: &SolverOptions,
    tally: &mut Tally,
) -> Result<()> {
    let sol = solve_vi(solver_blocks, constraints, opts)?;
    let VISolution { u, p, .. } = &sol;
    let admissible_zero = constraints.rows.iter().all(|r| r.gap >= 0.0);
    if admissible_zero {
        let ua = blocks.a.quadratic_form(u);
        let pc = blocks.c.quadratic_form(p);
        let work = dot(&blocks.fe, u);
        let lhs = ua + pc + dot(&blocks.ff, p);
        tally.record(3, (lhs - work) / (1.0 + work.abs()));
        tally.count[3] += 1;
        let bound = DualNorm::new(blocks, Field::Displacement)?.eval(&blocks.fe)?
            + DualNorm::new(blocks, Field::Pressure)?.eval(&blocks.ff)?;
        let energy = (ua + pc).max(0.0).sqrt();
        tally.record(4, (energy - bound) / (1.0 + bound));
        tally.count[4] += 1;
    }
    let r = &sol.residuals;
    let worst = r.momentum.max(r.feasibility).max(r.dual).max(r.complementarity);
    tally.record(5, worst / sol.scale);
    tally.count[5] += 1;
    // the equality block is checked against the reference system
    let (_, r2) = block_residual(blocks, u, p);
    tally.record(6, max_abs(&r2) / (1.0 + max_abs(&blocks.ff)));
    tally.count[6] += 1;

    let mut diff: f64 = 0.0;
    let mut size: f64 = 0.0;
    for init in [InitialActiveSet::Empty, InitialActiveSet::All] {
        let o = SolverOptions { initial: init, ..*opts };
        let other = solve_vi(solver_blocks, constraints, &o)?;
        for (a, b) in other.u.iter().chain(&other.p).zip(u.iter().chain(p)) {
            diff = diff.max((a - b).abs());
            size = size.max(b.abs());
        }
    }
    tally.record(7, diff / (1.0 + size));
    tally.count[7] += 1;
    Ok(())
}

/// Runs every property on `opts.instances` seeded random instances. Instance 0
/// carries zero data. Solver failures are recorded as infinite violations.
pub fn run_properties(opts: &ValidateOptions) -> Result<PropertyReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tally = Tally {
        worst: vec![0.0; PROPERTIES.len()],
        count: vec![0; PROPERTIES.len()],
    };
    for k in 0..opts.instances {
        let inst = random_instance(&mut rng, k == 0)?;
        let (_, blocks, constraints) = instance_system(&inst)?;
        form_properties(&mut rng, &blocks, opts.samples, &mut tally)?;
        for c in &mut tally.count[..3] {
            *c += 1;
        }
        let mutated;
        let solver_blocks = match opts.mutation {
            Mutation::None => &blocks,
            Mutation::FlipCouplingSign => {
                let mut m = blocks.clone();
                m.b.scale(-1.0);
                mutated = m;
                &mutated
            }
        };
        if solver_properties(&blocks, solver_blocks, &constraints, &opts.solver, &mut tally).is_err() {
            for p in 3..PROPERTIES.len() {
                tally.record(p, f64::INFINITY);
                tally.count[p] += 1;
            }
        }
    }
    let properties = PROPERTIES
        .iter()
        .enumerate()
        .map(|(k, &(name, statement, tolerance))| PropertyResult {
            name: name.to_string(),
            statement: statement.to_string(),
            instances: tally.count[k],
            max_violation: tally.worst[k],
            tolerance,
            passed: tally.worst[k] <= tolerance,
        })
        .collect();
    Ok(PropertyReport {
        seed: opts.seed,
        instances: opts.instances,
        mutation: opts.mutation,
        properties,
        seconds: start.elapsed().as_secs_f64(),
    })
}
