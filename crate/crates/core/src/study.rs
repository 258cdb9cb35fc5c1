//! Refinement loops, reference solutions, error evaluation and outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adaptivity::{default_sigma, doerfler_mark, hp_decide, Action, MarkDecision};
use crate::assembly::{assemble, MaterialParams, SystemBlocks};
use crate::element::{FieldValues, LocalSolution};
use crate::error::{invalid, Error, Result};
use crate::estimator::{estimate, EstimatorData, EstimatorReport};
use crate::mesh::{side_reference_point, Mesh};
use crate::problem::{Manufactured, Problem, ProblemKind};
use crate::quad_basis::{gauss_legendre, MAX_DEGREE};
use crate::space::{contact_constraints, ContactConstraintSet, DofMap};
use crate::vi_solver::{
    reconstruct_lambda, solve_vi, BoundaryPairing, ContactMultiplier, SolverOptions, VISolution,
};
use crate::vtk::write_vtk;

/// Refinement strategy of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// uniform quartering at fixed degree `r`
    #[default]
    HUniform,
    /// uniform degree elevation on a fixed mesh
    RUniform,
    /// Dörfler marking and quartering at fixed degree `r`
    HAdaptive,
    /// Dörfler marking with a per-cell choice of quartering or degree elevation
    HpAdaptive,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| invalid(format!("unknown scheme {s:?}")))
    }
}

/// Which artifacts a study writes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub vtk: bool,
    pub contact_csv: bool,
    pub marking_csv: bool,
    /// samples per contact edge in `contact.csv`
    pub contact_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            vtk: true,
            contact_csv: true,
            marking_csv: true,
            contact_samples: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemKind,
    pub scheme: Scheme,
    /// displacement (and pressure) degree; starting degree for the `r` and `hp` schemes
    pub r: usize,
    /// subdivisions per side of the initial mesh
    pub initial_subdivisions: usize,
    /// Dörfler bulk parameter
    pub theta: f64,
    /// largest number of unknowns of a solved level
    pub max_dof: usize,
    /// refinement levels at most
    pub max_levels: usize,
    /// decay rate above which the hp scheme elevates the degree
    pub sigma_star: f64,
    /// cap on the size of the reference problem
    pub reference_max_dof: usize,
    pub pairing: BoundaryPairing,
    pub tolerances: SolverOptions,
    pub outputs: OutputConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::ContactSquare,
            scheme: Scheme::HUniform,
            r: 1,
            initial_subdivisions: 2,
            theta: 0.5,
            max_dof: 200_000,
            max_levels: 60,
            sigma_star: default_sigma(),
            reference_max_dof: 3_000_000,
            pairing: BoundaryPairing::Lobatto,
            tolerances: SolverOptions::default(),
            outputs: OutputConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(invalid("theta must lie in (0, 1]"));
        }
        if self.r == 0 || self.r >= MAX_DEGREE {
            return Err(invalid(format!("r must lie in 1..{MAX_DEGREE}")));
        }
        if self.initial_subdivisions == 0 {
            return Err(invalid("initial_subdivisions must be positive"));
        }
        if !(self.sigma_star > 0.0) {
            return Err(invalid("sigma_star must be positive"));
        }
        Ok(())
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConvergenceRecord {
    pub level: usize,
    /// free unknowns
    pub n: usize,
    pub err_u_sq: f64,
    pub err_p_sq: f64,
    pub err: f64,
    pub eta_total: f64,
    /// rate with respect to `n` against the previous level
    pub eoc: Option<f64>,
}

/// One marked cell of an adaptive step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MarkRecord {
    pub level: usize,
    pub cell: usize,
    pub eta_sq: f64,
    pub action: Action,
}

/// Everything computed on one mesh.
#[derive(Debug, Clone)]
pub struct SolvedLevel {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub blocks: SystemBlocks,
    pub constraints: ContactConstraintSet,
    pub solution: VISolution,
    pub lambda: ContactMultiplier,
    pub local: LocalSolution,
    pub report: Option<EstimatorReport>,
}

impl SolvedLevel {
    pub fn n(&self) -> usize {
        self.dofs.n_total()
    }
}

/// Assembles and solves `problem` on `mesh`; with `with_estimate` also
/// reconstructs the multiplier and evaluates the estimator.
pub fn solve_problem(
    problem: &Problem,
    mesh: &Mesh,
    opts: &SolverOptions,
    pairing: BoundaryPairing,
    with_estimate: bool,
) -> Result<SolvedLevel> {
    let dofs = DofMap::build(mesh)?;
    let blocks = assemble(
        mesh,
        &dofs,
        &problem.material,
        &|x| problem.fe(x),
        &|x| problem.ff(x),
        false,
    )?;
    let constraints = contact_constraints(mesh, &dofs, |x| problem.gap(x))?;
    let solution = solve_vi(&blocks, &constraints, opts)?;
    let lambda = reconstruct_lambda(&solution, &blocks, mesh, &dofs, &constraints, pairing)?;
    let local = LocalSolution::new(&dofs, &solution.u, &solution.p)?;
    let report = if with_estimate {
        let data = EstimatorData {
            material: problem.material,
            fe: &|x| problem.fe(x),
            ff: &|x| problem.ff(x),
            gap: &|x| problem.gap(x),
        };
        Some(estimate(mesh, &dofs, &local, &data, &constraints, Some(&lambda))?)
    } else {
        None
    };
    Ok(SolvedLevel {
        mesh: mesh.clone(),
        dofs,
        blocks,
        constraints,
        solution,
        lambda,
        local,
        report,
    })
}

/// The over-refined mesh: every cell quartered and every degree raised by one.
pub fn reference_mesh(finest: &Mesh) -> Result<Mesh> {
    finest.refine_uniform()?.raise_all_degrees(1)
}

/// Solves on the over-refined mesh of `finest`, refusing when the problem
/// would exceed `cap` unknowns.
pub fn reference_solution(
    problem: &Problem,
    finest: &Mesh,
    opts: &SolverOptions,
    pairing: BoundaryPairing,
    cap: usize,
) -> Result<SolvedLevel> {
    let mesh = reference_mesh(finest)?;
    let dofs = DofMap::build(&mesh)?;
    if dofs.n_total() > cap {
        return Err(Error::ReferenceTooLarge {
            dofs: dofs.n_total(),
            cap,
        });
    }
    drop(dofs);
    solve_problem(problem, &mesh, opts, pairing, false)
}

fn error_density(mat: &MaterialParams, a: &FieldValues, b: &FieldValues) -> (f64, f64) {
    let gu = [
        [a.grad_u[0][0] - b.grad_u[0][0], a.grad_u[0][1] - b.grad_u[0][1]],
        [a.grad_u[1][0] - b.grad_u[1][0], a.grad_u[1][1] - b.grad_u[1][1]],
    ];
    let e01 = 0.5 * (gu[0][1] + gu[1][0]);
    let div = gu[0][0] + gu[1][1];
    let eu = 2.0 * mat.tau * (gu[0][0] * gu[0][0] + 2.0 * e01 * e01 + gu[1][1] * gu[1][1])
        + mat.iota * div * div;
    let dp = a.p - b.p;
    let g = [a.grad_p[0] - b.grad_p[0], a.grad_p[1] - b.grad_p[1]];
    let k = mat.kappa;
    let kg = [k[0][0] * g[0] + k[0][1] * g[1], k[1][0] * g[0] + k[1][1] * g[1]];
    let ep = mat.alpha * mat.alpha / mat.iota * dp * dp + kg[0] * g[0] + kg[1] * g[1];
    (eu, ep)
}

/// Squared energy norms `(|u_f - u_c|_a^2, |p_f - p_c|_c^2)` of the difference
/// of a coarse solution and a solution on a refinement of its mesh, integrated
/// on the fine mesh with `degree + 2` Gauss points per direction.
pub fn energy_error(
    coarse_mesh: &Mesh,
    coarse: &LocalSolution,
    fine_mesh: &Mesh,
    fine: &LocalSolution,
    mat: &MaterialParams,
) -> Result<(f64, f64)> {
    let (mut su, mut sp) = (0.0, 0.0);
    for (pos, &e) in fine_mesh.active().iter().enumerate() {
        let anc = fine_mesh
            .ancestor_in(e, coarse_mesh)
            .ok_or_else(|| invalid("meshes are not nested"))?;
        let cpos = coarse
            .position(anc)
            .ok_or_else(|| invalid("coarse solution does not match its mesh"))?;
        let (r, s) = fine.degrees(pos);
        let rule = gauss_legendre::<f64>(r.max(s) + 2)?;
        for (qj, &wj) in rule.weights.iter().enumerate() {
            for (qi, &wi) in rule.weights.iter().enumerate() {
                let (xi, eta) = (rule.points[qi], rule.points[qj]);
                let f = fine.eval(fine_mesh, e, pos, xi, eta, false)?;
                let c = if anc == e {
                    coarse.eval(coarse_mesh, anc, cpos, xi, eta, false)?
                } else {
                    let (a, b) = coarse_mesh
                        .inverse_map(anc, f.x)
                        .ok_or_else(|| Error::Geometry("point location failed".into()))?;
                    coarse.eval(coarse_mesh, anc, cpos, a.clamp(-1.0, 1.0), b.clamp(-1.0, 1.0), false)?
                };
                let j = fine_mesh.jacobian(e, xi, eta);
                let w = wi * wj * (j[0][0] * j[1][1] - j[0][1] * j[1][0]);
                let (eu, ep) = error_density(mat, &f, &c);
                su += w * eu;
                sp += w * ep;
            }
        }
    }
    Ok((su, sp))
}

/// Squared energy errors against the manufactured solution.
pub fn exact_error(mesh: &Mesh, local: &LocalSolution, exact: &Manufactured) -> Result<(f64, f64)> {
    let (mut su, mut sp) = (0.0, 0.0);
    for (pos, &e) in mesh.active().iter().enumerate() {
        let (r, s) = local.degrees(pos);
        let rule = gauss_legendre::<f64>(r.max(s) + 3)?;
        for (qj, &wj) in rule.weights.iter().enumerate() {
            for (qi, &wi) in rule.weights.iter().enumerate() {
                let (xi, eta) = (rule.points[qi], rule.points[qj]);
                let f = local.eval(mesh, e, pos, xi, eta, false)?;
                let x = f.x;
                let ex = FieldValues {
                    x,
                    u: exact.displacement(x),
                    grad_u: [exact.u[0].grad(x), exact.u[1].grad(x)],
                    p: exact.pressure(x),
                    grad_p: exact.p.grad(x),
                    ..FieldValues::default()
                };
                let j = mesh.jacobian(e, xi, eta);
                let w = wi * wj * (j[0][0] * j[1][1] - j[0][1] * j[1][0]);
                let (eu, ep) = error_density(&exact.material, &f, &ex);
                su += w * eu;
                sp += w * ep;
            }
        }
    }
    Ok((su, sp))
}

/// `eoc_k = log(err_{k-1} / err_k) / log(N_k / N_{k-1})`; `None` for the
/// first entry and whenever an error vanishes or `N` does not grow.
pub fn compute_eoc(points: &[(usize, f64)]) -> Vec<Option<f64>> {
    let mut out = vec![None; points.len()];
    for k in 1..points.len() {
        let (n0, e0) = points[k - 1];
        let (n1, e1) = points[k];
        if e0 > 0.0 && e1 > 0.0 && n1 > n0 {
            out[k] = Some((e0 / e1).ln() / (n1 as f64 / n0 as f64).ln());
        }
    }
    out
}

/// Outcome of a study.
#[derive(Debug, Clone)]
pub struct StudyResult {
    pub records: Vec<ConvergenceRecord>,
    pub marks: Vec<MarkRecord>,
    /// unknowns of the reference problem (`None` with an exact solution)
    pub reference_n: Option<usize>,
    /// finest level, kept for contact sampling
    pub finest: SolvedLevel,
}

struct StoredLevel {
    mesh: Mesh,
    local: LocalSolution,
    n: usize,
    eta_total: f64,
    cell_eta: Vec<f64>,
}

fn next_mesh(
    config: &StudyConfig,
    level: &SolvedLevel,
    index: usize,
    marks: &mut Vec<MarkRecord>,
) -> Result<Option<Mesh>> {
    let max_r = MAX_DEGREE - 1;
    let mesh = &level.mesh;
    match config.scheme {
        Scheme::HUniform => Ok(Some(mesh.refine_uniform()?)),
        Scheme::RUniform => {
            if mesh.active().iter().any(|&e| mesh.degree(e) >= max_r) {
                return Ok(None);
            }
            Ok(Some(mesh.raise_all_degrees(1)?))
        }
        Scheme::HAdaptive | Scheme::HpAdaptive => {
            let report = level.report.as_ref().expect("adaptive levels are estimated");
            let eta = report.indicators();
            let chosen = doerfler_mark(&eta, config.theta)?;
            let mut decision = MarkDecision::default();
            for pos in chosen {
                let e = mesh.active()[pos];
                let action = if config.scheme == Scheme::HAdaptive || mesh.degree(e) >= max_r {
                    Action::H
                } else {
                    hp_decide(&level.local, pos, config.sigma_star)?
                };
                decision.marked.push((e, action));
                marks.push(MarkRecord {
                    level: index,
                    cell: e,
                    eta_sq: eta[pos],
                    action,
                });
            }
            Ok(Some(mesh.adapt(&decision.h_cells(), &decision.p_cells())?))
        }
    }
}

/// Runs the refinement loop of `config`, then evaluates the error of every
/// level and writes the artifacts to `out` (if given).
pub fn run_study(config: &StudyConfig, out: Option<&Path>) -> Result<StudyResult> {
    config.validate()?;
    let problem = Problem::new(config.problem);
    let adaptive = matches!(config.scheme, Scheme::HAdaptive | Scheme::HpAdaptive);
    let mut mesh = problem.mesh(config.initial_subdivisions, config.r)?;
    let first_n = DofMap::build(&mesh)?.n_total();
    if first_n > config.max_dof {
        return Err(invalid(format!(
            "max_dof {} is below the {} unknowns of the initial mesh",
            config.max_dof, first_n
        )));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut stored: Vec<StoredLevel> = Vec::new();
    let mut marks = Vec::new();
    let mut finest: Option<SolvedLevel> = None;
    for index in 0..config.max_levels {
        let level = solve_problem(&problem, &mesh, &config.tolerances, config.pairing, true)
            .map_err(|e| Error::AtLevel {
                level: index,
                source: Box::new(e),
            })?;
        let report = level.report.as_ref().expect("estimated");
        stored.push(StoredLevel {
            mesh: level.mesh.clone(),
            local: level.local.clone(),
            n: level.n(),
            eta_total: report.eta(),
            cell_eta: report.indicators(),
        });
        let next = next_mesh(config, &level, index, &mut marks)?;
        finest = Some(level);
        let Some(next) = next else { break };
        if DofMap::build(&next)?.n_total() > config.max_dof {
            break;
        }
        mesh = next;
    }
    let finest = finest.expect("at least one level");

    let mut errors = Vec::with_capacity(stored.len());
    let mut reference_n = None;
    match problem.exact() {
        Some(exact) => {
            for s in &stored {
                errors.push(exact_error(&s.mesh, &s.local, exact)?);
            }
        }
        None => {
            let reference = reference_solution(
                &problem,
                &finest.mesh,
                &config.tolerances,
                config.pairing,
                config.reference_max_dof,
            )?;
            reference_n = Some(reference.n());
            for s in &stored {
                errors.push(energy_error(
                    &s.mesh,
                    &s.local,
                    &reference.mesh,
                    &reference.local,
                    &problem.material,
                )?);
            }
        }
    }
    let pairs: Vec<(usize, f64)> = stored
        .iter()
        .zip(&errors)
        .map(|(s, e)| (s.n, (e.0 + e.1).sqrt()))
        .collect();
    let eoc = compute_eoc(&pairs);
    let records: Vec<ConvergenceRecord> = stored
        .iter()
        .enumerate()
        .map(|(k, s)| ConvergenceRecord {
            level: k,
            n: s.n,
            err_u_sq: errors[k].0,
            err_p_sq: errors[k].1,
            err: pairs[k].1,
            eta_total: s.eta_total,
            eoc: eoc[k],
        })
        .collect();

    if let Some(dir) = out {
        std::fs::write(dir.join("convergence.csv"), convergence_csv(&records, config))?;
        if config.outputs.marking_csv && adaptive {
            std::fs::write(dir.join("marking.csv"), marking_csv(&marks))?;
        }
        if config.outputs.vtk {
            for (k, s) in stored.iter().enumerate() {
                write_vtk(
                    &level_vtk_path(dir, k),
                    &s.mesh,
                    &s.local,
                    &[("eta_sq", s.cell_eta.clone())],
                )?;
            }
        }
        if config.outputs.contact_csv {
            std::fs::write(
                dir.join("contact.csv"),
                contact_csv(&finest, &problem, config.outputs.contact_samples)?,
            )?;
        }
    }
    Ok(StudyResult {
        records,
        marks,
        reference_n,
        finest,
    })
}

pub fn level_vtk_path(dir: &Path, level: usize) -> PathBuf {
    dir.join(format!("level_{level:03}.vtk"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.12e}"))
}

/// CSV text of the convergence table.
pub fn convergence_csv(records: &[ConvergenceRecord], config: &StudyConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# problem={:?} scheme={:?} r={} theta={} errors={}",
        config.problem,
        config.scheme,
        config.r,
        config.theta,
        if config.problem == ProblemKind::Manufactured {
            "exact solution, degree+3 Gauss points per direction"
        } else {
            "reference = quartered finest mesh with degree+1, degree+2 Gauss points per direction"
        }
    );
    let _ = writeln!(s, "level,N,err_u_sq,err_p_sq,err,eta_total,eoc");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            r.level,
            r.n,
            r.err_u_sq,
            r.err_p_sq,
            r.err,
            r.eta_total,
            fmt_opt(r.eoc)
        );
    }
    s
}

pub fn marking_csv(marks: &[MarkRecord]) -> String {
    let mut s = String::from("level,cell,eta_sq,action\n");
    for m in marks {
        let _ = writeln!(s, "{},{},{:.12e},{:?}", m.level, m.cell, m.eta_sq, m.action);
    }
    s
}

/// One sample of the contact boundary.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ContactSample {
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    /// `u . n - g`
    pub gap_residual: f64,
}

/// Samples `lambda_hr` and `u . n - g` along the contact boundary, ordered by
/// position along the boundary (x, then y).
pub fn contact_samples(level: &SolvedLevel, problem: &Problem, per_edge: usize) -> Result<Vec<ContactSample>> {
    let per_edge = per_edge.max(2);
    let mut out = Vec::new();
    for (idx, edge) in level.constraints.edges.iter().enumerate() {
        let pos = level
            .local
            .position(edge.cell)
            .ok_or_else(|| invalid("contact edge on an inactive cell"))?;
        let n = level.mesh.side_normal(edge.cell, edge.side);
        for k in 0..per_edge {
            let t = -1.0 + 2.0 * k as f64 / (per_edge - 1) as f64;
            let (xi, eta) = side_reference_point(edge.side, t);
            let f = level.local.eval(&level.mesh, edge.cell, pos, xi, eta, false)?;
            out.push(ContactSample {
                x: f.x[0],
                y: f.x[1],
                lambda: level.lambda.eval(&level.constraints, idx, t),
                gap_residual: f.u[0] * n[0] + f.u[1] * n[1] - problem.gap(f.x),
            });
        }
    }
    out.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    Ok(out)
}

pub fn contact_csv(level: &SolvedLevel, problem: &Problem, per_edge: usize) -> Result<String> {
    let mut s = String::from("x,y,lambda,un_minus_g\n");
    for c in contact_samples(level, problem, per_edge)? {
        let _ = writeln!(s, "{:.12e},{:.12e},{:.12e},{:.12e}", c.x, c.y, c.lambda, c.gap_residual);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_examples() {
        let e = compute_eoc(&[(100, 1e-1), (400, 5e-2)]);
        assert_eq!(e[0], None);
        assert!((e[1].unwrap() - 0.5).abs() < 1e-14);
        let c = compute_eoc(&[(10, 1.0), (20, 1.0)]);
        assert_eq!(c[1], Some(0.0));
        assert_eq!(compute_eoc(&[(10, 1.0), (20, 0.0)])[1], None);
    }

    #[test]
    fn scheme_names() {
        assert_eq!("hp-adaptive".parse::<Scheme>().unwrap(), Scheme::HpAdaptive);
        assert_eq!("h-uniform".parse::<Scheme>().unwrap(), Scheme::HUniform);
        assert!("p-uniform".parse::<Scheme>().is_err());
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = StudyConfig::from_json(r#"{"problem":"contact-square","scheme":"h-adaptive","r":2,"theta":0.5,"max_dof":1000,"tolerances":{},"outputs":{}}"#).unwrap();
        assert_eq!(c.scheme, Scheme::HAdaptive);
        assert_eq!(c.r, 2);
        assert!(StudyConfig::from_json(r#"{"theta":0}"#).is_err());
        assert!(StudyConfig::from_json(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn reference_of_single_cell() {
        let m = crate::mesh::unit_square_mesh(1).unwrap();
        let r = reference_mesh(&m).unwrap();
        assert_eq!(r.num_active(), 4);
        assert!(r.active().iter().all(|&e| r.degree(e) == 2));
    }
}
