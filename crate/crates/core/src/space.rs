//! Degree-of-freedom management for the displacement and pressure spaces.
//!
//! Each field is a continuous tensor-Lagrange space on Gauss–Lobatto nodes.
//! Raw unknowns live on vertices, geometric edges and cell interiors. The
//! trace on every geometric edge is a single polynomial whose degree follows
//! the minimum rule; element nodes on that edge (including nodes on the two
//! halves of a hanging edge) are evaluations of it. Hanging vertices and
//! Dirichlet unknowns are constrained, and constraints are resolved to
//! affine combinations of free unknowns before anything is assembled.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{
    edge_key, side_node, DisplacementTag, EdgeKey, ElemId, Mesh, Point, PressureTag, SideKind,
    VertexId,
};
use crate::quad_basis::LagrangeBasis;

/// Weighted reference to a free unknown.
pub type Term = (usize, f64);

/// One continuous scalar field: local-node to free-unknown tables for every active cell.
#[derive(Debug, Clone)]
pub struct ScalarSpace {
    degrees: Vec<usize>,
    node_start: Vec<usize>,
    term_start: Vec<usize>,
    terms: Vec<Term>,
    n_free: usize,
    n_raw: usize,
    n_constrained: usize,
    free_points: Vec<Point>,
}

impl ScalarSpace {
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Raw unknowns after identification of shared vertices and edges.
    pub fn n_raw(&self) -> usize {
        self.n_raw
    }

    pub fn n_constrained(&self) -> usize {
        self.n_constrained
    }

    /// Degree on the cell at active position `pos`.
    pub fn degree(&self, pos: usize) -> usize {
        self.degrees[pos]
    }

    /// Free unknowns (with weights) realizing local node `local = j * (p + 1) + i`.
    pub fn node_terms(&self, pos: usize, local: usize) -> &[Term] {
        let slot = self.node_start[pos] + local;
        &self.terms[self.term_start[slot]..self.term_start[slot + 1]]
    }

    /// Physical location of each free unknown.
    pub fn free_points(&self) -> &[Point] {
        &self.free_points
    }

    /// Local nodal coefficients on the cell at `pos` from a free vector.
    pub fn local_coeffs(&self, pos: usize, x: &[f64]) -> Vec<f64> {
        let n = (self.degrees[pos] + 1).pow(2);
        (0..n)
            .map(|l| self.node_terms(pos, l).iter().map(|&(i, w)| w * x[i]).sum())
            .collect()
    }

    /// Sorted free unknowns touched by the cell at `pos`.
    pub fn cell_unknowns(&self, pos: usize) -> Vec<usize> {
        let n = (self.degrees[pos] + 1).pow(2);
        let mut out: Vec<usize> = (0..n)
            .flat_map(|l| self.node_terms(pos, l).iter().map(|t| t.0))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Numbering of all discrete unknowns. Displacement components are stacked:
/// free displacement index `c * n + i` is component `c` of scalar unknown `i`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub displacement: ScalarSpace,
    pub pressure: ScalarSpace,
    position: Vec<usize>,
    active: Vec<ElemId>,
}

impl DofMap {
    pub fn build(mesh: &Mesh) -> Result<Self> {
        mesh.audit()?;
        Self::build_impl(mesh, true)
    }

    /// Numbering that ignores Dirichlet tags: every boundary unknown is free.
    /// The resulting operators are singular (rigid motions, constants).
    pub fn build_unconstrained(mesh: &Mesh) -> Result<Self> {
        mesh.audit_structure()?;
        Self::build_impl(mesh, false)
    }

    fn build_impl(mesh: &Mesh, clamp: bool) -> Result<Self> {
        let displacement = build_scalar(
            mesh,
            |e| mesh.degree(e),
            |tags| clamp && tags.displacement == DisplacementTag::Dirichlet,
        )?;
        let pressure = build_scalar(
            mesh,
            |e| mesh.pressure_degree(e),
            |tags| clamp && tags.pressure == PressureTag::Pressure,
        )?;
        let mut position = vec![usize::MAX; mesh.num_cells()];
        for (pos, &e) in mesh.active().iter().enumerate() {
            position[e] = pos;
        }
        Ok(Self {
            displacement,
            pressure,
            position,
            active: mesh.active().to_vec(),
        })
    }

    /// Number of free displacement unknowns (both components).
    pub fn n_u(&self) -> usize {
        2 * self.displacement.n_free
    }

    pub fn n_p(&self) -> usize {
        self.pressure.n_free
    }

    pub fn n_total(&self) -> usize {
        self.n_u() + self.n_p()
    }

    /// Active position of cell `e`.
    pub fn position(&self, e: ElemId) -> Option<usize> {
        self.position.get(e).copied().filter(|&p| p != usize::MAX)
    }

    pub fn active(&self) -> &[ElemId] {
        &self.active
    }

    /// Local coefficients of displacement component `comp` on the cell at `pos`.
    pub fn displacement_coeffs(&self, pos: usize, comp: usize, u: &[f64]) -> Vec<f64> {
        let n = self.displacement.n_free;
        self.displacement.local_coeffs(pos, &u[comp * n..(comp + 1) * n])
    }
}

struct GeoEdge {
    lo: VertexId,
    hi: VertexId,
    degree: usize,
    first: usize,
}

enum Constraint {
    Free,
    Zero,
    Combination(Vec<Term>),
}

fn build_scalar(
    mesh: &Mesh,
    degree_of: impl Fn(ElemId) -> usize,
    is_dirichlet: impl Fn(&crate::mesh::BoundaryTags) -> bool,
) -> Result<ScalarSpace> {
    let active = mesh.active();
    let mut bases: HashMap<usize, LagrangeBasis<f64>> = HashMap::new();
    let mut basis = |p: usize| -> Result<LagrangeBasis<f64>> {
        if let Some(b) = bases.get(&p) {
            return Ok(b.clone());
        }
        let b = LagrangeBasis::new(p)?;
        bases.insert(p, b.clone());
        Ok(b)
    };

    // geometric edge degrees by the minimum rule
    let mut edge_degree: HashMap<EdgeKey, usize> = HashMap::new();
    for &e in active {
        let p = degree_of(e);
        for (k, side) in mesh.sides(e).iter().enumerate() {
            let key = match side {
                SideKind::Slave {
                    master,
                    master_side,
                    ..
                } => {
                    let (a, b) = mesh.side_vertices(*master, *master_side);
                    edge_key(a, b)
                }
                _ => {
                    let (a, b) = mesh.side_vertices(e, k);
                    edge_key(a, b)
                }
            };
            edge_degree
                .entry(key)
                .and_modify(|d| *d = (*d).min(p))
                .or_insert(p);
        }
    }

    // raw numbering, cell by cell
    let mut n_raw = 0usize;
    let mut raw_points: Vec<Point> = Vec::new();
    let mut vertex_raw: HashMap<VertexId, usize> = HashMap::new();
    let mut edges: HashMap<EdgeKey, GeoEdge> = HashMap::new();
    let mut interior_first: Vec<usize> = Vec::with_capacity(active.len());
    let mut constraint: Vec<Constraint> = Vec::new();
    let mut edge_basis_cache: HashMap<usize, LagrangeBasis<f64>> = HashMap::new();

    for &e in active {
        let p = degree_of(e);
        for &v in &mesh.cell(e).vertices {
            vertex_raw.entry(v).or_insert_with(|| {
                raw_points.push(mesh.vertex(v));
                constraint.push(Constraint::Free);
                n_raw += 1;
                n_raw - 1
            });
        }
        for (k, side) in mesh.sides(e).iter().enumerate() {
            let (a, b) = match side {
                SideKind::Slave {
                    master,
                    master_side,
                    ..
                } => mesh.side_vertices(*master, *master_side),
                _ => mesh.side_vertices(e, k),
            };
            let key = edge_key(a, b);
            if edges.contains_key(&key) {
                continue;
            }
            let q = edge_degree[&key];
            let nodes = basis(q)?.nodes().to_vec();
            let first = n_raw;
            let (plo, phi) = (mesh.vertex(key.0), mesh.vertex(key.1));
            for &t in &nodes[1..q] {
                let s = (t + 1.0) / 2.0;
                raw_points.push([
                    plo[0] + s * (phi[0] - plo[0]),
                    plo[1] + s * (phi[1] - plo[1]),
                ]);
                constraint.push(Constraint::Free);
                n_raw += 1;
            }
            for v in [key.0, key.1] {
                vertex_raw.entry(v).or_insert_with(|| {
                    raw_points.push(mesh.vertex(v));
                    constraint.push(Constraint::Free);
                    n_raw += 1;
                    n_raw - 1
                });
            }
            edges.insert(
                key,
                GeoEdge {
                    lo: key.0,
                    hi: key.1,
                    degree: q,
                    first,
                },
            );
        }
        interior_first.push(n_raw);
        let nodes = basis(p)?.nodes().to_vec();
        for j in 1..p {
            for i in 1..p {
                raw_points.push(mesh.map(e, nodes[i], nodes[j]));
                constraint.push(Constraint::Free);
                n_raw += 1;
            }
        }
    }

    let edge_raw = |edge: &GeoEdge, k: usize| -> usize {
        if k == 0 {
            vertex_raw[&edge.lo]
        } else if k == edge.degree {
            vertex_raw[&edge.hi]
        } else {
            edge.first + k - 1
        }
    };
    let mut edge_eval = |edge: &GeoEdge, t: f64| -> Result<Vec<Term>> {
        let b = match edge_basis_cache.get(&edge.degree) {
            Some(b) => b.clone(),
            None => {
                let b = LagrangeBasis::new(edge.degree)?;
                edge_basis_cache.insert(edge.degree, b.clone());
                b
            }
        };
        let mut out = Vec::new();
        for k in 0..=edge.degree {
            let (w, _) = b.eval(k, t)?;
            if w != 0.0 {
                out.push((edge_raw(edge, k), w));
            }
        }
        Ok(out)
    };

    // hanging vertices evaluate the master edge polynomial at its midpoint
    for &e in active {
        for (k, side) in mesh.sides(e).iter().enumerate() {
            if let SideKind::Master { hanging, .. } = side {
                let (a, b) = mesh.side_vertices(e, k);
                let edge = &edges[&edge_key(a, b)];
                let combo = edge_eval(edge, 0.0)?;
                constraint[vertex_raw[hanging]] = Constraint::Combination(combo);
            }
        }
    }
    // Dirichlet unknowns
    for &e in active {
        for (k, side) in mesh.sides(e).iter().enumerate() {
            if let SideKind::Boundary(tags) = side {
                if is_dirichlet(tags) {
                    let (a, b) = mesh.side_vertices(e, k);
                    let edge = &edges[&edge_key(a, b)];
                    for kk in 0..=edge.degree {
                        constraint[edge_raw(edge, kk)] = Constraint::Zero;
                    }
                }
            }
        }
    }

    // free numbering and resolution of constraint chains
    let mut free_index = vec![usize::MAX; n_raw];
    let mut free_points = Vec::new();
    for r in 0..n_raw {
        if matches!(constraint[r], Constraint::Free) {
            free_index[r] = free_points.len();
            free_points.push(raw_points[r]);
        }
    }
    let n_free = free_points.len();
    let mut resolved: Vec<Option<Vec<Term>>> = vec![None; n_raw];
    for r in 0..n_raw {
        resolve(r, &constraint, &free_index, &mut resolved, 0)?;
    }

    // local node tables
    let mut degrees = Vec::with_capacity(active.len());
    let mut node_start = Vec::with_capacity(active.len() + 1);
    let mut term_start = vec![0usize];
    let mut terms: Vec<Term> = Vec::new();
    for (pos, &e) in active.iter().enumerate() {
        let p = degree_of(e);
        degrees.push(p);
        node_start.push(term_start.len() - 1);
        let nodes = basis(p)?.nodes().to_vec();
        let verts = mesh.cell(e).vertices;
        // raw combination of every local node
        let mut local: Vec<Vec<Term>> = vec![Vec::new(); (p + 1) * (p + 1)];
        let idx = |i: usize, j: usize| j * (p + 1) + i;
        for (c, &(i, j)) in [(0, 0), (p, 0), (p, p), (0, p)].iter().enumerate() {
            local[idx(i, j)] = vec![(vertex_raw[&verts[c]], 1.0)];
        }
        for j in 1..p {
            for i in 1..p {
                local[idx(i, j)] = vec![(interior_first[pos] + (j - 1) * (p - 1) + (i - 1), 1.0)];
            }
        }
        for (k, side) in mesh.sides(e).iter().enumerate() {
            let (a, b) = mesh.side_vertices(e, k);
            // edge parameter of the side's start and end vertex
            let (edge, ta, tb) = match side {
                SideKind::Slave {
                    master,
                    master_side,
                    ..
                } => {
                    let (ma, mb) = mesh.side_vertices(*master, *master_side);
                    let edge = &edges[&edge_key(ma, mb)];
                    let t_of = |v: VertexId| {
                        if v == edge.lo {
                            -1.0
                        } else if v == edge.hi {
                            1.0
                        } else {
                            0.0
                        }
                    };
                    (edge, t_of(a), t_of(b))
                }
                _ => {
                    let edge = &edges[&edge_key(a, b)];
                    if a == edge.lo {
                        (edge, -1.0, 1.0)
                    } else {
                        (edge, 1.0, -1.0)
                    }
                }
            };
            for (kk, &s) in nodes.iter().enumerate().take(p).skip(1) {
                // exact for the symmetric full-edge case
                let t = if ta == -1.0 && tb == 1.0 {
                    s
                } else if ta == 1.0 && tb == -1.0 {
                    -s
                } else {
                    ta + (s + 1.0) / 2.0 * (tb - ta)
                };
                let (i, j) = side_node(k, kk, p);
                local[idx(i, j)] = edge_eval(edge, t)?;
            }
        }
        for combo in &local {
            let mut acc: Vec<Term> = Vec::new();
            for &(r, w) in combo {
                for &(f, wf) in resolved[r].as_ref().expect("resolved") {
                    acc.push((f, w * wf));
                }
            }
            terms.extend(merge_terms(acc));
            term_start.push(terms.len());
        }
    }
    node_start.push(term_start.len() - 1);

    let n_constrained = n_raw - n_free;
    Ok(ScalarSpace {
        degrees,
        node_start,
        term_start,
        terms,
        n_free,
        n_raw,
        n_constrained,
        free_points,
    })
}

fn resolve(
    r: usize,
    constraint: &[Constraint],
    free_index: &[usize],
    resolved: &mut Vec<Option<Vec<Term>>>,
    depth: usize,
) -> Result<()> {
    if resolved[r].is_some() {
        return Ok(());
    }
    if depth > 64 {
        return Err(Error::Audit("cyclic hanging-node constraints".into()));
    }
    let out = match &constraint[r] {
        Constraint::Free => vec![(free_index[r], 1.0)],
        Constraint::Zero => Vec::new(),
        Constraint::Combination(combo) => {
            let mut acc = Vec::new();
            for &(m, w) in combo {
                resolve(m, constraint, free_index, resolved, depth + 1)?;
                for &(f, wf) in resolved[m].as_ref().expect("resolved") {
                    acc.push((f, w * wf));
                }
            }
            merge_terms(acc)
        }
    };
    resolved[r] = Some(out);
    Ok(())
}

fn merge_terms(mut acc: Vec<Term>) -> Vec<Term> {
    acc.sort_by_key(|t| t.0);
    let mut out: Vec<Term> = Vec::with_capacity(acc.len());
    for (i, w) in acc {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += w,
            _ => out.push((i, w)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

/// One discrete non-penetration inequality `sum_k w_k u[i_k] <= gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactRow {
    /// free displacement indices (stacked components) with weights
    pub terms: Vec<Term>,
    pub point: Point,
    pub normal: Point,
    pub gap: f64,
}

impl ContactRow {
    /// `Some((index, weight))` when the row constrains a single unknown.
    pub fn simple_bound(&self) -> Option<Term> {
        (self.terms.len() == 1).then(|| self.terms[0])
    }

    pub fn normal_displacement(&self, u: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, w)| w * u[i]).sum()
    }
}

/// A contact edge and the rows at its Gauss–Lobatto points, in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactEdge {
    pub cell: ElemId,
    pub side: usize,
    pub rows: Vec<usize>,
}

/// The discrete contact cone: one row per Gauss–Lobatto point of each contact edge.
#[derive(Debug, Clone, Default)]
pub struct ContactConstraintSet {
    pub rows: Vec<ContactRow>,
    pub edges: Vec<ContactEdge>,
}

impl ContactConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of rows that are plain bounds on one unknown.
    pub fn num_simple_bounds(&self) -> usize {
        self.rows.iter().filter(|r| r.simple_bound().is_some()).count()
    }

    /// Largest violation `max(0, u.n - g)` over all rows.
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.normal_displacement(u) - r.gap).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Contact edges as `(cell, side)` in active order.
pub fn contact_sides(mesh: &Mesh) -> Vec<(ElemId, usize)> {
    let mut out = Vec::new();
    for &e in mesh.active() {
        for (k, side) in mesh.sides(e).iter().enumerate() {
            if let SideKind::Boundary(t) = side {
                if t.displacement == DisplacementTag::Contact {
                    out.push((e, k));
                }
            }
        }
    }
    out
}

/// Builds the rows `(u . n)(F_e(x_i)) <= g(F_e(x_i))` at the `r_e + 1`
/// Gauss–Lobatto points of every contact edge. Points shared by two edges
/// with the same normal produce a single row.
pub fn contact_constraints(
    mesh: &Mesh,
    dofs: &DofMap,
    gap: impl Fn(Point) -> f64,
) -> Result<ContactConstraintSet> {
    let n = dofs.displacement.n_free();
    let mut rows: Vec<ContactRow> = Vec::new();
    let mut edges = Vec::new();
    let mut at_vertex: HashMap<(VertexId, u64, u64), usize> = HashMap::new();
    for (e, k) in contact_sides(mesh) {
        let mut edge_rows = Vec::new();
        let pos = dofs.position(e).expect("active cell");
        let p = dofs.displacement.degree(pos);
        let normal = mesh.side_normal(e, k);
        let nodes = LagrangeBasis::<f64>::new(p)?.nodes().to_vec();
        let (va, vb) = mesh.side_vertices(e, k);
        for (kk, &s) in nodes.iter().enumerate() {
            let vertex = if kk == 0 {
                Some(va)
            } else if kk == p {
                Some(vb)
            } else {
                None
            };
            if let Some(v) = vertex {
                if let Some(&row) = at_vertex.get(&(v, normal[0].to_bits(), normal[1].to_bits())) {
                    edge_rows.push(row);
                    continue;
                }
            }
            let (xi, eta) = crate::mesh::side_reference_point(k, s);
            let point = mesh.map(e, xi, eta);
            let g = gap(point);
            if !g.is_finite() {
                return Err(Error::InvalidGap {
                    x: point[0],
                    y: point[1],
                });
            }
            let (i, j) = side_node(k, kk, p);
            let local = j * (p + 1) + i;
            let mut acc = Vec::new();
            for (comp, &nc) in normal.iter().enumerate() {
                if nc != 0.0 {
                    for &(f, w) in dofs.displacement.node_terms(pos, local) {
                        acc.push((comp * n + f, nc * w));
                    }
                }
            }
            let terms = merge_terms(acc);
            if let Some(v) = vertex {
                at_vertex.insert((v, normal[0].to_bits(), normal[1].to_bits()), rows.len());
            }
            edge_rows.push(rows.len());
            rows.push(ContactRow {
                terms,
                point,
                normal,
                gap: g,
            });
        }
        edges.push(ContactEdge {
            cell: e,
            side: k,
            rows: edge_rows,
        });
    }
    Ok(ContactConstraintSet { rows, edges })
}
