//! 1-irregular quadrilateral meshes with boundary tags, bilinear element maps
//! and quartering refinement with closure.
//!
//! Cells are kept in a refinement forest and never deleted: a refined
//! snapshot contains every cell of its ancestors (with the same ids), so a
//! coarse solution can be evaluated on a fine mesh by walking parent links.
//!
//! Vertex order of a cell is counter-clockwise and matches the reference
//! corners `(-1,-1), (1,-1), (1,1), (-1,1)`. Local sides are oriented along
//! increasing reference coordinate:
//!
//! ```text
//!   v3 ---side 2---> v2
//!    ^                ^
//!  side 3          side 1
//!    |                |
//!   v0 ---side 0---> v1
//! ```

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad_basis::MAX_DEGREE;

pub type ElemId = usize;
pub type VertexId = usize;
pub type Point = [f64; 2];

/// Unordered vertex pair identifying a geometric edge.
pub type EdgeKey = (VertexId, VertexId);

pub fn edge_key(a: VertexId, b: VertexId) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DisplacementTag {
    Dirichlet,
    Traction,
    Contact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PressureTag {
    Pressure,
    Flux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryTags {
    pub displacement: DisplacementTag,
    pub pressure: PressureTag,
}

impl BoundaryTags {
    pub const fn new(displacement: DisplacementTag, pressure: PressureTag) -> Self {
        Self {
            displacement,
            pressure,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub vertices: [VertexId; 4],
    pub parent: Option<ElemId>,
    pub children: Option<[ElemId; 4]>,
    pub level: u32,
    /// displacement degree
    pub r: usize,
    /// pressure degree
    pub s: usize,
}

/// What lies across one side of an active cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideKind {
    Boundary(BoundaryTags),
    Conforming {
        neighbor: ElemId,
        neighbor_side: usize,
    },
    /// This side is subdivided by a hanging node; `fine[0]` covers the half
    /// starting at the side's first vertex.
    Master {
        fine: [(ElemId, usize); 2],
        hanging: VertexId,
    },
    /// This side is one half (`half` 0 or 1 along the master side orientation)
    /// of a side of a coarser cell.
    Slave {
        master: ElemId,
        master_side: usize,
        half: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<Cell>,
    active: Vec<ElemId>,
    is_active: Vec<bool>,
    midpoints: HashMap<EdgeKey, VertexId>,
    split_edge: HashMap<VertexId, EdgeKey>,
    boundary: HashMap<EdgeKey, BoundaryTags>,
    sides: Vec<Option<[SideKind; 4]>>,
}

/// Reference coordinates of side `side` at side parameter `t`.
pub fn side_reference_point(side: usize, t: f64) -> (f64, f64) {
    match side {
        0 => (t, -1.0),
        1 => (1.0, t),
        2 => (t, 1.0),
        _ => (-1.0, t),
    }
}

/// Local node `(i, j)` of a degree-`p` tensor element lying on `side` at
/// position `k` along the side orientation.
pub fn side_node(side: usize, k: usize, p: usize) -> (usize, usize) {
    match side {
        0 => (k, 0),
        1 => (p, k),
        2 => (k, p),
        _ => (0, k),
    }
}

impl Mesh {
    /// Builds a mesh from counter-clockwise quadrilaterals. `tag` receives the
    /// midpoint and outward normal of each boundary edge.
    pub fn new(
        vertices: Vec<Point>,
        quads: Vec<[VertexId; 4]>,
        degree: usize,
        tag: impl Fn(Point, Point) -> BoundaryTags,
    ) -> Result<Self> {
        check_degree(degree)?;
        if quads.is_empty() {
            return Err(invalid("mesh needs at least one cell"));
        }
        for q in &quads {
            if q.iter().any(|&v| v >= vertices.len()) {
                return Err(invalid("cell references a missing vertex"));
            }
        }
        let cells: Vec<Cell> = quads
            .iter()
            .map(|&q| Cell {
                vertices: q,
                parent: None,
                children: None,
                level: 0,
                r: degree,
                s: degree,
            })
            .collect();
        let mut count: HashMap<EdgeKey, usize> = HashMap::new();
        for c in &cells {
            for k in 0..4 {
                let (a, b) = side_vertices(&c.vertices, k);
                *count.entry(edge_key(a, b)).or_default() += 1;
            }
        }
        let mut boundary = HashMap::new();
        for c in &cells {
            for k in 0..4 {
                let (a, b) = side_vertices(&c.vertices, k);
                if count[&edge_key(a, b)] == 1 {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
                    let n = outward_normal(pa, pb, k);
                    boundary.insert(edge_key(a, b), tag(mid, n));
                }
            }
        }
        let n = cells.len();
        let mut mesh = Self {
            vertices,
            cells,
            active: (0..n).collect(),
            is_active: vec![true; n],
            midpoints: HashMap::new(),
            split_edge: HashMap::new(),
            boundary,
            sides: Vec::new(),
        };
        mesh.rebuild_topology()?;
        mesh.audit()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> Point {
        self.vertices[v]
    }

    /// Active (leaf) cells in ascending id order.
    pub fn active(&self) -> &[ElemId] {
        &self.active
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    /// Size of the cell forest (active and refined cells).
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_active(&self, e: ElemId) -> bool {
        self.is_active.get(e).copied().unwrap_or(false)
    }

    pub fn cell(&self, e: ElemId) -> &Cell {
        &self.cells[e]
    }

    pub fn degree(&self, e: ElemId) -> usize {
        self.cells[e].r
    }

    pub fn pressure_degree(&self, e: ElemId) -> usize {
        self.cells[e].s
    }

    pub fn sides(&self, e: ElemId) -> &[SideKind; 4] {
        self.sides[e]
            .as_ref()
            .expect("topology is only stored for active cells")
    }

    pub fn side_vertices(&self, e: ElemId, side: usize) -> (VertexId, VertexId) {
        side_vertices(&self.cells[e].vertices, side)
    }

    pub fn boundary_tags(&self, key: EdgeKey) -> Option<BoundaryTags> {
        self.boundary.get(&key).copied()
    }

    /// The vertex at the middle of `key`, if that edge has been split.
    pub fn midpoint(&self, key: EdgeKey) -> Option<VertexId> {
        self.midpoints.get(&key).copied()
    }

    pub fn corners(&self, e: ElemId) -> [Point; 4] {
        self.cells[e].vertices.map(|v| self.vertices[v])
    }

    /// Bilinear map from the reference square onto cell `e`.
    pub fn map(&self, e: ElemId, xi: f64, eta: f64) -> Point {
        let c = self.corners(e);
        let n = bilinear_weights(xi, eta);
        let mut p = [0.0; 2];
        for k in 0..4 {
            p[0] += n[k] * c[k][0];
            p[1] += n[k] * c[k][1];
        }
        p
    }

    /// Jacobian `d(x, y) / d(xi, eta)` as `[[dx/dxi, dx/deta], [dy/dxi, dy/deta]]`.
    pub fn jacobian(&self, e: ElemId, xi: f64, eta: f64) -> [[f64; 2]; 2] {
        jacobian_of(&self.corners(e), xi, eta)
    }

    /// `d^2 x / (d xi d eta)`; the only nonzero second derivative of a bilinear map.
    pub fn map_twist(&self, e: ElemId) -> Point {
        let c = self.corners(e);
        [
            (c[0][0] - c[1][0] + c[2][0] - c[3][0]) / 4.0,
            (c[0][1] - c[1][1] + c[2][1] - c[3][1]) / 4.0,
        ]
    }

    /// Reference coordinates of physical point `p` in cell `e` (Newton on the bilinear map).
    pub fn inverse_map(&self, e: ElemId, p: Point) -> Option<(f64, f64)> {
        let c = self.corners(e);
        let (mut xi, mut eta) = (0.0, 0.0);
        let scale = self.diameter(e);
        for _ in 0..50 {
            let n = bilinear_weights(xi, eta);
            let mut f = [-p[0], -p[1]];
            for k in 0..4 {
                f[0] += n[k] * c[k][0];
                f[1] += n[k] * c[k][1];
            }
            let j = jacobian_of(&c, xi, eta);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            let dxi = (j[1][1] * f[0] - j[0][1] * f[1]) / det;
            let deta = (-j[1][0] * f[0] + j[0][0] * f[1]) / det;
            xi -= dxi;
            eta -= deta;
            if f[0].abs().max(f[1].abs()) <= 1e-15 * scale.max(1.0) && dxi.abs().max(deta.abs()) < 1e-14 {
                break;
            }
        }
        Some((xi, eta))
    }

    /// Whether `p` lies in cell `e` (closed, with relative slack `tol` in reference coordinates).
    pub fn contains(&self, e: ElemId, p: Point, tol: f64) -> bool {
        match self.inverse_map(e, p) {
            Some((xi, eta)) => xi.abs() <= 1.0 + tol && eta.abs() <= 1.0 + tol,
            None => false,
        }
    }

    /// Element diameter `h_T` (longest diagonal).
    pub fn diameter(&self, e: ElemId) -> f64 {
        let c = self.corners(e);
        dist(c[0], c[2]).max(dist(c[1], c[3]))
    }

    pub fn side_length(&self, e: ElemId, side: usize) -> f64 {
        let (a, b) = self.side_vertices(e, side);
        dist(self.vertices[a], self.vertices[b])
    }

    /// Outward unit normal of a (straight) side.
    pub fn side_normal(&self, e: ElemId, side: usize) -> Point {
        let (a, b) = self.side_vertices(e, side);
        outward_normal(self.vertices[a], self.vertices[b], side)
    }

    pub fn area(&self, e: ElemId) -> f64 {
        // det J is affine in each reference variable: the 2-point Gauss rule is exact
        let g = 1.0 / 3f64.sqrt();
        let mut a = 0.0;
        for &xi in &[-g, g] {
            for &eta in &[-g, g] {
                let j = self.jacobian(e, xi, eta);
                a += j[0][0] * j[1][1] - j[0][1] * j[1][0];
            }
        }
        a
    }

    /// Cells edge-adjacent to `e`, including across hanging sides.
    pub fn neighbors(&self, e: ElemId) -> Vec<ElemId> {
        let mut out = Vec::with_capacity(6);
        for s in self.sides(e) {
            match *s {
                SideKind::Conforming { neighbor, .. } => out.push(neighbor),
                SideKind::Master { fine, .. } => {
                    out.push(fine[0].0);
                    out.push(fine[1].0);
                }
                SideKind::Slave { master, .. } => out.push(master),
                SideKind::Boundary(_) => {}
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of hanging nodes (sides of kind `Master`).
    pub fn num_hanging_nodes(&self) -> usize {
        self.active
            .iter()
            .map(|&e| {
                self.sides(e)
                    .iter()
                    .filter(|s| matches!(s, SideKind::Master { .. }))
                    .count()
            })
            .sum()
    }

    /// Active ancestor-or-self of `e` (a cell of `self`) among the active cells of `coarse`.
    pub fn ancestor_in(&self, e: ElemId, coarse: &Mesh) -> Option<ElemId> {
        let mut cur = e;
        loop {
            if coarse.is_active(cur) {
                return (coarse.cells[cur].vertices == self.cells[cur].vertices).then_some(cur);
            }
            cur = self.cells.get(cur)?.parent?;
        }
    }

    /// Quarters every marked cell, plus the closure needed to keep at most one
    /// hanging node per edge. Children inherit tags and degrees.
    pub fn refine(&self, marked: &[ElemId]) -> Result<Mesh> {
        if marked.is_empty() {
            return Err(invalid("refine needs at least one marked cell"));
        }
        let mut set = BTreeSet::new();
        for &e in marked {
            if !self.is_active(e) {
                return Err(invalid(format!("cell {e} is not an active cell")));
            }
            set.insert(e);
        }
        // closure fixpoint: a cell may only be split if no side is a slave
        loop {
            let mut added = Vec::new();
            for &e in &set {
                for s in self.sides(e) {
                    if let SideKind::Slave { master, .. } = *s {
                        if !set.contains(&master) {
                            added.push(master);
                        }
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            set.extend(added);
        }
        let mut out = self.clone();
        for &e in &set {
            out.split(e);
        }
        out.active = (0..out.cells.len()).filter(|&e| out.is_active[e]).collect();
        out.rebuild_topology()?;
        Ok(out)
    }

    /// Quarters every active cell.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        self.refine(&self.active.clone())
    }

    /// Sets both degrees of `e` to `r` and adjusts neighbors so that edge-adjacent
    /// degrees differ by at most one.
    pub fn set_degree(&self, e: ElemId, r: usize) -> Result<Mesh> {
        let mut out = self.clone();
        out.set_degrees_in_place(&[(e, r)])?;
        Ok(out)
    }

    /// Batch form of [`Mesh::set_degree`].
    pub fn set_degrees(&self, targets: &[(ElemId, usize)]) -> Result<Mesh> {
        let mut out = self.clone();
        out.set_degrees_in_place(targets)?;
        Ok(out)
    }

    /// Sets only the pressure degree of `e`, with the same neighbor closure on pressure degrees.
    pub fn set_pressure_degree(&self, e: ElemId, s: usize) -> Result<Mesh> {
        check_degree(s)?;
        if !self.is_active(e) {
            return Err(invalid(format!("cell {e} is not an active cell")));
        }
        let mut out = self.clone();
        out.cells[e].s = s;
        out.degree_closure(vec![e], |c| &mut c.s);
        Ok(out)
    }

    /// Raises the degree of every cell in `p_marked` by one, then quarters the
    /// cells in `h_marked`. Refinement keeps the degree rule intact, so the
    /// combined result satisfies both closure rules.
    pub fn adapt(&self, h_marked: &[ElemId], p_marked: &[ElemId]) -> Result<Mesh> {
        let targets: Vec<(ElemId, usize)> = p_marked
            .iter()
            .map(|&e| (e, self.degree(e) + 1))
            .collect();
        let raised = if targets.is_empty() {
            self.clone()
        } else {
            self.set_degrees(&targets)?
        };
        if h_marked.is_empty() {
            Ok(raised)
        } else {
            raised.refine(h_marked)
        }
    }

    /// Same mesh with every degree (both fields) raised by `inc`.
    pub fn raise_all_degrees(&self, inc: usize) -> Result<Mesh> {
        let mut out = self.clone();
        for &e in &self.active {
            let r = out.cells[e].r + inc;
            let s = out.cells[e].s + inc;
            check_degree(r)?;
            check_degree(s)?;
            out.cells[e].r = r;
            out.cells[e].s = s;
        }
        Ok(out)
    }

    fn set_degrees_in_place(&mut self, targets: &[(ElemId, usize)]) -> Result<()> {
        let mut work = Vec::new();
        for &(e, r) in targets {
            check_degree(r)?;
            if !self.is_active(e) {
                return Err(invalid(format!("cell {e} is not an active cell")));
            }
            if self.cells[e].r != r {
                self.cells[e].r = r;
                work.push(e);
            }
            self.cells[e].s = r;
        }
        self.degree_closure(work, |c| &mut c.r);
        for &e in &self.active.clone() {
            self.cells[e].s = self.cells[e].r;
        }
        Ok(())
    }

    /// Worklist fixpoint: neighbors of a changed cell move toward it until the
    /// difference is at most one.
    fn degree_closure(&mut self, mut work: Vec<ElemId>, field: impl Fn(&mut Cell) -> &mut usize) {
        while let Some(e) = work.pop() {
            let re = *field(&mut self.cells[e]);
            for n in self.neighbors(e) {
                let rn = field(&mut self.cells[n]);
                if *rn + 1 < re {
                    *rn = re - 1;
                    work.push(n);
                } else if *rn > re + 1 {
                    *rn = re + 1;
                    work.push(n);
                }
            }
        }
    }

    fn midpoint_vertex(&mut self, a: VertexId, b: VertexId) -> VertexId {
        let key = edge_key(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let m = self.vertices.len();
        self.vertices
            .push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
        self.midpoints.insert(key, m);
        self.split_edge.insert(m, key);
        if let Some(&t) = self.boundary.get(&key) {
            self.boundary.insert(edge_key(a, m), t);
            self.boundary.insert(edge_key(m, b), t);
        }
        m
    }

    fn split(&mut self, e: ElemId) {
        let [v0, v1, v2, v3] = self.cells[e].vertices;
        let m01 = self.midpoint_vertex(v0, v1);
        let m12 = self.midpoint_vertex(v1, v2);
        let m23 = self.midpoint_vertex(v3, v2);
        let m30 = self.midpoint_vertex(v0, v3);
        let c = self.vertices.len();
        let pts = self.corners(e);
        self.vertices.push([
            (pts[0][0] + pts[1][0] + pts[2][0] + pts[3][0]) / 4.0,
            (pts[0][1] + pts[1][1] + pts[2][1] + pts[3][1]) / 4.0,
        ]);
        let quads = [
            [v0, m01, c, m30],
            [m01, v1, m12, c],
            [c, m12, v2, m23],
            [m30, c, m23, v3],
        ];
        let parent = &self.cells[e];
        let (level, r, s) = (parent.level + 1, parent.r, parent.s);
        let first = self.cells.len();
        for q in quads {
            self.cells.push(Cell {
                vertices: q,
                parent: Some(e),
                children: None,
                level,
                r,
                s,
            });
            self.is_active.push(true);
        }
        self.cells[e].children = Some([first, first + 1, first + 2, first + 3]);
        self.is_active[e] = false;
    }

    fn rebuild_topology(&mut self) -> Result<()> {
        let mut by_edge: HashMap<EdgeKey, Vec<(ElemId, usize)>> = HashMap::new();
        for &e in &self.active {
            for k in 0..4 {
                let (a, b) = side_vertices(&self.cells[e].vertices, k);
                by_edge.entry(edge_key(a, b)).or_default().push((e, k));
            }
        }
        let mut sides = vec![None; self.cells.len()];
        for &e in &self.active {
            let mut kinds = [SideKind::Boundary(BoundaryTags::new(
                DisplacementTag::Traction,
                PressureTag::Flux,
            )); 4];
            for (k, kind) in kinds.iter_mut().enumerate() {
                let (a, b) = side_vertices(&self.cells[e].vertices, k);
                let key = edge_key(a, b);
                let owners = &by_edge[&key];
                if owners.len() == 2 {
                    let other = if owners[0].0 == e { owners[1] } else { owners[0] };
                    *kind = SideKind::Conforming {
                        neighbor: other.0,
                        neighbor_side: other.1,
                    };
                    continue;
                }
                if owners.len() > 2 {
                    return Err(Error::Audit(format!("edge {key:?} shared by more than two cells")));
                }
                if let Some(&m) = self.midpoints.get(&key) {
                    let first = by_edge.get(&edge_key(a, m));
                    let second = by_edge.get(&edge_key(m, b));
                    match (first, second) {
                        (Some(f), Some(s)) if f.len() == 1 && s.len() == 1 => {
                            *kind = SideKind::Master {
                                fine: [f[0], s[0]],
                                hanging: m,
                            };
                            continue;
                        }
                        _ => {
                            if !self.boundary.contains_key(&key) {
                                return Err(Error::Audit(format!(
                                    "more than one hanging node on edge {key:?} of cell {e}"
                                )));
                            }
                        }
                    }
                }
                if let Some(master) = self.find_master(&by_edge, a, b) {
                    *kind = master;
                    continue;
                }
                match self.boundary.get(&key) {
                    Some(&t) => *kind = SideKind::Boundary(t),
                    None => {
                        return Err(Error::Audit(format!(
                            "interior edge {key:?} of cell {e} has no neighbor"
                        )))
                    }
                }
            }
            sides[e] = Some(kinds);
        }
        self.sides = sides;
        Ok(())
    }

    fn find_master(
        &self,
        by_edge: &HashMap<EdgeKey, Vec<(ElemId, usize)>>,
        a: VertexId,
        b: VertexId,
    ) -> Option<SideKind> {
        for (m, o) in [(a, b), (b, a)] {
            let Some(&(c, d)) = self.split_edge.get(&m) else {
                continue;
            };
            if o != c && o != d {
                continue;
            }
            if let Some(owners) = by_edge.get(&(c, d)) {
                if owners.len() == 1 {
                    let (master, master_side) = owners[0];
                    let (ma, _) = side_vertices(&self.cells[master].vertices, master_side);
                    let half = if o == ma { 0 } else { 1 };
                    return Some(SideKind::Slave {
                        master,
                        master_side,
                        half,
                    });
                }
            }
        }
        None
    }

    /// Checks every structural invariant: 1-irregularity and master/slave
    /// consistency, degree jumps, positive Jacobians and boundary tag coverage.
    pub fn audit(&self) -> Result<()> {
        self.audit_impl(true)
    }

    /// Like [`Mesh::audit`] but without requiring Dirichlet boundaries.
    pub fn audit_structure(&self) -> Result<()> {
        self.audit_impl(false)
    }

    fn audit_impl(&self, tags: bool) -> Result<()> {
        let mut has_dirichlet = false;
        let mut has_pressure = false;
        let mut dirichlet_vertices = BTreeSet::new();
        let mut contact_vertices = BTreeSet::new();
        for &e in &self.active {
            let c = self.corners(e);
            for &(xi, eta) in &[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                let j = jacobian_of(&c, xi, eta);
                if j[0][0] * j[1][1] - j[0][1] * j[1][0] <= 0.0 {
                    return Err(Error::Audit(format!("cell {e} has a non-positive Jacobian")));
                }
            }
            for (k, s) in self.sides(e).iter().enumerate() {
                match *s {
                    SideKind::Boundary(t) => {
                        let (a, b) = self.side_vertices(e, k);
                        if t.displacement == DisplacementTag::Dirichlet {
                            has_dirichlet = true;
                            dirichlet_vertices.extend([a, b]);
                        }
                        if t.displacement == DisplacementTag::Contact {
                            contact_vertices.extend([a, b]);
                        }
                        if t.pressure == PressureTag::Pressure {
                            has_pressure = true;
                        }
                    }
                    SideKind::Slave {
                        master,
                        master_side,
                        ..
                    } => match self.sides(master)[master_side] {
                        SideKind::Master { fine, .. } if fine.contains(&(e, k)) => {}
                        _ => {
                            return Err(Error::Audit(format!(
                                "slave side {k} of cell {e} is not registered at its master"
                            )))
                        }
                    },
                    _ => {}
                }
            }
            for n in self.neighbors(e) {
                if self.cells[n].r.abs_diff(self.cells[e].r) > 1
                    || self.cells[n].s.abs_diff(self.cells[e].s) > 1
                {
                    return Err(Error::Audit(format!(
                        "degrees of neighbors {e} and {n} differ by more than one"
                    )));
                }
            }
        }
        if !tags {
            return Ok(());
        }
        if !has_dirichlet {
            return Err(Error::Audit("no Dirichlet displacement boundary".into()));
        }
        if !has_pressure {
            return Err(Error::Audit("no Dirichlet pressure boundary".into()));
        }
        if dirichlet_vertices.intersection(&contact_vertices).next().is_some() {
            return Err(Error::Audit(
                "Dirichlet and contact boundaries touch".into(),
            ));
        }
        Ok(())
    }

    /// Same mesh with cells renumbered: the active cells are re-created as a
    /// fresh level-0 mesh in the order given by `order` (a permutation of the
    /// active index range). Degrees and tags are preserved.
    pub fn flatten_permuted(&self, order: &[usize]) -> Result<Mesh> {
        if order.len() != self.active.len() {
            return Err(invalid("permutation length mismatch"));
        }
        let quads: Vec<[VertexId; 4]> = order
            .iter()
            .map(|&i| self.cells[self.active[i]].vertices)
            .collect();
        let mut mesh = Mesh {
            vertices: self.vertices.clone(),
            cells: Vec::new(),
            active: Vec::new(),
            is_active: Vec::new(),
            midpoints: self.midpoints.clone(),
            split_edge: self.split_edge.clone(),
            boundary: self.boundary.clone(),
            sides: Vec::new(),
        };
        for (new_id, &i) in order.iter().enumerate() {
            let old = &self.cells[self.active[i]];
            mesh.cells.push(Cell {
                vertices: quads[new_id],
                parent: None,
                children: None,
                level: old.level,
                r: old.r,
                s: old.s,
            });
            mesh.is_active.push(true);
            mesh.active.push(new_id);
        }
        mesh.rebuild_topology()?;
        mesh.audit()?;
        Ok(mesh)
    }
}

fn check_degree(r: usize) -> Result<()> {
    if r == 0 {
        return Err(invalid("polynomial degree must be >= 1"));
    }
    if r > MAX_DEGREE {
        return Err(Error::UnsupportedDegree {
            degree: r,
            max: MAX_DEGREE,
        });
    }
    Ok(())
}

pub fn side_vertices(v: &[VertexId; 4], side: usize) -> (VertexId, VertexId) {
    match side {
        0 => (v[0], v[1]),
        1 => (v[1], v[2]),
        2 => (v[3], v[2]),
        _ => (v[0], v[3]),
    }
}

fn outward_normal(a: Point, b: Point, side: usize) -> Point {
    let t = [b[0] - a[0], b[1] - a[1]];
    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
    // sides 0 and 1 run counter-clockwise, sides 2 and 3 clockwise
    let n = [t[1] / len, -t[0] / len];
    if side < 2 {
        n
    } else {
        [-n[0], -n[1]]
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn bilinear_weights(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta) / 4.0,
        (1.0 + xi) * (1.0 - eta) / 4.0,
        (1.0 + xi) * (1.0 + eta) / 4.0,
        (1.0 - xi) * (1.0 + eta) / 4.0,
    ]
}

fn jacobian_of(c: &[Point; 4], xi: f64, eta: f64) -> [[f64; 2]; 2] {
    let dxi = [-(1.0 - eta) / 4.0, (1.0 - eta) / 4.0, (1.0 + eta) / 4.0, -(1.0 + eta) / 4.0];
    let deta = [-(1.0 - xi) / 4.0, -(1.0 + xi) / 4.0, (1.0 + xi) / 4.0, (1.0 - xi) / 4.0];
    let mut j = [[0.0; 2]; 2];
    for k in 0..4 {
        j[0][0] += dxi[k] * c[k][0];
        j[0][1] += deta[k] * c[k][0];
        j[1][0] += dxi[k] * c[k][1];
        j[1][1] += deta[k] * c[k][1];
    }
    j
}

/// Boundary tagging used by the contact experiments on the unit square:
/// top `{Dirichlet, Pressure}`, bottom `{Contact, Flux}`, sides `{Traction, Flux}`.
pub fn contact_square_tags(mid: Point, normal: Point) -> BoundaryTags {
    let _ = mid;
    if normal[1] > 0.5 {
        BoundaryTags::new(DisplacementTag::Dirichlet, PressureTag::Pressure)
    } else if normal[1] < -0.5 {
        BoundaryTags::new(DisplacementTag::Contact, PressureTag::Flux)
    } else {
        BoundaryTags::new(DisplacementTag::Traction, PressureTag::Flux)
    }
}

/// `m x m` uniform mesh of the unit square with the contact tagging.
pub fn unit_square_mesh(m: usize) -> Result<Mesh> {
    unit_square_mesh_tagged(m, 1, contact_square_tags)
}

/// `m x m` uniform mesh of the unit square with custom tags and uniform degree.
pub fn unit_square_mesh_tagged(
    m: usize,
    degree: usize,
    tag: impl Fn(Point, Point) -> BoundaryTags,
) -> Result<Mesh> {
    rectangle_mesh(m, m, [0.0, 0.0], [1.0, 1.0], degree, tag)
}

/// `mx x my` uniform mesh of an axis-aligned rectangle.
pub fn rectangle_mesh(
    mx: usize,
    my: usize,
    lo: Point,
    hi: Point,
    degree: usize,
    tag: impl Fn(Point, Point) -> BoundaryTags,
) -> Result<Mesh> {
    if mx < 1 || my < 1 {
        return Err(invalid(format!("need at least one subdivision, got {mx}x{my}")));
    }
    let mut vertices = Vec::with_capacity((mx + 1) * (my + 1));
    for j in 0..=my {
        for i in 0..=mx {
            vertices.push([
                lo[0] + (hi[0] - lo[0]) * i as f64 / mx as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / my as f64,
            ]);
        }
    }
    let id = |i: usize, j: usize| j * (mx + 1) + i;
    let mut quads = Vec::with_capacity(mx * my);
    for j in 0..my {
        for i in 0..mx {
            quads.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::new(vertices, quads, degree, tag)
}
