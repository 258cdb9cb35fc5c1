//! Legacy ASCII VTK output.

use std::fmt::Write as _;
use std::path::Path;

use crate::element::LocalSolution;
use crate::error::Result;
use crate::mesh::Mesh;

/// Writes the active cells of `mesh` as an unstructured grid. Each cell of
/// degree `r` is split into `r x r` sub-quads so that higher-order fields are
/// resolved; point data `u` and `p` are sampled per cell (discontinuous
/// storage) and `cell_data` entries are repeated on the sub-quads.
pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    local: &LocalSolution,
    cell_data: &[(&str, Vec<f64>)],
) -> Result<()> {
    std::fs::write(path, vtk_string(mesh, local, cell_data)?)?;
    Ok(())
}

pub fn vtk_string(mesh: &Mesh, local: &LocalSolution, cell_data: &[(&str, Vec<f64>)]) -> Result<String> {
    let mut points = Vec::new();
    let mut u = Vec::new();
    let mut p = Vec::new();
    let mut quads: Vec<[usize; 4]> = Vec::new();
    let mut owner = Vec::new();
    for (pos, &e) in mesh.active().iter().enumerate() {
        let k = local.degrees(pos).0.max(1);
        let base = points.len();
        for j in 0..=k {
            for i in 0..=k {
                let xi = -1.0 + 2.0 * i as f64 / k as f64;
                let eta = -1.0 + 2.0 * j as f64 / k as f64;
                let f = local.eval(mesh, e, pos, xi, eta, false)?;
                points.push(f.x);
                u.push(f.u);
                p.push(f.p);
            }
        }
        let id = |i: usize, j: usize| base + j * (k + 1) + i;
        for j in 0..k {
            for i in 0..k {
                quads.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
                owner.push(pos);
            }
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "biot-hp solution");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", points.len());
    for x in &points {
        let _ = writeln!(s, "{:.12e} {:.12e} 0", x[0], x[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", quads.len(), 5 * quads.len());
    for q in &quads {
        let _ = writeln!(s, "4 {} {} {} {}", q[0], q[1], q[2], q[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", quads.len());
    for _ in &quads {
        let _ = writeln!(s, "9");
    }
    let _ = writeln!(s, "POINT_DATA {}", points.len());
    let _ = writeln!(s, "VECTORS u double");
    for v in &u {
        let _ = writeln!(s, "{:.12e} {:.12e} 0", v[0], v[1]);
    }
    let _ = writeln!(s, "SCALARS p double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for v in &p {
        let _ = writeln!(s, "{v:.12e}");
    }
    let _ = writeln!(s, "CELL_DATA {}", quads.len());
    let _ = writeln!(s, "SCALARS degree int 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for &o in &owner {
        let _ = writeln!(s, "{}", local.degrees(o).0);
    }
    for (name, values) in cell_data {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for &o in &owner {
            let _ = writeln!(s, "{:.12e}", values[o]);
        }
    }
    Ok(s)
}
