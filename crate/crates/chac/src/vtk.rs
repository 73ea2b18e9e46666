//! Legacy ASCII VTK snapshots.
//!
//! Each quadratic triangle is written as four linear sub-triangles through
//! its edge midpoints, with the field values taken at the six DOF points,
//! so the snapshot is exact at every DOF of the quadratic solution. Points
//! are duplicated per element (and unwrapped across the periodic seam),
//! which keeps seam elements contiguous in the rendered picture.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::fespace::{FeSpace, FieldVec};

/// Local sub-triangulation of the P2 element: corners 0,1,2 and edge
/// midpoints 3=(0,1), 4=(1,2), 5=(2,0).
const SUB_TRIANGLES: [[usize; 3]; 4] = [[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]];

/// Writes one snapshot with point scalars `rho` and `eta`.
pub fn write_snapshot(
    w: &mut impl Write,
    space: &FeSpace,
    rho: &FieldVec,
    eta: &FieldVec,
    title: &str,
) -> Result<()> {
    let mesh = space.mesh();
    let n_el = mesh.n_triangles();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;

    writeln!(w, "POINTS {} double", 6 * n_el)?;
    for e in 0..n_el {
        let c = mesh.corner_coords(e)?;
        let mids = [
            [(c[0][0] + c[1][0]) / 2.0, (c[0][1] + c[1][1]) / 2.0],
            [(c[1][0] + c[2][0]) / 2.0, (c[1][1] + c[2][1]) / 2.0],
            [(c[2][0] + c[0][0]) / 2.0, (c[2][1] + c[0][1]) / 2.0],
        ];
        for p in c.iter().chain(mids.iter()) {
            writeln!(w, "{:.17e} {:.17e} 0.0", p[0], p[1])?;
        }
    }

    writeln!(w, "CELLS {} {}", 4 * n_el, 4 * n_el * 4)?;
    for e in 0..n_el {
        for sub in SUB_TRIANGLES {
            writeln!(w, "3 {} {} {}", 6 * e + sub[0], 6 * e + sub[1], 6 * e + sub[2])?;
        }
    }
    writeln!(w, "CELL_TYPES {}", 4 * n_el)?;
    for _ in 0..4 * n_el {
        writeln!(w, "5")?;
    }

    writeln!(w, "POINT_DATA {}", 6 * n_el)?;
    for (name, field) in [("rho", rho), ("eta", eta)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for e in 0..n_el {
            let dofs = space.element_dofs(e);
            for d in dofs {
                writeln!(w, "{:.17e}", field.coefficients[d])?;
            }
        }
    }
    Ok(())
}

/// Writes a snapshot file `snapshot_<step>.vtk` in `dir`.
pub fn write_snapshot_file(
    dir: &Path,
    step: usize,
    space: &FeSpace,
    rho: &FieldVec,
    eta: &FieldVec,
) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("snapshot_{step:06}.vtk"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    write_snapshot(&mut f, space, rho, eta, &format!("step {step}"))?;
    f.flush()?;
    Ok(path)
}
