//! Legacy ASCII VTK export of the background mesh (with element
//! classification) and of the discrete interface triangulation.

use std::io::Write;

use crate::mesh::{CutMeshTopology, ElemClass};
use crate::Result;

/// Write the background tetrahedra with a cell scalar marking the
/// classification (-1 minus, 0 interface, +1 plus).
pub fn export_mesh_vtk(topo: &CutMeshTopology, path: &str) -> Result<()> {
    let mesh = &topo.cm.mesh;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "ivem background mesh")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", mesh.nodes.len())?;
    for x in &mesh.nodes {
        writeln!(f, "{:.17e} {:.17e} {:.17e}", x.x, x.y, x.z)?;
    }
    writeln!(f, "CELLS {} {}", mesh.elems.len(), 5 * mesh.elems.len())?;
    for t in &mesh.elems {
        writeln!(f, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(f, "CELL_TYPES {}", mesh.elems.len())?;
    for _ in &mesh.elems {
        writeln!(f, "10")?;
    }
    writeln!(f, "CELL_DATA {}", mesh.elems.len())?;
    writeln!(f, "SCALARS class int 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for c in &topo.cm.class {
        let v = match c {
            ElemClass::Minus => -1,
            ElemClass::Interface => 0,
            ElemClass::Plus => 1,
        };
        writeln!(f, "{v}")?;
    }
    f.flush()?;
    Ok(())
}

/// Write the fitted interface triangulation (the per-element fans) as a
/// triangle soup.
pub fn export_interface_vtk(topo: &CutMeshTopology, path: &str) -> Result<()> {
    let mut pts = Vec::new();
    let mut tris = Vec::new();
    for cut in topo.cm.cut_elems.iter().flatten() {
        for fan in &cut.gamma_tris {
            for t in fan {
                let base = pts.len();
                pts.extend_from_slice(t);
                tris.push([base, base + 1, base + 2]);
            }
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "ivem discrete interface")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", pts.len())?;
    for x in &pts {
        writeln!(f, "{:.17e} {:.17e} {:.17e}", x.x, x.y, x.z)?;
    }
    writeln!(f, "CELLS {} {}", tris.len(), 4 * tris.len())?;
    for t in &tris {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(f, "CELL_TYPES {}", tris.len())?;
    for _ in &tris {
        writeln!(f, "5")?;
    }
    f.flush()?;
    Ok(())
}
