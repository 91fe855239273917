//! Legacy-VTK ASCII export of the final mesh with the solution as point data
//! and the stress magnitude as cell data.

use std::io::Write;

use crate::error::Result;
use crate::fem::{P0VectorField, P1Function};
use crate::mesh::Mesh;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_vtk(
    w: &mut impl Write,
    mesh: &Mesh,
    u: &P1Function,
    sigma: &P0VectorField,
) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "p-Laplace solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for v in &mesh.vertices {
        writeln!(w, "{} {} 0.0", fmt(v.x), fmt(v.y))?;
    }
    let nt = mesh.n_triangles();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t.v[0], t.v[1], t.v[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
    writeln!(w, "SCALARS u double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in &u.coeffs {
        writeln!(w, "{}", fmt(*c))?;
    }
    writeln!(w, "CELL_DATA {nt}")?;
    writeln!(w, "SCALARS sigma_magnitude double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for t in 0..nt {
        writeln!(w, "{}", fmt(sigma.magnitude(t)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Triangle, Vertex};
    use std::sync::Arc;

    #[test]
    fn vtk_structure_is_well_formed() {
        let vertices = vec![
            Vertex { x: 0.0, y: 0.0, on_boundary: true, on_curved_boundary: false },
            Vertex { x: 1.0, y: 0.0, on_boundary: true, on_curved_boundary: false },
            Vertex { x: 0.0, y: 1.0, on_boundary: true, on_curved_boundary: false },
        ];
        let mesh = Arc::new(
            Mesh::build(
                vertices,
                vec![Triangle { v: [0, 1, 2], refinement_edge: 0, parent: None }],
            )
            .unwrap(),
        );
        let u = P1Function::from_coeffs(mesh.clone(), vec![0.0, 1.0, 2.0]);
        let sigma = P0VectorField::from_values(mesh.clone(), vec![[3.0, 4.0]]);
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, &u, &sigma).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert!(lines.contains(&"POINTS 3 double"));
        assert!(lines.contains(&"CELLS 1 4"));
        assert!(lines.contains(&"3 0 1 2"));
        assert!(lines.contains(&"CELL_TYPES 1"));
        assert!(lines.contains(&"POINT_DATA 3"));
        assert!(lines.contains(&"SCALARS u double 1"));
        assert!(lines.contains(&"CELL_DATA 1"));
        // |sigma| = 5 on the single cell
        assert_eq!(lines.last().unwrap().parse::<f64>().unwrap(), 5.0);
        // deterministic output
        let mut buf2 = Vec::new();
        write_vtk(&mut buf2, &mesh, &u, &sigma).unwrap();
        assert_eq!(text.as_bytes(), buf2.as_slice());
    }
}
