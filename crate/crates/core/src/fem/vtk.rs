//! Legacy-VTK (ASCII unstructured grid) export.

use std::fmt::Write;

use super::mesh::{Mesh, Subdomain};
use crate::error::{Error, Result};

/// Builder for one `.vtk` document. Subdomain tags are always written as
/// cell data.
pub struct VtkWriter<'a> {
    mesh: &'a Mesh,
    point_data: Vec<(String, Vec<f64>, usize)>,
    cell_data: Vec<(String, Vec<f64>)>,
}

impl<'a> VtkWriter<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        Self { mesh, point_data: Vec::new(), cell_data: Vec::new() }
    }

    pub fn point_scalar(mut self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.mesh.n_vertices() {
            return Err(Error::Shape(format!("point field {name}: {} values", values.len())));
        }
        self.point_data.push((name.to_string(), values.to_vec(), 1));
        Ok(self)
    }

    /// Two-component nodal vector, interleaved.
    pub fn point_vector(mut self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * self.mesh.n_vertices() {
            return Err(Error::Shape(format!("point vector {name}: {} values", values.len())));
        }
        self.point_data.push((name.to_string(), values.to_vec(), 2));
        Ok(self)
    }

    pub fn cell_scalar(mut self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.mesh.n_cells() {
            return Err(Error::Shape(format!("cell field {name}: {} values", values.len())));
        }
        self.cell_data.push((name.to_string(), values.to_vec()));
        Ok(self)
    }

    pub fn finish(self, title: &str) -> String {
        let m = self.mesh;
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", m.n_vertices());
        for p in m.vertices() {
            let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
        }
        let _ = writeln!(s, "CELLS {} {}", m.n_cells(), 4 * m.n_cells());
        for c in m.cells() {
            let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {}", m.n_cells());
        for _ in 0..m.n_cells() {
            let _ = writeln!(s, "5");
        }
        let _ = writeln!(s, "CELL_DATA {}", m.n_cells());
        let _ = writeln!(s, "SCALARS subdomain int 1\nLOOKUP_TABLE default");
        for t in m.cell_tags() {
            let _ = writeln!(s, "{}", matches!(t, Subdomain::Beam) as i32);
        }
        for (name, vals) in &self.cell_data {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in vals {
                let _ = writeln!(s, "{v:e}");
            }
        }
        if !self.point_data.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", m.n_vertices());
            for (name, vals, comps) in &self.point_data {
                if *comps == 1 {
                    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                    for v in vals {
                        let _ = writeln!(s, "{v:e}");
                    }
                } else {
                    let _ = writeln!(s, "VECTORS {name} double");
                    for p in vals.chunks(2) {
                        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
                    }
                }
            }
        }
        s
    }
}
