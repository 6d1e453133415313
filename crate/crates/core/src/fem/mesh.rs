//! Structured triangular meshes of the beam/insulator cross-section.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material region of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subdomain {
    /// Porous aerogel thermal break.
    Insulator,
    /// Concrete beam resting on the insulator.
    Beam,
}

/// Boundary role of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Bottom of the insulator: exterior convection, clamped.
    Exterior,
    /// Vertical insulator sides: adiabatic, traction free.
    Side,
    /// Top of the beam: beam convection, clamped.
    BeamTop,
    /// Exposed insulator top and beam flanks: interior convection.
    Interior,
    /// Edge shared with the other subdomain (only on extracted submeshes).
    Interface,
}

/// Dimensions of the two-material cross-section. The insulator fills
/// `[0, width] x [0, insulator_height]`; the beam sits on top of it over
/// `[beam_x0, beam_x1]` and is `beam_height` tall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub width: f64,
    pub insulator_height: f64,
    pub beam_x0: f64,
    pub beam_x1: f64,
    pub beam_height: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self { width: 1.0, insulator_height: 0.5, beam_x0: 0.25, beam_x1: 0.75, beam_height: 0.25 }
    }
}

impl Layout {
    pub fn total_height(&self) -> f64 {
        self.insulator_height + self.beam_height
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0.0
            && self.insulator_height > 0.0
            && self.beam_height > 0.0
            && self.beam_x0 >= 0.0
            && self.beam_x1 > self.beam_x0
            && self.beam_x1 <= self.width;
        if ok && [self.width, self.insulator_height, self.beam_x0, self.beam_x1, self.beam_height]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Mesh(format!("invalid layout dimensions {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub cell: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    cell_tags: Vec<Subdomain>,
    boundary: Vec<BoundaryEdge>,
}

fn grid_index(len: f64, n: usize, x: f64, what: &str) -> Result<usize> {
    let t = x / len * n as f64;
    let k = t.round();
    if (t - k).abs() > 1e-9 {
        return Err(Error::Mesh(format!(
            "{what} = {x} does not fall on a grid line ({n} cells over {len})"
        )));
    }
    Ok(k as usize)
}

impl Mesh {
    /// Builds a mesh from raw parts, checking orientation and tags.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        cell_tags: Vec<Subdomain>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        if cells.len() != cell_tags.len() {
            return Err(Error::Mesh(format!("{} cells but {} tags", cells.len(), cell_tags.len())));
        }
        let mesh = Self { vertices, cells, cell_tags, boundary };
        for c in 0..mesh.cells.len() {
            if mesh.cells[c].iter().any(|&v| v >= mesh.vertices.len()) {
                return Err(Error::Mesh(format!("cell {c} references a missing vertex")));
            }
            let a = mesh.signed_area(c);
            if !(a > 0.0) {
                return Err(Error::Mesh(format!("cell {c} has non-positive signed area {a:e}")));
            }
        }
        Ok(mesh)
    }

    /// Unit-style rectangle `[0,w] x [0,h]` of insulator cells. The bottom is
    /// exterior, the sides adiabatic and the top interior.
    pub fn rectangle(w: f64, h: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::Mesh(format!("rectangle {w}x{h} with {nx}x{ny} cells")));
        }
        Self::structured(w, h, nx, ny, |_, _| Some(Subdomain::Insulator), |m| {
            let eps = 1e-12 * w.max(h);
            if m[1] < eps {
                BoundaryTag::Exterior
            } else if m[1] > h - eps {
                BoundaryTag::Interior
            } else {
                BoundaryTag::Side
            }
        })
    }

    /// Beam-on-insulator cross-section. `nx` cells span the width and `ny`
    /// cells the total height; the material interfaces must lie on grid
    /// lines.
    pub fn beam_insulator(layout: &Layout, nx: usize, ny: usize) -> Result<Self> {
        layout.validate()?;
        if nx < 2 || ny < 2 {
            return Err(Error::Mesh(format!("need at least 2x2 cells, got {nx}x{ny}")));
        }
        let w = layout.width;
        let h = layout.total_height();
        let i0 = grid_index(w, nx, layout.beam_x0, "beam_x0")?;
        let i1 = grid_index(w, nx, layout.beam_x1, "beam_x1")?;
        let jb = grid_index(h, ny, layout.insulator_height, "insulator_height")?;
        let eps = 1e-9 * w.max(h);
        let hi = layout.insulator_height;
        Self::structured(
            w,
            h,
            nx,
            ny,
            |i, j| {
                if j < jb {
                    Some(Subdomain::Insulator)
                } else if (i0..i1).contains(&i) {
                    Some(Subdomain::Beam)
                } else {
                    None
                }
            },
            |m| {
                if m[1] < eps {
                    BoundaryTag::Exterior
                } else if m[1] > h - eps {
                    BoundaryTag::BeamTop
                } else if m[1] < hi && (m[0] < eps || m[0] > w - eps) {
                    BoundaryTag::Side
                } else {
                    BoundaryTag::Interior
                }
            },
        )
    }

    fn structured(
        w: f64,
        h: f64,
        nx: usize,
        ny: usize,
        region: impl Fn(usize, usize) -> Option<Subdomain>,
        tag: impl Fn([f64; 2]) -> BoundaryTag,
    ) -> Result<Self> {
        let grid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut raw_cells = Vec::new();
        let mut cell_tags = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if let Some(s) = region(i, j) {
                    let (a, b, c, d) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
                    raw_cells.push([a, b, c]);
                    raw_cells.push([a, c, d]);
                    cell_tags.push(s);
                    cell_tags.push(s);
                }
            }
        }
        let mut renumber = vec![usize::MAX; (nx + 1) * (ny + 1)];
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let g = grid(i, j);
                if raw_cells.iter().any(|c| c.contains(&g)) {
                    renumber[g] = vertices.len();
                    vertices.push([w * i as f64 / nx as f64, h * j as f64 / ny as f64]);
                }
            }
        }
        let cells: Vec<[usize; 3]> =
            raw_cells.iter().map(|c| [renumber[c[0]], renumber[c[1]], renumber[c[2]]]).collect();
        let boundary = exterior_edges(&cells)
            .into_iter()
            .map(|(v, cell)| {
                let (p, q) = (vertices[v[0]], vertices[v[1]]);
                let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
                BoundaryEdge { vertices: v, tag: tag(mid), cell }
            })
            .collect();
        Self::from_parts(vertices, cells, cell_tags, boundary)
    }

    /// Cells of one subdomain as a standalone mesh, plus the map from the
    /// submesh's vertices to this mesh's vertices. Edges cut by the
    /// extraction are tagged [`BoundaryTag::Interface`].
    pub fn submesh(&self, which: Subdomain) -> Result<(Mesh, Vec<usize>)> {
        let keep: Vec<usize> = (0..self.n_cells()).filter(|&c| self.cell_tags[c] == which).collect();
        if keep.is_empty() {
            return Err(Error::Mesh(format!("no {which:?} cells")));
        }
        let mut local = vec![usize::MAX; self.n_vertices()];
        let mut to_parent = Vec::new();
        for &c in &keep {
            for &v in &self.cells[c] {
                if local[v] == usize::MAX {
                    local[v] = to_parent.len();
                    to_parent.push(v);
                }
            }
        }
        // keep parent numbering order for a compact envelope
        to_parent.sort_unstable();
        for (k, &v) in to_parent.iter().enumerate() {
            local[v] = k;
        }
        let vertices = to_parent.iter().map(|&v| self.vertices[v]).collect();
        let mut cell_map = HashMap::new();
        let cells: Vec<[usize; 3]> = keep
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                cell_map.insert(c, k);
                let [a, b, d] = self.cells[c];
                [local[a], local[b], local[d]]
            })
            .collect();
        let parent_tags: HashMap<[usize; 2], BoundaryTag> =
            self.boundary.iter().map(|e| (sorted(e.vertices), e.tag)).collect();
        let boundary = exterior_edges(&cells)
            .into_iter()
            .map(|(v, cell)| {
                let key = sorted([to_parent[v[0]], to_parent[v[1]]]);
                let tag = parent_tags.get(&key).copied().unwrap_or(BoundaryTag::Interface);
                BoundaryEdge { vertices: v, tag, cell }
            })
            .collect();
        let mesh = Self::from_parts(vertices, cells, vec![which; keep.len()], boundary)?;
        Ok((mesh, to_parent))
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn cell_tags(&self) -> &[Subdomain] {
        &self.cell_tags
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn has_subdomain(&self, s: Subdomain) -> bool {
        self.cell_tags.contains(&s)
    }

    pub fn has_boundary(&self, t: BoundaryTag) -> bool {
        self.boundary.iter().any(|e| e.tag == t)
    }

    fn signed_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cells[c].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        self.signed_area(c)
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let [a, b, d] = self.cells[c].map(|v| self.vertices[v]);
        [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0]
    }

    /// Gradients of the three P1 hat functions on cell `c`, and its area.
    pub fn p1_gradients(&self, c: usize) -> ([[f64; 2]; 3], f64) {
        let [a, b, d] = self.cells[c].map(|v| self.vertices[v]);
        let area = self.signed_area(c);
        let inv = 1.0 / (2.0 * area);
        let g = [
            [(b[1] - d[1]) * inv, (d[0] - b[0]) * inv],
            [(d[1] - a[1]) * inv, (a[0] - d[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ];
        (g, area)
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let (p, q) = (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }

    pub fn area(&self, which: Option<Subdomain>) -> f64 {
        (0..self.n_cells())
            .filter(|&c| which.is_none_or(|s| self.cell_tags[c] == s))
            .map(|c| self.cell_area(c))
            .sum()
    }

    /// Vertices touched by at least one cell of `which`.
    pub fn vertex_mask(&self, which: Subdomain) -> Vec<bool> {
        let mut mask = vec![false; self.n_vertices()];
        for (c, cell) in self.cells.iter().enumerate() {
            if self.cell_tags[c] == which {
                for &v in cell {
                    mask[v] = true;
                }
            }
        }
        mask
    }

    /// Longest cell edge.
    pub fn max_edge(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cell in &self.cells {
            for k in 0..3 {
                let (p, q) = (self.vertices[cell[k]], self.vertices[cell[(k + 1) % 3]]);
                h = h.max(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt());
            }
        }
        h
    }
}

fn sorted(v: [usize; 2]) -> [usize; 2] {
    if v[0] < v[1] {
        v
    } else {
        [v[1], v[0]]
    }
}

/// Edges owned by exactly one cell, oriented as in that cell (so the
/// domain lies to the left).
fn exterior_edges(cells: &[[usize; 3]]) -> Vec<([usize; 2], usize)> {
    let mut count: HashMap<[usize; 2], (usize, [usize; 2], usize)> = HashMap::new();
    for (c, cell) in cells.iter().enumerate() {
        for k in 0..3 {
            let e = [cell[k], cell[(k + 1) % 3]];
            count.entry(sorted(e)).and_modify(|x| x.0 += 1).or_insert((1, e, c));
        }
    }
    let mut out: Vec<([usize; 2], usize)> =
        count.into_values().filter(|x| x.0 == 1).map(|(_, e, c)| (e, c)).collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_single_cell() {
        let m = Mesh::rectangle(1.0, 1.0, 1, 1).unwrap();
        assert_eq!((m.n_cells(), m.n_vertices()), (2, 4));
        assert!((m.area(None) - 1.0).abs() < 1e-15);
        assert_eq!(m.boundary().len(), 4);
    }

    #[test]
    fn counting_identity() {
        for n in [2, 5, 8] {
            let m = Mesh::rectangle(1.0, 1.0, n, n).unwrap();
            assert_eq!(m.n_cells(), 2 * n * n);
            assert_eq!(m.n_vertices(), (n + 1) * (n + 1));
        }
    }

    #[test]
    fn beam_layout_tags() {
        let layout = Layout::default();
        let m = Mesh::beam_insulator(&layout, 8, 6).unwrap();
        assert!(m.has_subdomain(Subdomain::Insulator) && m.has_subdomain(Subdomain::Beam));
        let ins = m.area(Some(Subdomain::Insulator));
        let beam = m.area(Some(Subdomain::Beam));
        assert!((ins - 0.5).abs() < 1e-12 && (beam - 0.125).abs() < 1e-12);
        let len = |t| m.boundary().iter().filter(|e| e.tag == t).map(|e| m.edge_length(e)).sum::<f64>();
        assert!((len(BoundaryTag::Exterior) - 1.0).abs() < 1e-12);
        assert!((len(BoundaryTag::Side) - 1.0).abs() < 1e-12);
        assert!((len(BoundaryTag::BeamTop) - 0.5).abs() < 1e-12);
        // exposed insulator top (0.5) plus two beam flanks (0.25 each)
        assert!((len(BoundaryTag::Interior) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_layout_is_rejected() {
        let layout = Layout::default();
        assert!(Mesh::beam_insulator(&layout, 6, 6).is_err());
        let bad = Layout { width: -1.0, ..Layout::default() };
        assert!(matches!(Mesh::beam_insulator(&bad, 8, 6), Err(Error::Mesh(_))));
    }

    #[test]
    fn submesh_marks_interface() {
        let m = Mesh::beam_insulator(&Layout::default(), 8, 6).unwrap();
        let (ins, map) = m.submesh(Subdomain::Insulator).unwrap();
        assert_eq!(ins.n_cells(), 8 * 4 * 2);
        assert_eq!(map.len(), ins.n_vertices());
        let iface: f64 = ins
            .boundary()
            .iter()
            .filter(|e| e.tag == BoundaryTag::Interface)
            .map(|e| ins.edge_length(e))
            .sum();
        assert!((iface - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradients_sum_to_zero() {
        let m = Mesh::rectangle(2.0, 1.0, 3, 2).unwrap();
        for c in 0..m.n_cells() {
            let (g, _) = m.p1_gradients(c);
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-12);
            assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-12);
        }
    }
}
