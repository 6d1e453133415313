use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Continuous P1 space with `components` values per vertex, numbered
/// vertex-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionSpace {
    n_vertices: usize,
    components: usize,
}

impl FunctionSpace {
    pub fn scalar(mesh: &Mesh) -> Self {
        Self { n_vertices: mesh.n_vertices(), components: 1 }
    }

    pub fn vector(mesh: &Mesh) -> Self {
        Self { n_vertices: mesh.n_vertices(), components: 2 }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn n_dofs(&self) -> usize {
        self.n_vertices * self.components
    }

    #[inline]
    pub fn dof(&self, vertex: usize, component: usize) -> usize {
        vertex * self.components + component
    }

    pub fn zeros(&self) -> Field {
        Field { space: self.clone(), values: vec![0.0; self.n_dofs()] }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.n_dofs() {
            return Err(Error::Shape(format!("{} coefficients for {} dofs", values.len(), self.n_dofs())));
        }
        Ok(Field { space: self.clone(), values })
    }
}

/// Nodal coefficients on a [`FunctionSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    space: FunctionSpace,
    values: Vec<f64>,
}

impl Field {
    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
