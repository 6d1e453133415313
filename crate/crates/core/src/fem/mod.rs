//! P1 finite elements on structured triangular meshes.

pub mod affine;
pub mod assembly;
pub mod mesh;
pub mod space;
pub mod vtk;

pub use affine::{AffineMatrix, AffineMatrixBuilder, AffineVector};
pub use assembly::{assemble, solve_sparse, Constraints, Kernel, LocalSystem};
pub use mesh::{BoundaryEdge, BoundaryTag, Layout, Mesh, Subdomain};
pub use space::{Field, FunctionSpace};
pub use vtk::VtkWriter;
