mod estimate;
mod fields;
mod optimize;
mod verify;

pub use estimate::estimate;
pub use fields::{sample_field, solve_forward, state_vtk};
pub use optimize::optimize;
pub use verify::verify;
