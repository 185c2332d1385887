pub mod expr;
pub mod geom;
pub mod lift;
pub mod linalg;
pub mod mesh;
pub mod norms;
pub mod quad;
pub mod spaces;
