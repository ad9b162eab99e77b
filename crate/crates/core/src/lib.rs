pub mod adjoint;
pub mod assembly;
pub mod config;
pub mod design_field;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod optimizer;
pub mod output;
pub mod par;
pub mod problems;
pub mod run;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
