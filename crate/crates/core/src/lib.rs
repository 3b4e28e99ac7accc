//! Free-surface Stokes flow in two dimensions with Taylor-Hood elements and a
//! family of energy-stable time-stepping schemes.

pub mod cases;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod freesurface;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod schemes;
pub mod stokes;

pub use error::{Error, Result};
