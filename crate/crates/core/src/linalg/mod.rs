//! Sparse storage, direct factorization and saddle-point systems.

mod direct;
mod saddle;
mod sparse;

pub use direct::{factor_solve, Factorization, RESIDUAL_TOL};
pub use saddle::{solve_saddle, SaddleSystem};
pub use sparse::{dot, norm2, norm_inf, SparseMatrix, TripletBuilder};
