use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building or deforming geometry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-positive thickness {thickness:e} at surface node {node} (x = {x})")]
    NonPositiveThickness { node: usize, x: f64, thickness: f64 },
    #[error("surface nodes are not strictly increasing at node {node}")]
    NonIncreasingNodes { node: usize },
    #[error("surface grid needs at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("extrusion layer count must be at least 1")]
    NoLayers,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("grids do not share the same nodes and bedrock")]
    IncompatibleGrids,
}

/// Errors raised by the sparse direct solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("matrix is singular to working precision (pivot row {row})")]
    Singular { row: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("factorization failed: {0}")]
    Backend(String),
}

/// Errors raised during finite-element assembly.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("non-positive viscosity {value:e} at cell {cell}, quadrature point {point}")]
    NonPositiveViscosity { cell: usize, point: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("surface trace does not match the advection mode: {0}")]
    ModeMismatch(String),
    #[error("size mismatch: {0}")]
    Size(String),
}

/// Errors raised while parsing configuration text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue { line: usize, key: String, message: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
}

/// Top-level error type of the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("Picard iteration did not converge after {iterations} iterations (last relative change {last_change:e})")]
    PicardNonConvergence { iterations: usize, last_change: f64 },
    #[error("implicit coupling did not converge after {iterations} outer iterations (last relative change {last_change:e})")]
    CouplingNonConvergence { iterations: usize, last_change: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("empty ledger")]
    EmptyLedger,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
