//! Surface velocity traces and the height update.

use crate::error::{AssemblyError, Error, Result};
use crate::fem::{assemble_free_surface, edge_coefficients, gauss3_unit, p2_trace, AdvectionMode, FreeSurfaceSystem, FunctionSpace};
use crate::linalg::{norm_inf, Factorization};
use crate::mesh::{first_thickness_violation, SurfaceGrid};

/// Velocity on the free surface sampled at the surface quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTrace {
    /// Horizontal velocity per surface cell at the three Gauss points.
    pub ux: Vec<[f64; 3]>,
    /// Vertical velocity per surface cell at the three Gauss points.
    pub uz: Vec<[f64; 3]>,
    /// Speed `|u|` at each surface grid node.
    pub node_speed: Vec<f64>,
    /// Surface heights the trace was taken on.
    pub heights: Vec<f64>,
}

impl SurfaceTrace {
    /// `ω (u·n) = -u⊥ ∂x h + u_z` at the quadrature points of cell `c`.
    pub fn normal_flux(&self, grid: &SurfaceGrid, c: usize) -> [f64; 3] {
        let s = grid.slope(c);
        std::array::from_fn(|k| -self.ux[c][k] * s + self.uz[c][k])
    }
}

/// Evaluates the P2 velocity on the top facets.
pub fn extract_trace(space: &FunctionSpace, grid: &SurfaceGrid, u: &[f64]) -> Result<SurfaceTrace, AssemblyError> {
    if space.n_surface_cells() != grid.n_cells() || u.len() != space.n_dofs() {
        return Err(AssemblyError::Size(format!(
            "velocity with {} coefficients on {} surface cells, grid has {} cells",
            u.len(),
            space.n_surface_cells(),
            grid.n_cells()
        )));
    }
    let q = gauss3_unit();
    let mut ux = Vec::with_capacity(grid.n_cells());
    let mut uz = Vec::with_capacity(grid.n_cells());
    let mut node_speed = vec![0.0; grid.n_nodes()];
    for c in 0..grid.n_cells() {
        let nodes = space.surface_nodes(c);
        let mut sx = [0.0; 3];
        let mut sz = [0.0; 3];
        for (k, p) in q.points.iter().enumerate() {
            let phi = p2_trace(p[0]);
            for (a, &node) in nodes.iter().enumerate() {
                sx[k] += phi[a] * u[2 * node];
                sz[k] += phi[a] * u[2 * node + 1];
            }
        }
        ux.push(sx);
        uz.push(sz);
        for (gi, node) in [(c, nodes[0]), (c + 1, nodes[2])] {
            node_speed[gi] = u[2 * node].hypot(u[2 * node + 1]);
        }
    }
    if ux.iter().chain(&uz).flatten().any(|v| !v.is_finite()) {
        return Err(AssemblyError::Parameter("non-finite surface velocity".into()));
    }
    Ok(SurfaceTrace { ux, uz, node_speed, heights: grid.height().to_vec() })
}

/// Result of one height solve.
#[derive(Debug, Clone)]
pub struct HeightUpdate {
    pub h_new: Vec<f64>,
    pub dt: f64,
    pub mode: AdvectionMode,
    pub gamma: Vec<f64>,
    /// Relative residual of the surface solve.
    pub residual: f64,
    pub system: FreeSurfaceSystem,
}

/// Relative residual bound of the surface solve.
pub const HEIGHT_RESIDUAL_TOL: f64 = 1e-11;

/// Assembles and solves the height system for one step.
///
/// With `edge` off all edge coefficients are zero (the operator pattern is kept).
/// A result with non-positive thickness is reported as a geometry error.
pub fn advance_height(
    grid: &SurfaceGrid,
    trace: &SurfaceTrace,
    dt: f64,
    mode: AdvectionMode,
    edge: bool,
    a: &dyn Fn(f64) -> f64,
) -> Result<HeightUpdate> {
    let up = solve_height(grid, trace, dt, mode, edge, a)?;
    if let Some(e) = first_thickness_violation(grid.nodes(), &up.h_new, grid.bed()) {
        return Err(e.into());
    }
    Ok(up)
}

/// As [`advance_height`] without the thickness check.
pub fn solve_height(
    grid: &SurfaceGrid,
    trace: &SurfaceTrace,
    dt: f64,
    mode: AdvectionMode,
    edge: bool,
    a: &dyn Fn(f64) -> f64,
) -> Result<HeightUpdate> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let gamma = if edge { edge_coefficients(grid, trace) } else { vec![0.0; grid.n_nodes()] };
    let system = assemble_free_surface(grid, trace, dt, mode, &gamma, a)?;
    let h_new = Factorization::new(&system.matrix)?.solve(&system.rhs)?;
    let r: Vec<f64> = system.matrix.matvec(&h_new).iter().zip(&system.rhs).map(|(a, b)| a - b).collect();
    let scale = system.matrix.norm_inf() * norm_inf(&h_new) + norm_inf(&system.rhs);
    let residual = if scale > 0.0 { norm_inf(&r) / scale } else { 0.0 };
    if residual > HEIGHT_RESIDUAL_TOL {
        return Err(crate::error::SolverError::Residual { residual, tolerance: HEIGHT_RESIDUAL_TOL }.into());
    }
    Ok(HeightUpdate { h_new, dt, mode, gamma, residual, system })
}
