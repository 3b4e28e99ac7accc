//! Surface forms. Top facets are the graph of the piecewise-linear height, so every
//! facet integral is computed on its surface cell with `ds = ω dx` and the facet
//! parameter `t ∈ [0, 1]` shared with the surface grid. All surface forms use the
//! same three Gauss points per cell.

use super::{gauss3_unit, p2_trace, FunctionSpace};
use crate::error::AssemblyError;
use crate::freesurface::SurfaceTrace;
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::mesh::SurfaceGrid;

/// How the advection term of the height equation is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvectionMode {
    /// `u⊥ ∂x hⁿ` with velocity and height at the old level.
    Explicit,
    /// `u⊥ⁿ ∂x hⁿ⁺¹`: the advection matrix acts on the unknown height.
    SemiImplicit,
    /// As semi-implicit, with the trace taken on the new domain by the caller.
    Implicit,
}

struct CellGeom {
    x0: f64,
    dx: f64,
    slope: f64,
}

fn cell_geom(grid: &SurfaceGrid, c: usize) -> CellGeom {
    CellGeom { x0: grid.nodes()[c], dx: grid.diameter(c), slope: grid.slope(c) }
}

fn check_space(space: &FunctionSpace, grid: &SurfaceGrid) -> Result<(), AssemblyError> {
    if space.n_surface_cells() != grid.n_cells() {
        return Err(AssemblyError::Size(format!(
            "velocity space has {} surface cells, grid {}",
            space.n_surface_cells(),
            grid.n_cells()
        )));
    }
    Ok(())
}

/// Symmetric normal penalty and its source load:
/// `S_ij = (ρgΔt/2) ∫ ω (φ_j·n)(φ_i·n) ds`, `r_i = ρgΔt ∫ (φ_i·n) a ds`.
///
/// Both enter the left side of the momentum equation, so callers subtract `r`.
pub fn assemble_normal_penalty(
    space: &FunctionSpace,
    grid: &SurfaceGrid,
    dt: f64,
    rho: f64,
    g: f64,
    a: &dyn Fn(f64) -> f64,
) -> Result<(SparseMatrix, Vec<f64>), AssemblyError> {
    check_space(space, grid)?;
    let q = gauss3_unit();
    let n = space.n_dofs();
    let rg = rho * g * dt;
    let mut t = TripletBuilder::with_capacity(n, n, 36 * grid.n_cells());
    let mut r = vec![0.0; n];
    for c in 0..grid.n_cells() {
        let geo = cell_geom(grid, c);
        // ω (u·n)(v·n) ds = (u·N)(v·N) dx with N = (-s, 1)
        let nvec = [-geo.slope, 1.0];
        let nodes = space.surface_nodes(c);
        let mut loc = [[0.0; 6]; 6];
        for (p, w) in q.points.iter().zip(&q.weights) {
            let phi = p2_trace(p[0]);
            let av = a(geo.x0 + p[0] * geo.dx);
            for i in 0..6 {
                let vi = phi[i / 2] * nvec[i % 2];
                r[2 * nodes[i / 2] + i % 2] += rg * geo.dx * w * vi * av;
                for j in 0..6 {
                    loc[i][j] += 0.5 * rg * geo.dx * w * vi * phi[j / 2] * nvec[j % 2];
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                t.push(2 * nodes[i / 2] + i % 2, 2 * nodes[j / 2] + j % 2, loc[i][j]);
            }
        }
    }
    Ok((t.build(), r))
}

/// FSSA correction `F_ij = ρgΔt ∫ (φ_j·n)(ẑ·φ_i) ds` (non-symmetric) and its source
/// load `r_i = ρgΔt ∫ (ẑ·φ_i) n_z a ds`. Callers subtract `r`.
pub fn assemble_fssa(
    space: &FunctionSpace,
    grid: &SurfaceGrid,
    dt: f64,
    rho: f64,
    g: f64,
    a: &dyn Fn(f64) -> f64,
) -> Result<(SparseMatrix, Vec<f64>), AssemblyError> {
    check_space(space, grid)?;
    let q = gauss3_unit();
    let n = space.n_dofs();
    let rg = rho * g * dt;
    let mut t = TripletBuilder::with_capacity(n, n, 18 * grid.n_cells());
    let mut r = vec![0.0; n];
    for c in 0..grid.n_cells() {
        let geo = cell_geom(grid, c);
        let nvec = [-geo.slope, 1.0];
        let nodes = space.surface_nodes(c);
        let mut loc = [[0.0; 6]; 3];
        for (p, w) in q.points.iter().zip(&q.weights) {
            let phi = p2_trace(p[0]);
            let av = a(geo.x0 + p[0] * geo.dx);
            for i in 0..3 {
                // n_z ds = dx
                r[2 * nodes[i] + 1] += rg * geo.dx * w * phi[i] * av;
                for j in 0..6 {
                    loc[i][j] += rg * geo.dx * w * phi[i] * phi[j / 2] * nvec[j % 2];
                }
            }
        }
        for i in 0..3 {
            for j in 0..6 {
                t.push(2 * nodes[i] + 1, 2 * nodes[j / 2] + j % 2, loc[i][j]);
            }
        }
    }
    Ok((t.build(), r))
}

/// Coupling `G_{(i,z), j} = ∫ (ẑ·φ_i) w_j dx` between velocity dofs and surface P1 nodes.
/// `Gᵀ u` tested against `w` is the vertical surface velocity load.
pub fn assemble_surface_coupling(space: &FunctionSpace, grid: &SurfaceGrid) -> Result<SparseMatrix, AssemblyError> {
    check_space(space, grid)?;
    let q = gauss3_unit();
    let mut t = TripletBuilder::with_capacity(space.n_dofs(), grid.n_nodes(), 6 * grid.n_cells());
    for c in 0..grid.n_cells() {
        let dx = grid.diameter(c);
        let nodes = space.surface_nodes(c);
        let mut loc = [[0.0; 2]; 3];
        for (p, w) in q.points.iter().zip(&q.weights) {
            let phi = p2_trace(p[0]);
            let psi = [1.0 - p[0], p[0]];
            for i in 0..3 {
                for j in 0..2 {
                    loc[i][j] += dx * w * phi[i] * psi[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..2 {
                t.push(2 * nodes[i] + 1, c + j, loc[i][j]);
            }
        }
    }
    Ok(t.build())
}

/// P1 mass matrix on the surface grid.
pub fn surface_mass_matrix(grid: &SurfaceGrid) -> SparseMatrix {
    let q = gauss3_unit();
    let mut t = TripletBuilder::with_capacity(grid.n_nodes(), grid.n_nodes(), 4 * grid.n_cells());
    for c in 0..grid.n_cells() {
        let dx = grid.diameter(c);
        let mut loc = [[0.0; 2]; 2];
        for (p, w) in q.points.iter().zip(&q.weights) {
            let psi = [1.0 - p[0], p[0]];
            for i in 0..2 {
                for j in 0..2 {
                    loc[i][j] += dx * w * psi[i] * psi[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                t.push(c + i, c + j, loc[i][j]);
            }
        }
    }
    t.build()
}

/// `∫ f w_i dx` by the shared surface quadrature.
pub fn load_vector(grid: &SurfaceGrid, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let q = gauss3_unit();
    let mut out = vec![0.0; grid.n_nodes()];
    for c in 0..grid.n_cells() {
        let geo = cell_geom(grid, c);
        for (p, w) in q.points.iter().zip(&q.weights) {
            let v = geo.dx * w * f(geo.x0 + p[0] * geo.dx);
            out[c] += v * (1.0 - p[0]);
            out[c + 1] += v * p[0];
        }
    }
    out
}

/// `∫ s w_i dx` for per-cell samples `s` at the shared quadrature points.
pub(crate) fn sample_load(grid: &SurfaceGrid, samples: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let q = gauss3_unit();
    let mut out = vec![0.0; grid.n_nodes()];
    for c in 0..grid.n_cells() {
        let dx = grid.diameter(c);
        for (k, (p, w)) in q.points.iter().zip(&q.weights).enumerate() {
            let v = dx * w * samples(c, k);
            out[c] += v * (1.0 - p[0]);
            out[c + 1] += v * p[0];
        }
    }
    out
}

/// Advection matrix `C_ij = ∫ u⊥ (∂x w_j) w_i dx` from the traced horizontal velocity.
pub fn advection_matrix(grid: &SurfaceGrid, trace: &SurfaceTrace) -> SparseMatrix {
    let q = gauss3_unit();
    let mut t = TripletBuilder::with_capacity(grid.n_nodes(), grid.n_nodes(), 4 * grid.n_cells());
    for c in 0..grid.n_cells() {
        let dx = grid.diameter(c);
        let mut loc = [[0.0; 2]; 2];
        for (k, (p, w)) in q.points.iter().zip(&q.weights).enumerate() {
            let psi = [1.0 - p[0], p[0]];
            let dpsi = [-1.0 / dx, 1.0 / dx];
            for i in 0..2 {
                for j in 0..2 {
                    loc[i][j] += dx * w * trace.ux[c][k] * dpsi[j] * psi[i];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                t.push(c + i, c + j, loc[i][j]);
            }
        }
    }
    t.build()
}

/// `γ_e = ½ h_K² |u|` at interior nodes, with `h_K` the larger adjacent cell
/// diameter and `|u|` the traced surface speed at the node. Zero at the ends.
pub fn edge_coefficients(grid: &SurfaceGrid, trace: &SurfaceTrace) -> Vec<f64> {
    let n = grid.n_nodes();
    (0..n)
        .map(|e| {
            if e == 0 || e + 1 == n {
                0.0
            } else {
                let hk = grid.diameter(e - 1).max(grid.diameter(e));
                0.5 * hk * hk * trace.node_speed[e]
            }
        })
        .collect()
}

/// Gradient-jump operator `Σ_e γ_e [[∂x h]] [[∂x w]]` over interior nodes. The
/// pattern is independent of `γ`.
pub fn edge_jump_matrix(grid: &SurfaceGrid, gamma: &[f64]) -> SparseMatrix {
    let n = grid.n_nodes();
    let mut t = TripletBuilder::with_capacity(n, n, 9 * n);
    for e in 1..n.saturating_sub(1) {
        let (dl, dr) = (grid.diameter(e - 1), grid.diameter(e));
        let jv = [1.0 / dl, -1.0 / dl - 1.0 / dr, 1.0 / dr];
        for i in 0..3 {
            for j in 0..3 {
                t.push(e - 1 + i, e - 1 + j, gamma[e] * jv[i] * jv[j]);
            }
        }
    }
    t.build()
}

/// Assembled height system `matrix · hⁿ⁺¹ = rhs` with the pieces needed by diagnostics.
#[derive(Debug, Clone)]
pub struct FreeSurfaceSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub mass: SparseMatrix,
    pub jump: SparseMatrix,
    pub gamma: Vec<f64>,
    /// `∫ a w_i dx`.
    pub source_load: Vec<f64>,
    /// Velocity load: `∫ (-u⊥ ∂x hⁿ + u_z) w_i` (explicit) or `∫ u_z w_i` otherwise.
    pub velocity_load: Vec<f64>,
}

/// Height system for one step:
/// explicit `(M + ΔtJ) hⁿ⁺¹ = M hⁿ + Δt(∫a w + ∫(-u⊥∂x hⁿ + u_z) w)`,
/// semi-implicit/implicit `(M + ΔtC + ΔtJ) hⁿ⁺¹ = M hⁿ + Δt(∫a w + ∫u_z w)`.
pub fn assemble_free_surface(
    grid: &SurfaceGrid,
    trace: &SurfaceTrace,
    dt: f64,
    mode: AdvectionMode,
    gamma: &[f64],
    a: &dyn Fn(f64) -> f64,
) -> Result<FreeSurfaceSystem, AssemblyError> {
    if trace.ux.len() != grid.n_cells() || gamma.len() != grid.n_nodes() {
        return Err(AssemblyError::Size(format!(
            "trace has {} cells and γ {} nodes for a grid with {} cells",
            trace.ux.len(),
            gamma.len(),
            grid.n_cells()
        )));
    }
    if gamma.iter().any(|g| !(*g >= 0.0)) {
        return Err(AssemblyError::Parameter("edge coefficients must be non-negative".into()));
    }
    if mode != AdvectionMode::Implicit && trace.heights != grid.height() {
        return Err(AssemblyError::ModeMismatch(format!(
            "{mode:?} update needs the trace taken on the current surface"
        )));
    }
    let mass = surface_mass_matrix(grid);
    let jump = edge_jump_matrix(grid, gamma);
    let mut matrix = mass.add_scaled(1.0, &jump, dt);
    let velocity_load = match mode {
        AdvectionMode::Explicit => {
            sample_load(grid, |c, k| -trace.ux[c][k] * grid.slope(c) + trace.uz[c][k])
        }
        AdvectionMode::SemiImplicit | AdvectionMode::Implicit => {
            matrix = matrix.add_scaled(1.0, &advection_matrix(grid, trace), dt);
            sample_load(grid, |c, k| trace.uz[c][k])
        }
    };
    let source_load = load_vector(grid, a);
    let mh = mass.matvec(grid.height());
    let rhs = mh
        .iter()
        .zip(&source_load)
        .zip(&velocity_load)
        .map(|((m, s), v)| m + dt * (s + v))
        .collect();
    Ok(FreeSurfaceSystem { matrix, rhs, mass, jump, gamma: gamma.to_vec(), source_load, velocity_load })
}
