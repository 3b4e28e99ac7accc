//! Linear and power-law Stokes solves on a fixed domain.

use crate::error::{Error, Result};
use crate::fem::{
    apply_velocity_bcs, assemble_fssa, assemble_gravity, assemble_normal_penalty, assemble_stokes, viscosity_field,
    FEFunction, FunctionSpace, ViscositySamples,
};
use crate::linalg::{norm2, solve_saddle, SaddleSystem, SparseMatrix};
use crate::mesh::{SurfaceGrid, VolumeMesh};

/// Material and body-force parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub rho: f64,
    pub g: f64,
    pub mu0: f64,
    /// Power-law exponent in `(1, 2]`; `2` is Newtonian.
    pub p: f64,
    /// Strain-rate regularization (s⁻¹).
    pub delta: f64,
}

impl FluidParams {
    pub fn newtonian(rho: f64, g: f64, mu: f64) -> Self {
        Self { rho, g, mu0: mu, p: 2.0, delta: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.g >= 0.0
            && self.mu0 > 0.0
            && self.p > 1.0
            && self.p <= 2.0
            && self.delta >= 0.0
            && [self.rho, self.g, self.mu0, self.delta].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid fluid parameters {self:?}")))
        }
    }

    pub fn rho_g(&self) -> f64 {
        self.rho * self.g
    }

    pub fn is_newtonian(&self) -> bool {
        self.p == 2.0
    }
}

/// Surface stabilization folded into the momentum equation.
#[derive(Clone, Copy)]
pub enum Stabilization<'a> {
    None,
    /// Symmetric normal penalty with source load.
    NormalPenalty { dt: f64, a: &'a dyn Fn(f64) -> f64 },
    /// FSSA correction with source load.
    Fssa { dt: f64, a: &'a dyn Fn(f64) -> f64 },
}

impl std::fmt::Debug for Stabilization<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => write!(f, "None"),
            Self::NormalPenalty { dt, .. } => write!(f, "NormalPenalty {{ dt: {dt} }}"),
            Self::Fssa { dt, .. } => write!(f, "Fssa {{ dt: {dt} }}"),
        }
    }
}

/// Velocity, pressure and the viscosity the final linear solve used.
#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub u: FEFunction,
    pub pi: FEFunction,
    pub picard_iterations: usize,
    pub final_relative_change: f64,
    /// Viscosity samples of the last linear solve (lagged by one Picard iterate).
    pub mu: ViscositySamples,
}

/// Picard controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50 }
    }
}

/// Constrained saddle system with its stabilization block and load for one viscosity.
pub(crate) struct LinearStokes {
    pub sys: SaddleSystem,
    pub extra: Option<SparseMatrix>,
    pub load: Option<Vec<f64>>,
}

pub(crate) fn linear_system(
    mesh: &VolumeMesh,
    space: &FunctionSpace,
    grid: &SurfaceGrid,
    params: &FluidParams,
    mu: &[f64],
    stab: Stabilization<'_>,
) -> Result<LinearStokes> {
    let (a, b) = assemble_stokes(mesh, space, mu)?;
    let f = assemble_gravity(mesh, space, params.rho, params.g);
    let mut sys = SaddleSystem::new(a, b, f)?;
    apply_velocity_bcs(&mut sys, space);
    let (extra, load) = match stab {
        Stabilization::None => (None, None),
        Stabilization::NormalPenalty { dt, a } => {
            let (s, r) = assemble_normal_penalty(space, grid, dt, params.rho, params.g, a)?;
            (Some(s), Some(r.into_iter().map(|v| -v).collect()))
        }
        Stabilization::Fssa { dt, a } => {
            let (s, r) = assemble_fssa(space, grid, dt, params.rho, params.g, a)?;
            (Some(s), Some(r.into_iter().map(|v| -v).collect()))
        }
    };
    Ok(LinearStokes { sys, extra, load })
}

/// Velocity below which a Picard increment counts as rounding noise: a small
/// multiple of the load-to-stiffness velocity scale of the system.
pub(crate) fn velocity_noise_floor(sys: &SaddleSystem) -> f64 {
    let an = sys.a.norm_inf();
    if an > 0.0 {
        1e-12 * norm2(&sys.f) / an
    } else {
        0.0
    }
}

/// Picard iteration for power-law viscosity, one linear solve when `p = 2`.
///
/// `initial` seeds the first viscosity (zero velocity when absent). The stopping
/// metric is `‖u_{k+1} - u_k‖₂ / ‖u_{k+1}‖₂ < tol`; increments below the rounding
/// floor of a vanishing velocity also count as converged.
pub fn solve_with_space(
    mesh: &VolumeMesh,
    space: &FunctionSpace,
    grid: &SurfaceGrid,
    params: &FluidParams,
    stab: Stabilization<'_>,
    opts: PicardOptions,
    initial: Option<&[f64]>,
) -> Result<StokesSolution> {
    params.validate()?;
    let mut u = match initial {
        Some(u0) if u0.len() == space.n_dofs() => u0.to_vec(),
        Some(u0) => {
            return Err(Error::Parameter(format!("initial velocity has {} entries, expected {}", u0.len(), space.n_dofs())))
        }
        None => vec![0.0; space.n_dofs()],
    };
    let max_iter = if params.is_newtonian() { 1 } else { opts.max_iter.max(1) };
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let mu = viscosity_field(mesh, space, &u, params.mu0, params.p, params.delta)?;
        let ls = linear_system(mesh, space, grid, params, &mu, stab)?;
        let (un, pi) = solve_saddle(&ls.sys, ls.extra.as_ref(), ls.load.as_deref())?;
        let diff: Vec<f64> = un.iter().zip(&u).map(|(a, b)| a - b).collect();
        let (dn, unorm) = (norm2(&diff), norm2(&un));
        change = if unorm > 0.0 { dn / unorm } else if dn == 0.0 { 0.0 } else { f64::INFINITY };
        let noise = dn <= velocity_noise_floor(&ls.sys);
        u = un;
        if params.is_newtonian() || change < opts.tol || noise {
            return Ok(StokesSolution {
                u: FEFunction::new(space, u)?,
                pi: FEFunction { kind: crate::fem::SpaceKind::PressureP1, values: pi },
                picard_iterations: it,
                final_relative_change: if params.is_newtonian() { 0.0 } else { change },
                mu,
            });
        }
    }
    Err(Error::PicardNonConvergence { iterations: max_iter, last_change: change })
}

/// Linear Stokes solve (`p = 2`).
pub fn solve_newtonian(
    mesh: &VolumeMesh,
    grid: &SurfaceGrid,
    params: &FluidParams,
    stab: Stabilization<'_>,
) -> Result<StokesSolution> {
    if !params.is_newtonian() {
        return Err(Error::Parameter(format!("solve_newtonian needs p = 2, got {}", params.p)));
    }
    let space = FunctionSpace::velocity(mesh);
    solve_with_space(mesh, &space, grid, params, stab, PicardOptions::default(), None)
}

/// Picard iteration from a zero initial velocity.
pub fn solve_picard(
    mesh: &VolumeMesh,
    grid: &SurfaceGrid,
    params: &FluidParams,
    stab: Stabilization<'_>,
    tol: f64,
    max_iter: usize,
) -> Result<StokesSolution> {
    let space = FunctionSpace::velocity(mesh);
    solve_with_space(mesh, &space, grid, params, stab, PicardOptions { tol, max_iter }, None)
}
