//! Time-stepping drivers: Stokes solve, height update and mesh remap per step.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::cases::CaseConfig;
use crate::diagnostics::{energy_sides, source_moments, strain_energy, DiagnosticsRecord, EnergyLedger};
use crate::error::{Error, Result};
use crate::fem::{
    advection_matrix, assemble_surface_coupling, edge_coefficients, edge_jump_matrix, load_vector,
    surface_mass_matrix, viscosity_field, AdvectionMode, FEFunction, FunctionSpace, SpaceKind,
};
use crate::freesurface::{extract_trace, solve_height, SurfaceTrace};
use crate::linalg::{norm2, Factorization, SparseMatrix};
use crate::mesh::{build_extruded_mesh, domain_volume, remap_vertical, SurfaceGrid, VolumeMesh};
use crate::stokes::{linear_system, solve_with_space, PicardOptions, Stabilization, StokesSolution};

/// Default weak-stability safety factor.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    /// Implicit Euler with an outer coupling iteration.
    Ie,
    EeUnstab,
    /// Explicit Euler with the adaptive weak-stability step, capped at `dt_max`.
    EeUnstabW { eps: f64, dt_max: f64 },
    /// Explicit Euler with the normal penalty.
    EeStab,
    EeFssa,
    SieFssa,
}

impl SchemeKind {
    pub const NAMES: [&'static str; 6] = ["IE", "EE_UNSTAB", "EE_UNSTAB_W", "EE_STAB", "EE_FSSA", "SIE_FSSA"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ie => "IE",
            Self::EeUnstab => "EE_UNSTAB",
            Self::EeUnstabW { .. } => "EE_UNSTAB_W",
            Self::EeStab => "EE_STAB",
            Self::EeFssa => "EE_FSSA",
            Self::SieFssa => "SIE_FSSA",
        }
    }

    /// Parses a scheme name; `EE_UNSTAB_W` takes `ε = 0.5` and the nominal `Δt` as cap.
    pub fn parse(name: &str, nominal_dt: f64) -> Result<Self> {
        Ok(match name.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "IE" => Self::Ie,
            "EE_UNSTAB" => Self::EeUnstab,
            "EE_UNSTAB_W" => Self::EeUnstabW { eps: DEFAULT_EPSILON, dt_max: nominal_dt },
            "EE_STAB" => Self::EeStab,
            "EE_FSSA" => Self::EeFssa,
            "SIE_FSSA" => Self::SieFssa,
            other => return Err(Error::Parameter(format!("unknown scheme {other:?}, expected one of {:?}", Self::NAMES))),
        })
    }

    /// Schemes that conserve the domain volume exactly.
    pub fn conserves_volume(&self) -> bool {
        !matches!(self, Self::SieFssa)
    }

    fn validate(&self) -> Result<()> {
        if let Self::EeUnstabW { eps, dt_max } = *self {
            if !(eps > 0.0 && eps < 1.0) || !(dt_max > 0.0) || !dt_max.is_finite() {
                return Err(Error::Parameter(format!("EE_UNSTAB_W needs ε in (0,1) and Δt_max > 0, got {eps}, {dt_max}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    /// `EE_UNSTAB_W` parsed this way has `Δt_max = ∞` until a nominal step is known.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, f64::INFINITY)
    }
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheme: SchemeKind,
    /// Nominal time step (s).
    pub dt: f64,
    /// Final time (s).
    pub t_final: f64,
    pub case: CaseConfig,
    pub edge_stabilization: bool,
    /// Relative height change that ends the implicit outer iteration.
    pub coupling_tol: f64,
    pub max_outer: usize,
    pub picard: PicardOptions,
    /// Seed Picard with the previous step's velocity.
    pub warm_start: bool,
}

impl SimConfig {
    pub fn new(case: CaseConfig, scheme: SchemeKind, dt: f64) -> Self {
        let t_final = case.t_final;
        Self {
            scheme,
            dt,
            t_final,
            case,
            edge_stabilization: true,
            coupling_tol: 1e-12,
            max_outer: 50,
            picard: PicardOptions::default(),
            warm_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.case.fluid.validate()?;
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(&format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return bad(&format!("final time must be non-negative, got {}", self.t_final));
        }
        if !(self.coupling_tol > 0.0 && self.coupling_tol < 1.0) || !(self.picard.tol > 0.0 && self.picard.tol < 1.0) {
            return bad("tolerances must lie in (0, 1)");
        }
        if self.max_outer == 0 || self.picard.max_iter == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }
}

/// State between steps.
#[derive(Debug, Clone)]
pub struct SimState {
    pub grid: SurfaceGrid,
    pub mesh: VolumeMesh,
    pub space: Arc<FunctionSpace>,
    pub t: f64,
    pub n: usize,
    /// Stokes solution of the last step (on the domain it was solved on).
    pub last: Option<StokesSolution>,
}

impl SimState {
    pub fn initial(case: &CaseConfig) -> Result<Self> {
        let grid = case.initial_grid()?;
        let mesh = build_extruded_mesh(&grid, case.ny)?;
        let space = Arc::new(FunctionSpace::velocity(&mesh));
        Ok(Self { grid, mesh, space, t: 0.0, n: 0, last: None })
    }

    fn advance(&self, grid: SurfaceGrid, mesh: VolumeMesh, dt: f64, sol: StokesSolution) -> Self {
        Self { grid, mesh, space: Arc::clone(&self.space), t: self.t + dt, n: self.n + 1, last: Some(sol) }
    }
}

/// Weakly stable step
/// `min(Δt_max, ε (4/ρg) ‖√μ Du‖² / (∫ ω(u·n)² ds + 2∫ (u·n) a ds))`,
/// or `Δt_max` when the denominator is not positive.
pub fn weak_stable_dt(
    mesh: &VolumeMesh,
    space: &FunctionSpace,
    grid: &SurfaceGrid,
    sol: &StokesSolution,
    rho_g: f64,
    eps: f64,
    dt_max: f64,
    a: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let trace = extract_trace(space, grid, &sol.u.values)?;
    let q = crate::fem::gauss3_unit();
    let mut denom = 0.0;
    for c in 0..grid.n_cells() {
        let (x0, dx) = (grid.nodes()[c], grid.diameter(c));
        let flux = trace.normal_flux(grid, c);
        for (k, (p, w)) in q.points.iter().zip(&q.weights).enumerate() {
            // ds = ω dx and ω(u·n) is the traced flux
            denom += dx * w * (flux[k] * flux[k] + 2.0 * flux[k] * a(x0 + p[0] * dx));
        }
    }
    if !(denom > 0.0) {
        return Ok(dt_max);
    }
    let num = eps * 4.0 / rho_g * strain_energy(mesh, space, &sol.u.values, &sol.mu);
    Ok(dt_max.min(num / denom))
}

fn source_at(cfg: &SimConfig, t: f64) -> impl Fn(f64) -> f64 {
    let src = cfg.case.source;
    move |x| src.eval(x, t)
}

struct StepPieces {
    /// New heights, not yet checked for positive thickness.
    new_h: Vec<f64>,
    sol: StokesSolution,
    dt: f64,
    /// Mesh the velocity lives on.
    sol_mesh: VolumeMesh,
    /// Time level of the source in the energy sides.
    a_time: f64,
    edge_dissipation: f64,
    outer_iters: usize,
}

/// One step of the configured scheme with nominal step `dt` (the last step of a run
/// may be shorter). `EE_UNSTAB_W` picks its own step no larger than `dt`.
pub fn step(state: &SimState, cfg: &SimConfig, dt: f64) -> Result<(SimState, DiagnosticsRecord)> {
    let (rec, next) = step_recorded(state, cfg, dt)?;
    Ok((next?, rec))
}

/// Volume `∫ (h - b)` of a piecewise-linear profile, valid for any sign of the thickness.
fn profile_volume(grid: &SurfaceGrid, h: &[f64]) -> f64 {
    (0..grid.n_cells())
        .map(|c| 0.5 * grid.diameter(c) * (h[c] - grid.bed()[c] + h[c + 1] - grid.bed()[c + 1]))
        .sum()
}

/// One step whose diagnostics are kept even when the new surface is not a valid
/// domain (the inner error). The outer error means no height was computed.
pub fn step_recorded(
    state: &SimState,
    cfg: &SimConfig,
    dt: f64,
) -> Result<(DiagnosticsRecord, Result<SimState>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let pieces = match cfg.scheme {
        SchemeKind::Ie => implicit_step(state, cfg, dt)?,
        _ => explicit_step(state, cfg, dt)?,
    };
    let StepPieces { new_h, sol, dt, sol_mesh, a_time, edge_dissipation, outer_iters } = pieces;
    let rho_g = cfg.case.fluid.rho_g();
    let a = source_at(cfg, a_time);
    let strain = strain_energy(&sol_mesh, &state.space, &sol.u.values, &sol.mu);
    let sides = energy_sides(&state.grid, &new_h, strain, dt, rho_g, &a);
    let a_int = source_moments(&state.grid, &a).integral;
    let volume = profile_volume(&state.grid, &new_h);
    let record = DiagnosticsRecord {
        step: state.n + 1,
        t: state.t + dt,
        dt,
        h_prev_l2_sq: sides.h_prev_l2_sq,
        h_l2_sq: sides.h_l2_sq,
        strain_energy: strain,
        e_l: sides.e_l,
        e_r: sides.e_r,
        e_bar: 0.0,
        a_l2_sq: sides.a_l2_sq,
        a_dot_h_prev: sides.a_dot_h_prev,
        a_dot_h_new: sides.a_dot_h_new,
        a_integral: a_int,
        edge_dissipation,
        increment_sq: sides.increment_sq,
        volume,
        step_volume_drift: volume - domain_volume(&state.grid) - dt * a_int,
        volume_drift: 0.0,
        picard_iters: sol.picard_iterations,
        outer_iters,
    };
    let next = state
        .grid
        .with_height(new_h)
        .map_err(Error::from)
        .and_then(|g| {
            let mesh = remap_vertical(&state.mesh, &state.grid, &g)?;
            Ok(state.advance(g, mesh, dt, sol))
        });
    Ok((record, next))
}

fn explicit_step(state: &SimState, cfg: &SimConfig, dt: f64) -> Result<StepPieces> {
    let fluid = &cfg.case.fluid;
    let a = source_at(cfg, state.t);
    let stab = match cfg.scheme {
        SchemeKind::EeStab => Stabilization::NormalPenalty { dt, a: &a },
        SchemeKind::EeFssa | SchemeKind::SieFssa => Stabilization::Fssa { dt, a: &a },
        _ => Stabilization::None,
    };
    let initial = if cfg.warm_start { state.last.as_ref().map(|s| s.u.values.as_slice()) } else { None };
    let sol = solve_with_space(&state.mesh, &state.space, &state.grid, fluid, stab, cfg.picard, initial)?;
    let dt = match cfg.scheme {
        SchemeKind::EeUnstabW { eps, dt_max } => {
            weak_stable_dt(&state.mesh, &state.space, &state.grid, &sol, fluid.rho_g(), eps, dt_max.min(dt), &a)?
        }
        _ => dt,
    };
    let mode = match cfg.scheme {
        SchemeKind::SieFssa => AdvectionMode::SemiImplicit,
        _ => AdvectionMode::Explicit,
    };
    let trace = extract_trace(&state.space, &state.grid, &sol.u.values)?;
    let up = solve_height(&state.grid, &trace, dt, mode, cfg.edge_stabilization, &a)?;
    let edge_dissipation = up.system.jump.bilinear(&up.h_new, &up.h_new);
    Ok(StepPieces {
        new_h: up.h_new,
        sol,
        dt,
        sol_mesh: state.mesh.clone(),
        a_time: state.t,
        edge_dissipation,
        outer_iters: 0,
    })
}

/// Implicit Euler. Each outer iteration fixes the domain `Ω(hᵏ)` and solves velocity,
/// pressure and the new height together,
///
/// ```text
/// [ A     -Bᵀ   ρgG                ] [u]   [ f + ρgG hᵏ              ]
/// [ -B     0    0                  ] [π] = [ 0                       ]
/// [ -ρgGᵀ  0    (ρg/Δt)(M + ΔtC + ΔtJ) ] [ĥ]   [ (ρg/Δt)(M hⁿ + Δt ∫a w) ]
/// ```
///
/// where `ρgG(ĥ - hᵏ)` is the weight of the layer between the fixed and the new
/// surface, and `C`, `J` use the previous velocity iterate. The loop stops when
/// `‖ĥ - hᵏ‖₂ / ‖ĥ‖₂ < coupling_tol`; at that point the discrete implicit system
/// holds on `Ω(hⁿ⁺¹)`.
fn implicit_step(state: &SimState, cfg: &SimConfig, dt: f64) -> Result<StepPieces> {
    let fluid = cfg.case.fluid;
    let rho_g = fluid.rho_g();
    let t_new = state.t + dt;
    let a = source_at(cfg, t_new);
    let space = &*state.space;
    let (nu, ng) = (space.n_dofs(), state.grid.n_nodes());
    let mass = surface_mass_matrix(&state.grid);
    let mut rhs_h = mass.matvec(state.grid.height());
    for (r, l) in rhs_h.iter_mut().zip(load_vector(&state.grid, &a)) {
        *r = rho_g / dt * (*r + dt * l);
    }

    let mut grid = state.grid.clone();
    let mut mesh = state.mesh.clone();
    let mut u_prev: Option<Vec<f64>> = state.last.as_ref().map(|s| s.u.values.clone());
    let mut change = f64::INFINITY;
    for outer in 1..=cfg.max_outer {
        let trace = match &u_prev {
            Some(u) => extract_trace(space, &grid, u)?,
            None => SurfaceTrace {
                ux: vec![[0.0; 3]; grid.n_cells()],
                uz: vec![[0.0; 3]; grid.n_cells()],
                node_speed: vec![0.0; ng],
                heights: grid.height().to_vec(),
            },
        };
        let seed = u_prev.clone().unwrap_or_else(|| vec![0.0; nu]);
        let mu = viscosity_field(&mesh, space, &seed, fluid.mu0, fluid.p, fluid.delta)?;
        let ls = linear_system(&mesh, space, &grid, &fluid, &mu, Stabilization::None)?;
        let sys = &ls.sys;
        let np = sys.n_pressure();

        let mut g = assemble_surface_coupling(space, &grid)?;
        g.zero_rows_cols(Some(&sys.fixed), None);
        let gt = g.transpose();
        let gamma = if cfg.edge_stabilization { edge_coefficients(&grid, &trace) } else { vec![0.0; ng] };
        let jump = edge_jump_matrix(&grid, &gamma);
        let height_block = mass
            .add_scaled(1.0, &advection_matrix(&grid, &trace), dt)
            .add_scaled(1.0, &jump, dt);
        let bt = sys.b.transpose();
        let k = SparseMatrix::from_blocks(&[nu, np, ng], &[nu, np, ng], &[
            vec![Some((&sys.a, 1.0)), Some((&bt, -1.0)), Some((&g, rho_g))],
            vec![Some((&sys.b, -1.0)), None, None],
            vec![Some((&gt, -rho_g)), None, Some((&height_block, rho_g / dt))],
        ]);
        let gh = g.matvec(grid.height());
        let mut rhs = Vec::with_capacity(nu + np + ng);
        rhs.extend(sys.f.iter().zip(&gh).map(|(f, v)| f + rho_g * v));
        rhs.extend(sys.g.iter().map(|v| -v));
        rhs.extend_from_slice(&rhs_h);

        let mut x = Factorization::new(&k)?.solve(&rhs)?;
        let h_new = x.split_off(nu + np);
        let pi = x.split_off(nu);
        let u = x;

        let diff: Vec<f64> = h_new.iter().zip(grid.height()).map(|(a, b)| a - b).collect();
        let u_change = match &u_prev {
            Some(up) => {
                let d: Vec<f64> = u.iter().zip(up).map(|(a, b)| a - b).collect();
                let un = norm2(&u);
                if un > 0.0 { norm2(&d) / un } else { norm2(&d) }
            }
            None => f64::INFINITY,
        };
        change = norm2(&diff) / norm2(&h_new);
        let picard_done = fluid.is_newtonian() || u_change < cfg.picard.tol;
        let new_grid = grid.with_height(h_new)?;
        if change < cfg.coupling_tol && picard_done {
            let edge_dissipation = jump.bilinear(new_grid.height(), new_grid.height());
            let sol = StokesSolution {
                u: FEFunction::new(space, u)?,
                pi: FEFunction { kind: SpaceKind::PressureP1, values: pi },
                picard_iterations: outer,
                final_relative_change: if fluid.is_newtonian() { 0.0 } else { u_change },
                mu,
            };
            // the velocity lives on Ω(hᵏ), which agrees with Ω(hⁿ⁺¹) to the coupling tolerance
            return Ok(StepPieces {
                new_h: new_grid.height().to_vec(),
                sol,
                dt,
                sol_mesh: mesh,
                a_time: t_new,
                edge_dissipation,
                outer_iters: outer,
            });
        }
        mesh = remap_vertical(&mesh, &grid, &new_grid)?;
        grid = new_grid;
        u_prev = Some(u);
    }
    Err(Error::CouplingNonConvergence { iterations: cfg.max_outer, last_change: change })
}

/// Records of a run, the state reached and the error that stopped it early, if any.
/// A step whose new surface has non-positive thickness is still recorded (as the
/// last record) while `final_state` stays on the last valid domain.
#[derive(Debug)]
pub struct RunOutcome {
    pub ledger: EnergyLedger,
    pub final_state: SimState,
    pub failure: Option<Error>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Steps from `t = 0` to `t̂`, clipping the last step to land on `t̂`.
pub fn run(cfg: &SimConfig) -> Result<RunOutcome> {
    run_with(cfg, |_, _| Ok(()))
}

/// As [`run`], calling `observe` after every step (and once with the initial state
/// and no record).
pub fn run_with(
    cfg: &SimConfig,
    mut observe: impl FnMut(&SimState, Option<&DiagnosticsRecord>) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut state = SimState::initial(&cfg.case)?;
    let mut ledger = EnergyLedger::new(&state.grid);
    observe(&state, None)?;
    // steps shorter than this fraction of Δt are rounding remainders of t̂ / Δt
    let slack = 1e-9 * cfg.dt;
    let mut failure = None;
    while state.t < cfg.t_final - slack {
        let remaining = cfg.t_final - state.t;
        let dt = if remaining < cfg.dt + slack { remaining } else { cfg.dt };
        match step_recorded(&state, cfg, dt) {
            Ok((rec, Ok(next))) => {
                state = next;
                observe(&state, Some(&rec))?;
                ledger.push(rec);
            }
            Ok((rec, Err(e))) => {
                // the failing step stays in the ledger; the state stays at the last valid domain
                ledger.push(rec);
                failure = Some(e);
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    ledger.finalize();
    Ok(RunOutcome { ledger, final_state: state, failure })
}
