//! Energy, volume and identity diagnostics, plus the space-time convergence study.

use crate::error::{Error, Result};
use crate::fem::{
    eval_velocity, gauss3_unit, gauss5_unit, load_vector, strain_rate_sq, surface_mass_matrix, triangle_degree4,
    FunctionSpace, Triangle,
};
use crate::freesurface::SurfaceTrace;
use crate::linalg::dot;
use crate::mesh::{SurfaceGrid, VolumeMesh};

mod convergence;
pub use convergence::{
    convergence_base, convergence_study, fitted_order, level_errors, paper_schedule, snapshot, study_scheme, ConvergenceLevel,
    ConvergenceReport, LevelErrors, ReferenceSpec, Snapshot,
};

/// `‖√μ Du‖²_{L²(Ω)}` with the assembly quadrature.
pub fn strain_energy(mesh: &VolumeMesh, space: &FunctionSpace, u: &[f64], mu: &[f64]) -> f64 {
    let q = triangle_degree4();
    let sr = strain_rate_sq(mesh, space, u);
    let mut total = 0.0;
    for c in 0..space.n_cells() {
        let jac = Triangle::of(mesh, c).det.abs();
        for (k, w) in q.weights.iter().enumerate() {
            total += w * jac * mu[6 * c + k] * sr[6 * c + k];
        }
    }
    total
}

/// `μ0 ‖Du‖^p_{L^p(Ω)}` with the assembly quadrature.
pub fn lp_strain(mesh: &VolumeMesh, space: &FunctionSpace, u: &[f64], mu0: f64, p: f64) -> f64 {
    let q = triangle_degree4();
    let sr = strain_rate_sq(mesh, space, u);
    let mut total = 0.0;
    for c in 0..space.n_cells() {
        let jac = Triangle::of(mesh, c).det.abs();
        for (k, w) in q.weights.iter().enumerate() {
            total += w * jac * sr[6 * c + k].powf(0.5 * p);
        }
    }
    mu0 * total
}

/// Surface integrals of the source term against the shared surface quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceMoments {
    /// `‖a‖²`.
    pub l2_sq: f64,
    /// `∫ a`.
    pub integral: f64,
}

pub fn source_moments(grid: &SurfaceGrid, a: &dyn Fn(f64) -> f64) -> SourceMoments {
    let q = gauss3_unit();
    let (mut l2_sq, mut integral) = (0.0, 0.0);
    for c in 0..grid.n_cells() {
        let (x0, dx) = (grid.nodes()[c], grid.diameter(c));
        for (p, w) in q.points.iter().zip(&q.weights) {
            let v = a(x0 + p[0] * dx);
            l2_sq += dx * w * v * v;
            integral += dx * w * v;
        }
    }
    SourceMoments { l2_sq, integral }
}

/// Both sides of the per-step energy estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySides {
    pub e_l: f64,
    pub e_r: f64,
    pub h_prev_l2_sq: f64,
    pub h_l2_sq: f64,
    pub a_l2_sq: f64,
    pub a_dot_h_prev: f64,
    pub a_dot_h_new: f64,
    pub a_integral: f64,
    pub increment_sq: f64,
}

/// `E_L = ‖hⁿ⁺¹‖² + (4Δt/ρg)‖√μ Du‖²`, `E_R = ‖hⁿ‖² + 2Δt(a, hⁿ) + Δt²‖a‖²`.
///
/// `a` is the source at the time level the scheme uses.
pub fn energy_sides(
    prev: &SurfaceGrid,
    new_h: &[f64],
    strain: f64,
    dt: f64,
    rho_g: f64,
    a: &dyn Fn(f64) -> f64,
) -> EnergySides {
    let m = surface_mass_matrix(prev);
    let h0 = prev.height();
    let inc: Vec<f64> = new_h.iter().zip(h0).map(|(a, b)| a - b).collect();
    let la = load_vector(prev, a);
    let mom = source_moments(prev, a);
    let h_prev_l2_sq = m.bilinear(h0, h0);
    let h_l2_sq = m.bilinear(new_h, new_h);
    let a_dot_h_prev = dot(&la, h0);
    EnergySides {
        e_l: h_l2_sq + 4.0 * dt / rho_g * strain,
        e_r: h_prev_l2_sq + 2.0 * dt * a_dot_h_prev + dt * dt * mom.l2_sq,
        h_prev_l2_sq,
        h_l2_sq,
        a_l2_sq: mom.l2_sq,
        a_dot_h_prev,
        a_dot_h_new: dot(&la, new_h),
        a_integral: mom.integral,
        increment_sq: m.bilinear(&inc, &inc),
    }
}

/// One time step's worth of diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub h_prev_l2_sq: f64,
    pub h_l2_sq: f64,
    /// `‖√μ Du‖²` of the velocity the step used.
    pub strain_energy: f64,
    pub e_l: f64,
    pub e_r: f64,
    /// Normalized energy, filled once the run is complete.
    pub e_bar: f64,
    pub a_l2_sq: f64,
    pub a_dot_h_prev: f64,
    pub a_dot_h_new: f64,
    pub a_integral: f64,
    /// `hⁿ⁺¹ᵀ J hⁿ⁺¹`.
    pub edge_dissipation: f64,
    /// `‖hⁿ⁺¹ - hⁿ‖²`.
    pub increment_sq: f64,
    /// `|Ωⁿ⁺¹|`.
    pub volume: f64,
    /// `|Ωⁿ⁺¹| - |Ωⁿ| - Δt ∫a` for this step.
    pub step_volume_drift: f64,
    /// `|Ωⁿ⁺¹| - |Ω⁰| - Σ Δt ∫a`, filled by the ledger.
    pub volume_drift: f64,
    pub picard_iters: usize,
    pub outer_iters: usize,
}

impl DiagnosticsRecord {
    /// `E_L - E_R` plus the terms the energy estimates drop, for the implicit balance
    /// `‖hⁿ⁺¹‖² + (4Δt/ρg)D + 2Δt hᵀJh + ‖δh‖² = ‖hⁿ‖² + 2Δt(a, hⁿ⁺¹)`.
    pub fn implicit_balance_residual(&self) -> f64 {
        self.e_l + 2.0 * self.dt * self.edge_dissipation + self.increment_sq
            - self.h_prev_l2_sq
            - 2.0 * self.dt * self.a_dot_h_new
    }

    /// Right side of the implicit estimate `‖hⁿ‖² + 2Δt‖a‖‖hⁿ‖ + 2Δt²‖a‖²`.
    pub fn implicit_bound(&self) -> f64 {
        self.h_prev_l2_sq
            + 2.0 * self.dt * self.a_l2_sq.sqrt() * self.h_prev_l2_sq.sqrt()
            + 2.0 * self.dt * self.dt * self.a_l2_sq
    }
}

/// Per-step records of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub initial_volume: f64,
    pub initial_h_l2_sq: f64,
    pub records: Vec<DiagnosticsRecord>,
}

impl EnergyLedger {
    pub fn new(grid: &SurfaceGrid) -> Self {
        let m = surface_mass_matrix(grid);
        Self {
            initial_volume: crate::mesh::domain_volume(grid),
            initial_h_l2_sq: m.bilinear(grid.height(), grid.height()),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, mut rec: DiagnosticsRecord) {
        let added: f64 = self.records.iter().map(|r| r.dt * r.a_integral).sum::<f64>() + rec.dt * rec.a_integral;
        rec.volume_drift = rec.volume - self.initial_volume - added;
        self.records.push(rec);
    }

    /// Fills `e_bar` on every record. An empty ledger is left unchanged.
    pub fn finalize(&mut self) {
        if let Ok(e) = normalized_energy(self) {
            for (r, v) in self.records.iter_mut().zip(e) {
                r.e_bar = v;
            }
        }
    }

    pub fn max_normalized_energy(&self) -> Result<f64> {
        Ok(normalized_energy(self)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// All `Ēⁿ ≤ tol`.
    pub fn is_stable(&self, tol: f64) -> Result<bool> {
        Ok(self.max_normalized_energy()? <= tol)
    }

    /// Largest per-step volume drift relative to the initial volume.
    pub fn max_step_drift(&self) -> f64 {
        self.records.iter().map(|r| r.step_volume_drift.abs()).fold(0.0, f64::max) / self.initial_volume
    }

    /// Largest accumulated drift relative to the initial volume.
    pub fn max_total_drift(&self) -> f64 {
        volume_series(self).iter().map(|d| d.abs()).fold(0.0, f64::max) / self.initial_volume
    }
}

/// `Ēⁿ = (E_Lⁿ - E_Rⁿ) / maxₙ |E_Rⁿ|`.
pub fn normalized_energy(ledger: &EnergyLedger) -> Result<Vec<f64>> {
    if ledger.records.is_empty() {
        return Err(Error::EmptyLedger);
    }
    let scale = ledger.records.iter().map(|r| r.e_r.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Parameter("all right-hand energies vanish".into()));
    }
    Ok(ledger.records.iter().map(|r| (r.e_l - r.e_r) / scale).collect())
}

/// Accumulated drift `|Ωⁿ| - |Ω⁰| - Σ_{m<n} Δt ∫a(·, tᵐ)` after every step.
pub fn volume_series(ledger: &EnergyLedger) -> Vec<f64> {
    let mut added = 0.0;
    ledger
        .records
        .iter()
        .map(|r| {
            added += r.dt * r.a_integral;
            r.volume - ledger.initial_volume - added
        })
        .collect()
}

/// Both lemma residuals and the scales they are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaResiduals {
    /// `|(-u⊥∂x h + u_z, w)_{Ω⊥} - ∫_Γs (u·n) w ds|`.
    pub r1: f64,
    /// `|-ρg(ẑ, u)_Ω + ρg ∫_Γs (u·n) z ds|`.
    pub r2: f64,
    /// `(-u⊥∂x h + u_z, w)_{Ω⊥}`.
    pub surface_flux: f64,
    /// `-ρg(ẑ, u)_Ω`.
    pub gravity_work: f64,
}

/// Evaluates the change-of-domain and gravity-work identities.
///
/// The left sides use the surface trace on the horizontal grid; the right sides
/// are integrated along the physical top facets with the volume basis and a
/// 5-point rule, so the two paths share no code beyond the basis functions.
pub fn lemma_residuals(
    mesh: &VolumeMesh,
    space: &FunctionSpace,
    grid: &SurfaceGrid,
    trace: &SurfaceTrace,
    u: &[f64],
    rho_g: f64,
    w: &[f64],
) -> LemmaResiduals {
    let q3 = gauss3_unit();
    let mut surface_flux = 0.0;
    for c in 0..grid.n_cells() {
        let d = trace.normal_flux(grid, c);
        let dx = grid.diameter(c);
        for (k, (p, wt)) in q3.points.iter().zip(&q3.weights).enumerate() {
            surface_flux += dx * wt * d[k] * (w[c] * (1.0 - p[0]) + w[c + 1] * p[0]);
        }
    }
    let q5 = gauss5_unit();
    let (mut facet_w, mut facet_z) = (0.0, 0.0);
    for c in 0..grid.n_cells() {
        let facet = mesh.top_facet(c);
        let tri = facet.triangle;
        let t = Triangle::of(mesh, tri);
        let [vr, vl] = facet.vertices;
        let (pl, pr) = (mesh.vertices()[vl], mesh.vertices()[vr]);
        let len = (pr[0] - pl[0]).hypot(pr[1] - pl[1]);
        let n = [-(pr[1] - pl[1]) / len, (pr[0] - pl[0]) / len];
        for (p, wt) in q5.points.iter().zip(&q5.weights) {
            let x = [pl[0] + p[0] * (pr[0] - pl[0]), pl[1] + p[0] * (pr[1] - pl[1])];
            let v = eval_velocity(space, u, tri, t.barycentric(x));
            let un = v[0] * n[0] + v[1] * n[1];
            let wx = grid.interpolate(w, x[0]);
            facet_w += len * wt * un * wx;
            facet_z += len * wt * un * x[1];
        }
    }
    let qv = triangle_degree4();
    let mut uz_int = 0.0;
    for c in 0..space.n_cells() {
        let t = Triangle::of(mesh, c);
        for (p, wt) in qv.points.iter().zip(&qv.weights) {
            uz_int += wt * t.det.abs() * eval_velocity(space, u, c, [1.0 - p[0] - p[1], p[0], p[1]])[1];
        }
    }
    let gravity_work = -rho_g * uz_int;
    LemmaResiduals {
        r1: (surface_flux - facet_w).abs(),
        r2: (gravity_work + rho_g * facet_z).abs(),
        surface_flux,
        gravity_work,
    }
}

/// Total variation `Σ |h_{i+1} - h_i|`.
pub fn total_variation(h: &[f64]) -> f64 {
    h.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
