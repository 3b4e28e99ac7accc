//! Case definitions: the tank and a seeded synthetic ice-sheet slice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::SurfaceGrid;
use crate::stokes::FluidParams;

/// Seconds per year.
pub const YEAR: f64 = 31_556_926.0;

/// Horizontal extent of the ice-sheet slice (m).
pub const GREENLAND_INTERVAL: (f64, f64) = (-428_675.0, 489_475.0);
/// Ice softness `A` (Pa⁻³ s⁻¹).
pub const GREENLAND_SOFTNESS: f64 = 3.1688e-24;

/// Power-law coefficient `μ0 = 2^{-2/3} A^{-1/3}` for Glen's law with `n = 3`,
/// written against the Frobenius norm of the strain rate.
pub fn glen_mu0(softness: f64) -> f64 {
    2f64.powf(-2.0 / 3.0) * softness.powf(-1.0 / 3.0)
}

/// Source term `a(x, t)` in the height equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceTerm {
    Zero,
    /// `0.2 x² (0.3 + sin x) sin 2t`.
    TankOscillating,
    Constant(f64),
}

impl SourceTerm {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::TankOscillating => 0.2 * x * x * (0.3 + x.sin()) * (2.0 * t).sin(),
            Self::Constant(c) => c,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero) || *self == Self::Constant(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitSystem {
    Nondimensional,
    /// Lengths in metres, times in seconds, user-facing times in years.
    SiYears,
}

/// Rectangular bump added to the initial height on `[x0, x1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPerturbation {
    pub x0: f64,
    pub x1: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseKind {
    /// `h = 0.5 tanh(2x - 1) + 0.2` over a flat bed.
    Tank { bed: f64 },
    /// Seeded smooth dome over a seeded rough bed.
    GreenlandSynthetic { seed: u64 },
    /// Heights and bed tabulated at the `nx + 1` uniform nodes.
    Custom { height: Vec<f64>, bed: Vec<f64> },
}

/// Geometry, material and discretization of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub kind: CaseKind,
    pub interval: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub fluid: FluidParams,
    pub source: SourceTerm,
    /// Default final time (s).
    pub t_final: f64,
    pub units: UnitSystem,
    pub perturbation: Option<StepPerturbation>,
}

pub fn tank_height(x: f64) -> f64 {
    0.5 * (2.0 * x - 1.0).tanh() + 0.2
}

/// Tank on `[-1, 1]` with `ρg = 9.82`, `μ = 0.3`, `t̂ = 4`, bed at `-1`.
pub fn tank_case() -> CaseConfig {
    CaseConfig {
        kind: CaseKind::Tank { bed: -1.0 },
        interval: (-1.0, 1.0),
        nx: 40,
        ny: 40,
        fluid: FluidParams::newtonian(1.0, 9.82, 0.3),
        source: SourceTerm::Zero,
        t_final: 4.0,
        units: UnitSystem::Nondimensional,
        perturbation: None,
    }
}

/// Synthetic ice-sheet slice with ice parameters: `ρ = 910`, `g = 9.82`, `p = 4/3`,
/// `Nx = 300`, `Ny = 20`, `t̂ = 200` years, no source.
pub fn greenland_synthetic_case(seed: u64) -> CaseConfig {
    CaseConfig {
        kind: CaseKind::GreenlandSynthetic { seed },
        interval: GREENLAND_INTERVAL,
        nx: 300,
        ny: 20,
        fluid: FluidParams { rho: 910.0, g: 9.82, mu0: glen_mu0(GREENLAND_SOFTNESS), p: 4.0 / 3.0, delta: 1e-15 },
        source: SourceTerm::Zero,
        t_final: 200.0 * YEAR,
        units: UnitSystem::SiYears,
        perturbation: None,
    }
}

/// Minimum ice thickness of the synthetic profile (m).
pub const GREENLAND_MIN_THICKNESS: f64 = 100.0;

struct Mode {
    amplitude: f64,
    wavelength: f64,
    phase: f64,
}

fn modes(rng: &mut ChaCha8Rng, count: usize, total_amplitude: f64, lambda: (f64, f64)) -> Vec<Mode> {
    let raw: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            // log-uniform wavelengths, amplitude growing with wavelength
            let w = (lambda.0.ln() + rng.random::<f64>() * (lambda.1 / lambda.0).ln()).exp();
            let a = rng.random_range(0.2..1.0) * (w / lambda.1).sqrt();
            (a, w, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let sum: f64 = raw.iter().map(|r| r.0).sum();
    raw.into_iter()
        .map(|(a, w, p)| Mode { amplitude: a * total_amplitude / sum, wavelength: w, phase: p })
        .collect()
}

fn eval_modes(modes: &[Mode], x: f64) -> f64 {
    modes.iter().map(|m| m.amplitude * (std::f64::consts::TAU * x / m.wavelength + m.phase).sin()).sum()
}

/// Bedrock and surface samples of the synthetic slice at the given nodes.
pub fn greenland_profiles(seed: u64, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bed_modes = modes(&mut rng, 20, 350.0, (15e3, 450e3));
    let surf_modes = modes(&mut rng, 8, 100.0, (100e3, 600e3));
    let (x0, x1) = GREENLAND_INTERVAL;
    let (mid, half) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
    let bed: Vec<f64> = x.iter().map(|&xi| eval_modes(&bed_modes, xi)).collect();
    let h = x
        .iter()
        .zip(&bed)
        .map(|(&xi, &b)| {
            let xi_n = ((xi - mid) / half).clamp(-1.0, 1.0);
            let dome = 550.0 + 2350.0 * (1.0 - xi_n * xi_n).powi(2);
            (dome + eval_modes(&surf_modes, xi)).max(b + GREENLAND_MIN_THICKNESS)
        })
        .collect();
    (bed, h)
}

impl CaseConfig {
    /// Surface grid at `t = 0`.
    pub fn initial_grid(&self) -> Result<SurfaceGrid> {
        let (x0, x1) = self.interval;
        if !(x1 > x0) || self.nx == 0 || self.ny == 0 {
            return Err(Error::Parameter(format!(
                "invalid case discretization: interval ({x0}, {x1}), nx {}, ny {}",
                self.nx, self.ny
            )));
        }
        let x = crate::mesh::uniform_nodes(x0, x1, self.nx);
        let (bed, mut h): (Vec<f64>, Vec<f64>) = match &self.kind {
            CaseKind::Tank { bed } => (vec![*bed; x.len()], x.iter().map(|&xi| tank_height(xi)).collect()),
            CaseKind::GreenlandSynthetic { seed } => greenland_profiles(*seed, &x),
            CaseKind::Custom { height, bed } => (bed.clone(), height.clone()),
        };
        if let Some(p) = self.perturbation {
            for (hi, &xi) in h.iter_mut().zip(&x) {
                if xi >= p.x0 && xi <= p.x1 {
                    *hi += p.amplitude;
                }
            }
        }
        Ok(SurfaceGrid::new(x, h, bed)?)
    }

    /// Converts a user-facing time (years for SI cases) to seconds.
    pub fn time_to_seconds(&self, t: f64) -> f64 {
        match self.units {
            UnitSystem::Nondimensional => t,
            UnitSystem::SiYears => t * YEAR,
        }
    }

    pub fn time_from_seconds(&self, t: f64) -> f64 {
        match self.units {
            UnitSystem::Nondimensional => t,
            UnitSystem::SiYears => t / YEAR,
        }
    }
}
