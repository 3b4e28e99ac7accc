//! Ledger CSV and legacy VTK output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::EnergyLedger;
use crate::error::{Error, Result};
use crate::fem::FunctionSpace;
use crate::mesh::VolumeMesh;

pub const CSV_HEADER: &str =
    "step,t,h_l2_sq,strain_energy,E_L,E_R,E_bar,volume,volume_drift,picard_iters,outer_iters";

/// Where a run writes its files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSink {
    pub csv: Option<PathBuf>,
    pub vtk_dir: Option<PathBuf>,
    /// Write a VTK file every `cadence` steps.
    pub vtk_cadence: usize,
}

impl Default for OutputSink {
    fn default() -> Self {
        Self { csv: None, vtk_dir: None, vtk_cadence: 1 }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Ledger as CSV text; floats use the shortest round-trip representation.
pub fn ledger_csv(ledger: &EnergyLedger) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &ledger.records {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            r.step,
            r.t,
            r.h_l2_sq,
            r.strain_energy,
            r.e_l,
            r.e_r,
            r.e_bar,
            r.volume,
            r.volume_drift,
            r.picard_iters,
            r.outer_iters
        );
    }
    s
}

pub fn write_ledger_csv(ledger: &EnergyLedger, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, ledger_csv(ledger)).map_err(|e| io_err(path, e))
}

/// Legacy ASCII VTK (3.0) of the P2 velocity and P1 pressure at the mesh vertices.
///
/// Triangles are written as linear cells on the vertices; `u` is sampled at the
/// vertex nodes, which are the first `n_vertices` velocity nodes.
pub fn vtk_string(mesh: &VolumeMesh, space: &FunctionSpace, u: &[f64], pi: &[f64]) -> Result<String> {
    let nv = mesh.vertices().len();
    if u.len() != space.n_dofs() || pi.len() != nv || space.n_vertices() != nv {
        return Err(Error::Parameter(format!(
            "VTK output needs {} velocity and {nv} pressure values, got {} and {}",
            space.n_dofs(),
            u.len(),
            pi.len()
        )));
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nfree-surface Stokes state\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", v[0], v[1]);
    }
    let nt = mesh.triangles().len();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    s.push_str("VECTORS u double\n");
    for n in 0..nv {
        let _ = writeln!(s, "{:e} {:e} 0", u[2 * n], u[2 * n + 1]);
    }
    s.push_str("SCALARS pi double 1\nLOOKUP_TABLE default\n");
    for p in pi {
        let _ = writeln!(s, "{p:e}");
    }
    Ok(s)
}

pub fn write_vtk(mesh: &VolumeMesh, space: &FunctionSpace, u: &[f64], pi: &[f64], path: &Path) -> Result<()> {
    let s = vtk_string(mesh, space, u, pi)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}
