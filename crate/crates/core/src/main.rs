use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fsflow::cases::{greenland_synthetic_case, tank_case, SourceTerm, UnitSystem};
use fsflow::config::{parse_config, RunConfig};
use fsflow::diagnostics::{convergence_base, convergence_study, paper_schedule, ConvergenceReport, ReferenceSpec};
use fsflow::output::{write_ledger_csv, write_vtk, OutputSink};
use fsflow::schemes::{run_with, RunOutcome, SchemeKind, SimConfig};
use fsflow::{Error, Result};

/// Stabilized free-surface Stokes time stepping.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run; passes when the run completes and the scheme's guarantees hold.
    Run(Common),
    /// One run per time step; checks the stability and conservation pattern.
    SweepDt {
        #[command(flatten)]
        common: Common,
        /// Comma-separated time steps (case units); defaults depend on the case.
        #[arg(long, value_delimiter = ',')]
        dts: Vec<f64>,
    },
    /// Tank refinement study against an `EE_UNSTAB_W` reference.
    Convergence {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Halve the reference resolution and use the three coarsest levels.
        #[arg(long)]
        quick: bool,
    },
    /// Runs all schemes on the tank and checks which conserve volume.
    VolumeCheck {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheme name, e.g. EE_STAB.
    #[arg(long)]
    scheme: Option<String>,
    /// Time step in case units (years for the ice-sheet case).
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory for CSV and VTK files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the synthetic ice-sheet geometry; selects that case.
    #[arg(long)]
    seed: Option<u64>,
    /// Surface cells and layers (overrides the case defaults).
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Final time in case units.
    #[arg(long)]
    t_final: Option<f64>,
    /// Use the oscillating source term on the tank.
    #[arg(long)]
    source: bool,
    /// Turn edge stabilization off.
    #[arg(long)]
    no_edge: bool,
}

impl Common {
    fn build(&self) -> Result<RunConfig> {
        let mut rc = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                parse_config(&text)?
            }
            None => {
                let case = match self.seed {
                    Some(s) => greenland_synthetic_case(s),
                    None => tank_case(),
                };
                let dt = case.time_to_seconds(self.dt.unwrap_or(if self.seed.is_some() { 10.0 } else { 0.5 }));
                let scheme = SchemeKind::parse(self.scheme.as_deref().unwrap_or("EE_STAB"), dt)?;
                RunConfig { sim: SimConfig::new(case, scheme, dt), output: OutputSink::default() }
            }
        };
        let sim = &mut rc.sim;
        if self.config.is_some() {
            if let Some(name) = &self.scheme {
                sim.scheme = SchemeKind::parse(name, sim.dt)?;
            }
            if let Some(dt) = self.dt {
                sim.dt = sim.case.time_to_seconds(dt);
                if let SchemeKind::EeUnstabW { dt_max, .. } = &mut sim.scheme {
                    *dt_max = sim.dt;
                }
            }
        }
        if let Some(nx) = self.nx {
            sim.case.nx = nx;
        }
        if let Some(ny) = self.ny {
            sim.case.ny = ny;
        }
        if let Some(t) = self.t_final {
            sim.t_final = sim.case.time_to_seconds(t);
        }
        if self.source {
            sim.case.source = SourceTerm::TankOscillating;
        }
        if self.no_edge {
            sim.edge_stabilization = false;
        }
        if let Some(out) = &self.out {
            rc.output.csv = Some(out.join("ledger.csv"));
        }
        Ok(rc)
    }
}

/// Stability tolerance on the normalized energy.
const ENERGY_TOL: f64 = 1e-12;
/// Per-step relative volume drift of the conservative schemes.
const VOLUME_TOL: f64 = 1e-10;

fn execute(rc: &RunConfig, csv: Option<&Path>) -> Result<RunOutcome> {
    let sink = &rc.output;
    let outcome = run_with(&rc.sim, |state, _| {
        if let (Some(dir), Some(sol)) = (&sink.vtk_dir, &state.last) {
            if state.n % sink.vtk_cadence == 0 {
                // the velocity of step n lives on the previous domain; it is written on the current one
                let path = dir.join(format!("state_{:05}.vtk", state.n));
                write_vtk(&state.mesh, &state.space, &sol.u.values, &sol.pi.values, &path)?;
            }
        }
        Ok(())
    })?;
    if let Some(p) = csv.or(sink.csv.as_deref()) {
        write_ledger_csv(&outcome.ledger, p)?;
    }
    Ok(outcome)
}

struct Verdict {
    label: String,
    pass: bool,
    detail: String,
}

fn summarize(rc: &RunConfig, out: &RunOutcome) -> Vec<Verdict> {
    let sim = &rc.sim;
    let label = format!("{} dt={}", sim.scheme, sim.case.time_from_seconds(sim.dt));
    // schemes without a stability guarantee may legitimately stop on a broken surface
    let must_complete = matches!(sim.scheme, SchemeKind::EeStab | SchemeKind::Ie | SchemeKind::EeUnstabW { .. });
    let mut v = vec![Verdict {
        label: format!("{label}: {}", if must_complete { "completed" } else { "ran" }),
        pass: out.completed() || !must_complete,
        detail: out.failure.as_ref().map_or(format!("{} steps", out.ledger.records.len()), |e| e.to_string()),
    }];
    let emax = out.ledger.max_normalized_energy().unwrap_or(f64::NAN);
    match sim.scheme {
        SchemeKind::EeStab => v.push(Verdict {
            label: format!("{label}: energy stable"),
            pass: emax <= ENERGY_TOL,
            detail: format!("max Ē = {emax:e}"),
        }),
        SchemeKind::EeUnstab => v.push(Verdict {
            label: format!("{label}: energy growth witnessed"),
            pass: emax > 0.0,
            detail: format!("max Ē = {emax:e}"),
        }),
        SchemeKind::Ie => {
            let worst = out
                .ledger
                .records
                .iter()
                .map(|r| (r.e_l - r.implicit_bound()) / r.h_prev_l2_sq)
                .fold(f64::NEG_INFINITY, f64::max);
            v.push(Verdict {
                label: format!("{label}: implicit estimate"),
                pass: worst <= 1e-10,
                detail: format!("max (E_L - bound)/‖hⁿ‖² = {worst:e}"),
            });
        }
        _ => {}
    }
    let drift = out.ledger.max_step_drift();
    if sim.scheme.conserves_volume() {
        v.push(Verdict {
            label: format!("{label}: volume conserved"),
            pass: drift <= VOLUME_TOL,
            detail: format!("max step drift {drift:e}"),
        });
    }
    v
}

fn report(verdicts: &[Verdict]) -> ExitCode {
    for v in verdicts {
        println!("{} {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.label, v.detail);
    }
    if verdicts.iter().all(|v| v.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cmd_run(c: &Common) -> Result<ExitCode> {
    let rc = c.build()?;
    let out = execute(&rc, None)?;
    Ok(report(&summarize(&rc, &out)))
}

fn cmd_sweep(c: &Common, dts: &[f64]) -> Result<ExitCode> {
    let base = c.build()?;
    let dts: Vec<f64> = if !dts.is_empty() {
        dts.to_vec()
    } else if base.sim.case.units == UnitSystem::SiYears {
        vec![0.5, 10.0, 50.0]
    } else {
        vec![0.05, 0.5, 1.0, 2.0]
    };
    let mut verdicts = Vec::new();
    for dt in dts {
        let mut rc = base.clone();
        rc.sim.dt = rc.sim.case.time_to_seconds(dt);
        if let SchemeKind::EeUnstabW { dt_max, .. } = &mut rc.sim.scheme {
            *dt_max = rc.sim.dt;
        }
        let csv = c.out.as_ref().map(|o| o.join(format!("{}_dt{dt}.csv", rc.sim.scheme)));
        let out = execute(&rc, csv.as_deref())?;
        verdicts.extend(summarize(&rc, &out));
    }
    Ok(report(&verdicts))
}

fn cmd_volume(c: &Common) -> Result<ExitCode> {
    let base = c.build()?;
    let mut verdicts = Vec::new();
    for name in SchemeKind::NAMES {
        let mut rc = base.clone();
        rc.sim.scheme = SchemeKind::parse(name, rc.sim.dt)?;
        let csv = c.out.as_ref().map(|o| o.join(format!("{name}.csv")));
        let out = execute(&rc, csv.as_deref())?;
        let drift = out.ledger.max_step_drift();
        let total = out.ledger.max_total_drift();
        let must_complete = matches!(rc.sim.scheme, SchemeKind::EeStab | SchemeKind::Ie | SchemeKind::EeUnstabW { .. });
        let (pass, what) = if rc.sim.scheme.conserves_volume() {
            ((out.completed() || !must_complete) && drift <= VOLUME_TOL, "conserves volume")
        } else {
            (out.completed() && total > 1e-6, "does not conserve volume")
        };
        verdicts.push(Verdict {
            label: format!("{name}: {what}"),
            pass,
            detail: format!("{} steps, max step drift {drift:e}, max total drift {total:e}", out.ledger.records.len()),
        });
    }
    Ok(report(&verdicts))
}

fn cmd_convergence(out: Option<&Path>, quick: bool) -> Result<ExitCode> {
    let base = convergence_base();
    let mut schedule = paper_schedule();
    let mut reference = ReferenceSpec::paper();
    if quick {
        schedule.truncate(3);
        reference.level.nx /= 2;
        reference.level.ny /= 2;
        reference.level.dt *= 2.0;
        reference.scheme = SchemeKind::EeUnstabW { eps: 0.5, dt_max: reference.level.dt };
    }
    let schemes = [
        SchemeKind::EeStab,
        SchemeKind::EeUnstabW { eps: 0.5, dt_max: 0.5 },
        SchemeKind::EeFssa,
        SchemeKind::SieFssa,
    ];
    let reports = convergence_study(&base, &schemes, &schedule, &reference)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
        let path = dir.join("convergence.csv");
        std::fs::write(&path, convergence_csv(&reports)).map_err(|e| Error::Io { path, source: e })?;
    }
    let mut verdicts = Vec::new();
    let in_range = |o: Option<f64>, lo: f64, hi: f64| o.is_some_and(|o| o >= lo && o <= hi);
    for r in &reports {
        let name = r.scheme.name();
        let u_range = if matches!(r.scheme, SchemeKind::EeUnstabW { .. }) { (1.6, 2.4) } else { (0.7, 1.3) };
        for (what, o, (lo, hi)) in [
            ("h", r.order_h, (0.7, 1.3)),
            ("u_perp", r.order_u_perp, (0.7, 1.3)),
            ("u", r.order_u, u_range),
        ] {
            verdicts.push(Verdict {
                label: format!("{name}: {what} order in [{lo}, {hi}]"),
                pass: in_range(o, lo, hi),
                detail: format!("{o:?}"),
            });
        }
    }
    Ok(report(&verdicts))
}

fn convergence_csv(reports: &[ConvergenceReport]) -> String {
    let mut s = String::from("scheme,dt,nx,ny,err_h,err_u_perp,err_u\n");
    for r in reports {
        for (lv, e) in r.levels.iter().zip(&r.errors) {
            match e {
                Ok(e) => s.push_str(&format!("{},{},{},{},{:e},{:e},{:e}\n", r.scheme, lv.dt, lv.nx, lv.ny, e.h, e.u_perp, e.u)),
                Err(_) => s.push_str(&format!("{},{},{},{},nan,nan,nan\n", r.scheme, lv.dt, lv.nx, lv.ny)),
            }
        }
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::SweepDt { common, dts } => cmd_sweep(common, dts),
        Command::Convergence { out, quick } => cmd_convergence(out.as_deref(), *quick),
        Command::VolumeCheck { common } => cmd_volume(common),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
