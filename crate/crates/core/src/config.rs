//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! # tank, stabilized explicit Euler
//! case = tank
//! scheme = EE_STAB
//! dt = 0.5
//! ```
//!
//! Times are in seconds (`dt`, `t_final`, `dt_max`); SI-years cases also accept
//! `dt_years`, `t_final_years` and `dt_max_years`. Lists are comma separated.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::cases::{greenland_synthetic_case, tank_case, CaseConfig, CaseKind, SourceTerm, StepPerturbation, UnitSystem};
use crate::error::ConfigError;
use crate::output::OutputSink;
use crate::schemes::{SchemeKind, SimConfig};

/// A run: simulation settings and where to write results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub output: OutputSink,
}

const KEYS: &[&str] = &[
    "case",
    "seed",
    "scheme",
    "dt",
    "dt_years",
    "t_final",
    "t_final_years",
    "nx",
    "ny",
    "interval",
    "height",
    "bed",
    "rho",
    "g",
    "mu0",
    "p",
    "delta",
    "source",
    "source_value",
    "perturbation",
    "edge_stabilization",
    "coupling_tol",
    "max_outer",
    "picard_tol",
    "picard_max_iter",
    "warm_start",
    "epsilon",
    "dt_max",
    "dt_max_years",
    "csv",
    "vtk_dir",
    "vtk_cadence",
];

struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn read(text: &str) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey { line, key: k.to_string() });
            }
            if map.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(ConfigError::Duplicate { line, key: k.to_string() });
            }
        }
        Ok(Self { map })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.0)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| invalid(*line, key, format!("cannot parse {v:?}"))),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get::<f64>(key)? {
            Some(v) if !(v > 0.0) || !v.is_finite() => Err(invalid(self.line(key), key, format!("{v} is not positive"))),
            other => Ok(other),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(*line, key, format!("cannot parse {s:?}"))))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.to_ascii_lowercase().as_str() {
                "true" | "on" | "yes" => Ok(Some(true)),
                "false" | "off" | "no" => Ok(Some(false)),
                _ => Err(invalid(*line, key, format!("expected true or false, got {v:?}"))),
            },
        }
    }

    /// Time in seconds from `key` or, for SI-years cases, `key_years`.
    fn time(&self, key: &str, case: &CaseConfig) -> Result<Option<f64>, ConfigError> {
        let years = format!("{key}_years");
        match (self.positive(key)?, self.positive(&years)?) {
            (Some(_), Some(_)) => Err(invalid(self.line(&years), &years, format!("conflicts with `{key}`"))),
            (Some(s), None) => Ok(Some(s)),
            (None, Some(y)) if case.units == UnitSystem::SiYears => Ok(Some(case.time_to_seconds(y))),
            (None, Some(_)) => Err(invalid(self.line(&years), &years, "case is not in SI-years units".into())),
            (None, None) => Ok(None),
        }
    }
}

fn invalid(line: usize, key: &str, message: String) -> ConfigError {
    ConfigError::InvalidValue { line, key: key.to_string(), message }
}

/// Parses configuration text; defaults come from the selected case.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = Entries::read(text)?;
    let (case_line, case_name) = e.raw("case").cloned().ok_or_else(|| ConfigError::MissingKey("case".into()))?;
    let seed = e.get::<u64>("seed")?;
    let mut case = match case_name.as_str() {
        "tank" => tank_case(),
        "greenland-synthetic" => greenland_synthetic_case(seed.unwrap_or(0)),
        "custom" => {
            let mut c = tank_case();
            let need = |k: &str| ConfigError::MissingKey(k.to_string());
            let interval = e.list("interval")?.ok_or_else(|| need("interval"))?;
            let height = e.list("height")?.ok_or_else(|| need("height"))?;
            let bed = e.list("bed")?.ok_or_else(|| need("bed"))?;
            if interval.len() != 2 || !(interval[1] > interval[0]) {
                return Err(invalid(e.line("interval"), "interval", "expected `x0, x1` with x0 < x1".into()));
            }
            if height.len() < 2 || height.len() != bed.len() {
                return Err(invalid(e.line("height"), "height", "height and bed need the same length ≥ 2".into()));
            }
            c.interval = (interval[0], interval[1]);
            c.nx = height.len() - 1;
            c.kind = CaseKind::Custom { height, bed };
            c
        }
        other => return Err(invalid(case_line, "case", format!("unknown case {other:?}"))),
    };
    if seed.is_some() && !matches!(case.kind, CaseKind::GreenlandSynthetic { .. }) {
        return Err(invalid(e.line("seed"), "seed", "only the synthetic ice-sheet case is seeded".into()));
    }
    for key in ["interval", "height", "bed"] {
        if e.raw(key).is_some() && !matches!(case.kind, CaseKind::Custom { .. }) {
            return Err(invalid(e.line(key), key, "only custom cases take tabulated geometry".into()));
        }
    }
    let count = |key: &str| -> Result<Option<usize>, ConfigError> {
        match e.get::<usize>(key)? {
            Some(0) => Err(invalid(e.line(key), key, "must be at least 1".into())),
            v => Ok(v),
        }
    };
    if let Some(nx) = count("nx")? {
        if let CaseKind::Custom { height, .. } = &case.kind {
            if height.len() != nx + 1 {
                return Err(invalid(e.line("nx"), "nx", format!("custom profile has {} nodes", height.len())));
            }
        }
        case.nx = nx;
    }
    if let Some(ny) = count("ny")? {
        case.ny = ny;
    }
    if let Some(v) = e.positive("rho")? {
        case.fluid.rho = v;
    }
    if let Some(v) = e.get::<f64>("g")? {
        case.fluid.g = v;
    }
    if let Some(v) = e.positive("mu0")? {
        case.fluid.mu0 = v;
    }
    if let Some(v) = e.get::<f64>("p")? {
        if !(v > 1.0 && v <= 2.0) {
            return Err(invalid(e.line("p"), "p", format!("{v} outside (1, 2]")));
        }
        case.fluid.p = v;
    }
    if let Some(v) = e.get::<f64>("delta")? {
        case.fluid.delta = v;
    }
    if case.fluid.validate().is_err() {
        return Err(invalid(e.line("g").max(e.line("delta")), "g", format!("invalid fluid parameters {:?}", case.fluid)));
    }
    let value = e.get::<f64>("source_value")?;
    if let Some((line, s)) = e.raw("source") {
        case.source = match (s.as_str(), value) {
            ("zero", None) => SourceTerm::Zero,
            ("oscillating", None) => SourceTerm::TankOscillating,
            ("constant", Some(c)) => SourceTerm::Constant(c),
            ("constant", None) => return Err(ConfigError::MissingKey("source_value".into())),
            _ => return Err(invalid(*line, "source", format!("expected zero, oscillating or constant, got {s:?}"))),
        };
    } else if value.is_some() {
        return Err(invalid(e.line("source_value"), "source_value", "needs `source = constant`".into()));
    }
    if let Some(p) = e.list("perturbation")? {
        if p.len() != 3 || !(p[1] > p[0]) {
            return Err(invalid(e.line("perturbation"), "perturbation", "expected `x0, x1, amplitude`".into()));
        }
        case.perturbation = Some(StepPerturbation { x0: p[0], x1: p[1], amplitude: p[2] });
    }
    if let Some(t) = e.time("t_final", &case)? {
        case.t_final = t;
    }

    let dt = e.time("dt", &case)?.ok_or_else(|| ConfigError::MissingKey("dt".into()))?;
    let (scheme_line, scheme_name) = e.raw("scheme").cloned().ok_or_else(|| ConfigError::MissingKey("scheme".into()))?;
    let mut scheme =
        SchemeKind::parse(&scheme_name, dt).map_err(|err| invalid(scheme_line, "scheme", err.to_string()))?;
    let eps = e.get::<f64>("epsilon")?;
    let dt_max = e.time("dt_max", &case)?;
    match &mut scheme {
        SchemeKind::EeUnstabW { eps: se, dt_max: sd } => {
            if let Some(v) = eps {
                if !(v > 0.0 && v < 1.0) {
                    return Err(invalid(e.line("epsilon"), "epsilon", format!("{v} outside (0, 1)")));
                }
                *se = v;
            }
            if let Some(v) = dt_max {
                *sd = v;
            }
        }
        _ => {
            for key in ["epsilon", "dt_max", "dt_max_years"] {
                if e.raw(key).is_some() {
                    return Err(invalid(e.line(key), key, "only EE_UNSTAB_W takes this key".into()));
                }
            }
        }
    }
    let mut sim = SimConfig::new(case, scheme, dt);
    if let Some(v) = e.flag("edge_stabilization")? {
        sim.edge_stabilization = v;
    }
    if let Some(v) = e.flag("warm_start")? {
        sim.warm_start = v;
    }
    let unit = |key: &str| -> Result<Option<f64>, ConfigError> {
        match e.get::<f64>(key)? {
            Some(v) if !(v > 0.0 && v < 1.0) => Err(invalid(e.line(key), key, format!("{v} outside (0, 1)"))),
            v => Ok(v),
        }
    };
    if let Some(v) = unit("coupling_tol")? {
        sim.coupling_tol = v;
    }
    if let Some(v) = unit("picard_tol")? {
        sim.picard.tol = v;
    }
    if let Some(v) = count("max_outer")? {
        sim.max_outer = v;
    }
    if let Some(v) = count("picard_max_iter")? {
        sim.picard.max_iter = v;
    }
    let mut output = OutputSink::default();
    output.csv = e.get::<PathBuf>("csv")?;
    output.vtk_dir = e.get::<PathBuf>("vtk_dir")?;
    if let Some(v) = count("vtk_cadence")? {
        output.vtk_cadence = v;
    }
    Ok(RunConfig { sim, output })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Writes every setting explicitly; `parse_config` of the result gives `cfg` back.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let sim = &cfg.sim;
    let c = &sim.case;
    let mut lines = Vec::new();
    let mut put = |k: &str, v: String| lines.push(format!("{k} = {v}"));
    match &c.kind {
        CaseKind::Tank { .. } => put("case", "tank".into()),
        CaseKind::GreenlandSynthetic { seed } => {
            put("case", "greenland-synthetic".into());
            put("seed", seed.to_string());
        }
        CaseKind::Custom { height, bed } => {
            put("case", "custom".into());
            put("interval", join(&[c.interval.0, c.interval.1]));
            put("height", join(height));
            put("bed", join(bed));
        }
    }
    put("scheme", sim.scheme.name().into());
    put("dt", format!("{:?}", sim.dt));
    if let SchemeKind::EeUnstabW { eps, dt_max } = sim.scheme {
        put("epsilon", format!("{eps:?}"));
        put("dt_max", format!("{dt_max:?}"));
    }
    put("t_final", format!("{:?}", c.t_final));
    put("nx", c.nx.to_string());
    put("ny", c.ny.to_string());
    put("rho", format!("{:?}", c.fluid.rho));
    put("g", format!("{:?}", c.fluid.g));
    put("mu0", format!("{:?}", c.fluid.mu0));
    put("p", format!("{:?}", c.fluid.p));
    put("delta", format!("{:?}", c.fluid.delta));
    match c.source {
        SourceTerm::Zero => put("source", "zero".into()),
        SourceTerm::TankOscillating => put("source", "oscillating".into()),
        SourceTerm::Constant(v) => {
            put("source", "constant".into());
            put("source_value", format!("{v:?}"));
        }
    }
    if let Some(p) = c.perturbation {
        put("perturbation", join(&[p.x0, p.x1, p.amplitude]));
    }
    put("edge_stabilization", sim.edge_stabilization.to_string());
    put("coupling_tol", format!("{:?}", sim.coupling_tol));
    put("max_outer", sim.max_outer.to_string());
    put("picard_tol", format!("{:?}", sim.picard.tol));
    put("picard_max_iter", sim.picard.max_iter.to_string());
    put("warm_start", sim.warm_start.to_string());
    if let Some(p) = &cfg.output.csv {
        put("csv", p.display().to_string());
    }
    if let Some(p) = &cfg.output.vtk_dir {
        put("vtk_dir", p.display().to_string());
    }
    put("vtk_cadence", cfg.output.vtk_cadence.to_string());
    lines.push(String::new());
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::YEAR;
    use crate::schemes::DEFAULT_EPSILON;

    #[test]
    fn minimal_tank() {
        let c = parse_config("# comment\ncase = tank\nscheme = EE_STAB   # trailing\ndt = 0.5\n").unwrap();
        assert_eq!(c.sim.scheme, SchemeKind::EeStab);
        assert_eq!(c.sim.dt, 0.5);
        assert_eq!(c.sim.case, tank_case());
        assert!(c.sim.edge_stabilization);
    }

    #[test]
    fn years_convert_to_seconds() {
        let c = parse_config("case = greenland-synthetic\nseed = 3\nscheme = EE_STAB\ndt_years = 50\n").unwrap();
        assert_eq!(c.sim.dt, 50.0 * 31_556_926.0);
        assert_eq!(c.sim.case.kind, CaseKind::GreenlandSynthetic { seed: 3 });
        assert_eq!(c.sim.t_final, 200.0 * YEAR);
        let err = parse_config("case = tank\nscheme = EE_STAB\ndt_years = 50\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { line: 3, .. }), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("case = tank\nscheme = EE_STAB\ndt = 1\nspeed = 3\n", ConfigError::UnknownKey { line: 4, key: "speed".into() }),
            ("case = tank\nscheme = EE_STAB\ndt = 1\ndt = 2\n", ConfigError::Duplicate { line: 4, key: "dt".into() }),
            ("case = tank\nscheme EE_STAB\n", ConfigError::Syntax { line: 2 }),
            ("case = tank\nscheme = EE_STAB\n", ConfigError::MissingKey("dt".into())),
            ("scheme = EE_STAB\ndt = 1\n", ConfigError::MissingKey("case".into())),
        ];
        for (text, want) in cases {
            assert_eq!(parse_config(text).unwrap_err(), want);
        }
        let err = parse_config("case = tank\nscheme = EE_STAB\ndt = fast\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { line: 3, .. }));
        let err = parse_config("case = tank\nscheme = RK4\ndt = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { line: 2, .. }));
        let err = parse_config("case = tank\nscheme = EE_STAB\ndt = 1\nnx = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { line: 4, .. }));
    }

    #[test]
    fn round_trip_is_identity() {
        let texts = [
            "case = tank\nscheme = EE_UNSTAB_W\ndt = 0.25\nepsilon = 0.3\nsource = oscillating\nperturbation = -0.5, 0, 0.1\ncsv = out/ledger.csv\n",
            "case = greenland-synthetic\nseed = 11\nscheme = IE\ndt_years = 10\nt_final_years = 30\nnx = 150\nny = 10\nedge_stabilization = false\n",
            "case = custom\ninterval = 0, 3\nheight = 1, 1.5, 1.25, 1\nbed = 0, 0.1, 0, 0\nscheme = SIE_FSSA\ndt = 0.1\nsource = constant\nsource_value = -0.01\nvtk_dir = vtk\nvtk_cadence = 5\n",
        ];
        for t in texts {
            let c = parse_config(t).unwrap();
            let again = parse_config(&serialize_config(&c)).unwrap();
            assert_eq!(c, again);
            assert_eq!(serialize_config(&c), serialize_config(&again));
        }
    }

    #[test]
    fn epsilon_only_for_weak_scheme() {
        let err = parse_config("case = tank\nscheme = EE_STAB\ndt = 1\nepsilon = 0.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { line: 4, .. }));
        let c = parse_config("case = tank\nscheme = EE_UNSTAB_W\ndt = 1\n").unwrap();
        assert_eq!(c.sim.scheme, SchemeKind::EeUnstabW { eps: DEFAULT_EPSILON, dt_max: 1.0 });
    }
}
