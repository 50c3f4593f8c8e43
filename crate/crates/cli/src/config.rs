//! Flat `key = value` configuration files and command-line overrides.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; keys may appear once. Flags override file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use stencilstream::engine::{CostModel, Dataset, Execution, Problem, RunConfig, RunMode, Timing};
use stencilstream::experiment::step_grid;
use stencilstream::field::{GridSpec, InitKind};
use stencilstream::kernel::{check_cfl, laplacian_coeffs_8th, Medium};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("nx", "interior points along x (required)"),
    ("ny", "interior points along y (required)"),
    ("nz", "interior points along z (required)"),
    ("radius", "stencil radius; only 4 is supported (default 4)"),
    ("divisions", "number of blocks D along z (required)"),
    ("temporal_steps", "time steps per block pass t_b (required)"),
    ("total_steps", "time steps per run (required unless --steps)"),
    ("mode", "baseline | rw32 | ro32 | rw-ro-24 | custom (required unless --mode)"),
    ("rate", "bits per value for custom mode, 8..=64"),
    ("datasets", "comma list of previous, current, velocity for custom mode (default current)"),
    ("capacity", "fast-tier capacity in bytes (default unbounded)"),
    ("bandwidth", "transfer bandwidth in bytes/s"),
    ("timing", "modeled | measured (default modeled)"),
    ("executor", "pipelined | serial (default pipelined)"),
    ("seed", "sampling seed (default 0)"),
    ("out", "output directory"),
    ("points_per_plane", "error samples per z plane (default 100)"),
    ("steps_first", "first step count of the comparison grid"),
    ("steps_last", "last step count of the comparison grid"),
    ("steps_increment", "spacing of the comparison grid"),
    ("init", "pulse | sinusoid (default pulse)"),
    ("pulse_width", "Gaussian width in cells (default max(n)/7)"),
    ("amplitude", "initial amplitude (default 1)"),
    ("velocity", "velocity above the interface in m/s (default 1500)"),
    ("velocity_lower", "velocity from the interface down (default: same as velocity)"),
    ("interface", "first plane of the lower layer (default nz/2 + 2)"),
    ("ripple", "relative 3-D velocity perturbation (default 0)"),
    ("dx", "grid spacing in m (default 10)"),
    ("courant", "v_max dt / dx (default 0.4)"),
];

const REQUIRED: &[&str] = &["nx", "ny", "nz", "divisions", "temporal_steps", "total_steps", "mode"];

/// Violations found while building a configuration, reported together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("; "))
    }
}

impl std::error::Error for ConfigError {}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<String>,
    pub rate: Option<u32>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub capacity: Option<usize>,
    pub bandwidth: Option<f64>,
    pub serial: bool,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub run: RunConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub points_per_plane: usize,
    /// Step counts for comparisons; defaults to `[total_steps]`.
    pub grid: Option<Vec<usize>>,
}

impl Settings {
    pub fn step_grid(&self) -> Vec<usize> {
        self.grid.clone().unwrap_or_else(|| vec![self.run.total_steps])
    }
}

/// Splits the file into key/value pairs.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut problems = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            problems.push(format!("line {}: expected `key = value`", n + 1));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            problems.push(format!("line {}: unknown key `{k}`", n + 1));
        } else if out.insert(k.to_string(), v.to_string()).is_some() {
            problems.push(format!("line {}: duplicate key `{k}`", n + 1));
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(ConfigError(problems))
    }
}

struct Reader<'a> {
    pairs: &'a BTreeMap<String, String>,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let raw = self.pairs.get(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.problems.push(format!("`{key}` has invalid value `{raw}`"));
                None
            }
        }
    }

    fn or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        self.get(key).unwrap_or(default)
    }
}

/// Builds settings from optional file text plus overrides.
pub fn parse_config(text: Option<&str>, ov: &Overrides) -> Result<Settings, ConfigError> {
    let mut pairs = match text {
        Some(t) => parse_pairs(t)?,
        None => BTreeMap::new(),
    };
    if let Some(m) = &ov.mode {
        pairs.insert("mode".into(), m.clone());
    }
    if let Some(s) = ov.steps {
        pairs.insert("total_steps".into(), s.to_string());
    }
    if let Some(r) = ov.rate {
        pairs.insert("rate".into(), r.to_string());
    }
    if let Some(s) = ov.seed {
        pairs.insert("seed".into(), s.to_string());
    }
    if let Some(c) = ov.capacity {
        pairs.insert("capacity".into(), c.to_string());
    }
    if let Some(b) = ov.bandwidth {
        pairs.insert("bandwidth".into(), b.to_string());
    }
    if ov.serial {
        pairs.insert("executor".into(), "serial".into());
    }

    let mut problems: Vec<String> =
        REQUIRED.iter().filter(|k| !pairs.contains_key(**k)).map(|k| format!("missing required key `{k}`")).collect();
    let mut r = Reader { pairs: &pairs, problems: Vec::new() };
    let nx: usize = r.or("nx", 0);
    let ny: usize = r.or("ny", 0);
    let nz: usize = r.or("nz", 0);
    let radius: usize = r.or("radius", 4);
    let divisions: usize = r.or("divisions", 0);
    let t_b: usize = r.or("temporal_steps", 0);
    let total: usize = r.or("total_steps", 0);
    let rate: Option<u32> = r.get("rate");
    let capacity: Option<usize> = r.get("capacity");
    let bandwidth: Option<f64> = r.get("bandwidth");
    let seed: u64 = r.or("seed", 0);
    let points_per_plane: usize = r.or("points_per_plane", 100);
    let first: Option<usize> = r.get("steps_first");
    let last: Option<usize> = r.get("steps_last");
    let inc: Option<usize> = r.get("steps_increment");
    let amplitude: f64 = r.or("amplitude", 1.0);
    let upper: f64 = r.or("velocity", 1500.0);
    let lower: Option<f64> = r.get("velocity_lower");
    let interface: isize = r.or("interface", nz as isize / 2 + 2);
    let ripple: f64 = r.or("ripple", 0.0);
    let dx: f64 = r.or("dx", 10.0);
    let courant: f64 = r.or("courant", 0.4);
    let width: f64 = r.or("pulse_width", nx.max(ny).max(nz) as f64 / 7.0);
    problems.append(&mut r.problems);

    if radius != 4 {
        problems.push(format!("radius ({radius}) must be 4 for the 25-point stencil"));
    }
    for (name, v) in [("nx", nx), ("ny", ny), ("nz", nz), ("divisions", divisions), ("temporal_steps", t_b)] {
        if pairs.contains_key(name) && v == 0 {
            problems.push(format!("`{name}` must be positive"));
        }
    }
    if divisions > 0 && nz > 0 && t_b > 0 {
        if nz % divisions != 0 {
            problems.push(format!("D ({divisions}) does not divide nz ({nz})"));
        } else if nz / divisions < 2 * radius * t_b {
            problems.push(format!("nz/D ({}) < 2·radius·t_b ({})", nz / divisions, 2 * radius * t_b));
        }
    }
    if t_b > 0 && pairs.contains_key("total_steps") && (total == 0 || total % t_b != 0) {
        problems.push(format!("t_b ({t_b}) does not divide total_steps ({total})"));
    }

    let datasets = pairs.get("datasets").map(|list| {
        list.split(',')
            .map(|s| s.trim().parse::<Dataset>())
            .collect::<Result<Vec<_>, _>>()
    });
    let datasets = match datasets {
        Some(Ok(d)) => Some(d),
        Some(Err(e)) => {
            problems.push(e.to_string());
            None
        }
        None => None,
    };
    let mode = pairs.get("mode").and_then(|m| match RunMode::parse(m, rate, datasets.as_deref()) {
        Ok(mode) => Some(mode),
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    });

    let timing = match pairs.get("timing").map(String::as_str).unwrap_or("modeled") {
        "modeled" => {
            let mut m = CostModel::default();
            if let Some(bw) = bandwidth {
                m.transfer_bytes_per_s = bw;
            }
            Some(Timing::Modeled(m))
        }
        "measured" => Some(Timing::Measured { bandwidth }),
        other => {
            problems.push(format!("`timing` must be modeled or measured, got `{other}`"));
            None
        }
    };
    if let Some(bw) = bandwidth {
        if !(bw > 0.0 && bw.is_finite()) {
            problems.push(format!("`bandwidth` must be positive, got {bw}"));
        }
    }
    let execution = match pairs.get("executor").map(String::as_str).unwrap_or("pipelined") {
        "pipelined" => Some(Execution::Pipelined),
        "serial" => Some(Execution::Serial),
        other => {
            problems.push(format!("`executor` must be pipelined or serial, got `{other}`"));
            None
        }
    };
    let init = match pairs.get("init").map(String::as_str).unwrap_or("pulse") {
        "pulse" => Some(InitKind::GaussianPulse {
            center: [(nx / 2) as f64, (ny / 2) as f64, (nz / 2) as f64],
            width,
            amplitude,
        }),
        "sinusoid" => Some(InitKind::SmoothSinusoid { frequencies: [1.0, 1.0, 1.0] }),
        other => {
            problems.push(format!("`init` must be pulse or sinusoid, got `{other}`"));
            None
        }
    };
    let medium = if lower.is_none() && ripple == 0.0 {
        Medium::Constant(upper)
    } else {
        Medium::TwoLayer { upper, lower: lower.unwrap_or(upper), interface, ripple }
    };
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(upper) || lower.is_some_and(|l| !positive(l)) || ripple.is_nan() || ripple.abs() >= 1.0 {
        problems.push("velocities must be positive and |ripple| < 1".into());
    }
    if !(dx > 0.0 && courant > 0.0) {
        problems.push("`dx` and `courant` must be positive".into());
    } else if let Err(e) = check_cfl(medium.max(), courant * dx / medium.max(), dx, &laplacian_coeffs_8th()) {
        problems.push(e.to_string());
    }

    let grid = match (first, last, inc) {
        (None, None, None) => None,
        (Some(f), Some(l), Some(i)) => match step_grid(f, l, i) {
            Ok(g) => {
                if let Some(bad) = g.iter().find(|s| t_b > 0 && *s % t_b != 0) {
                    problems.push(format!("step count {bad} of the grid is not a multiple of t_b ({t_b})"));
                }
                Some(g)
            }
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        },
        _ => {
            problems.push("steps_first, steps_last and steps_increment must be given together".into());
            None
        }
    };

    let spec = if nx > 0 && ny > 0 && nz > 0 && radius == 4 {
        match GridSpec::new(nx, ny, nz, radius) {
            Ok(s) => Some(s),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        }
    } else {
        None
    };
    if let Some(s) = spec {
        if points_per_plane > s.nx * s.ny {
            problems.push(format!("points_per_plane ({points_per_plane}) exceeds nx·ny ({})", s.nx * s.ny));
        }
    }

    if !problems.is_empty() {
        return Err(ConfigError(problems));
    }
    let (Some(spec), Some(mode), Some(timing), Some(execution), Some(init)) = (spec, mode, timing, execution, init)
    else {
        return Err(ConfigError(vec!["incomplete configuration".into()]));
    };
    let out = ov.out.clone().or_else(|| pairs.get("out").map(PathBuf::from));
    Ok(Settings {
        run: RunConfig {
            spec,
            divisions,
            temporal_steps: t_b,
            total_steps: total,
            mode,
            problem: Problem::with_courant(init, medium, dx, courant),
            capacity,
            timing,
            execution,
            poison: false,
        },
        seed,
        out,
        points_per_plane,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = "
        # desk scale
        nx = 144
        ny = 144
        nz = 144
        divisions = 4
        temporal_steps = 3
        total_steps = 48
        mode = baseline   # no compression
    ";

    #[test]
    fn desk_file_parses() {
        let s = parse_config(Some(DESK), &Overrides::default()).unwrap();
        assert_eq!(s.run.spec, GridSpec::cube(144, 4).unwrap());
        assert_eq!(s.run.mode, RunMode::Baseline);
        assert_eq!(s.step_grid(), vec![48]);
        assert_eq!(s.run.execution, Execution::Pipelined);
    }

    #[test]
    fn large_configuration_is_accepted() {
        let text = "nx = 1152\nny = 1152\nnz = 1152\nradius = 4\ndivisions = 8\ntemporal_steps = 12\ntotal_steps = 4320\nmode = rw32\n";
        let s = parse_config(Some(text), &Overrides::default()).unwrap();
        assert_eq!((s.run.divisions, s.run.temporal_steps), (8, 12));
    }

    #[test]
    fn halo_violation_names_constraint() {
        let text = DESK.replace("temporal_steps = 3", "temporal_steps = 5").replace("total_steps = 48", "total_steps = 50");
        let err = parse_config(Some(&text), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("nz/D (36) < 2·radius·t_b (40)"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let ov = Overrides { mode: Some("rw32".into()), steps: Some(96), serial: true, ..Overrides::default() };
        let s = parse_config(Some(DESK), &ov).unwrap();
        assert_eq!(s.run.mode, RunMode::Rw32);
        assert_eq!(s.run.total_steps, 96);
        assert_eq!(s.run.execution, Execution::Serial);
    }

    #[test]
    fn all_problems_reported_together() {
        let text = "nx = 8\nny = 8\nnz = 30\ndivisions = 4\ntemporal_steps = 1\nbogus = 1\n";
        let err = parse_config(Some(text), &Overrides::default()).unwrap_err();
        assert_eq!(err.0, vec!["line 6: unknown key `bogus`".to_string()]);
        let text = "nx = 8\nny = 8\nnz = 30\ndivisions = 4\ntemporal_steps = 1\ntotal_steps = 5\nmode = rw24\n";
        let err = parse_config(Some(text), &Overrides { steps: None, ..Overrides::default() }).unwrap_err();
        assert!(err.0.iter().any(|p| p.contains("D (4) does not divide nz (30)")), "{err}");
        assert!(err.0.iter().any(|p| p.contains("unknown mode")), "{err}");
        let err = parse_config(Some("nx = 8\n"), &Overrides::default()).unwrap_err();
        assert!(err.0.iter().any(|p| p == "missing required key `nz`"));
    }

    #[test]
    fn grammar_errors() {
        assert!(parse_pairs("nx 8").is_err());
        assert!(parse_pairs("nx = 8\nnx = 9").is_err());
        assert_eq!(parse_pairs("  # only a comment\n\n").unwrap().len(), 0);
    }

    #[test]
    fn step_grid_and_custom_mode() {
        let text = format!("{DESK}\nsteps_first = 48\nsteps_last = 432\nsteps_increment = 48\n");
        let ov = Overrides { mode: Some("custom".into()), rate: Some(40), ..Overrides::default() };
        let s = parse_config(Some(&text), &ov).unwrap();
        assert_eq!(s.step_grid().len(), 9);
        assert_eq!(s.run.mode.rate().unwrap().bits_per_value(), 40);
        let bad = format!("{DESK}\nsteps_first = 48\nsteps_last = 432\n");
        assert!(parse_config(Some(&bad), &Overrides::default()).is_err());
    }

    #[test]
    fn cfl_is_checked() {
        let text = format!("{DESK}\ncourant = 0.6\n");
        let err = parse_config(Some(&text), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("CFL"), "{err}");
    }
}
