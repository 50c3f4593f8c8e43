//! Command-line driver: configuration, experiment subcommands and CSV
//! reports.
//!
//! Exit codes: 0 success, 1 internal or schedule failure, 2 usage or
//! configuration error, 3 insufficient fast-tier capacity, 4 codec failure,
//! 5 numerical failure, 6 I/O failure. Every failure prints one line
//! `error: <category>: <message>` to stderr.

pub mod config;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use stencilstream::analysis::{
    breakdown_from_events, relative_error_values, sample_points, spearman, write_breakdown_csv, write_errors_csv,
    AnalysisError, Breakdown, ErrorReport,
};
use stencilstream::engine::{build_block_map, plan_capacity, write_events_csv, Dataset, EngineError, Lane, RunMode};
use stencilstream::experiment::{error_curve, reference_samples, sampled_run, ExperimentError};
use stencilstream::kernel::KernelError;

use config::{parse_config, ConfigError, Overrides, Settings};

/// Output directory fallback when neither `--out` nor `out =` is given.
pub const OUT_ENV: &str = "STENCILSTREAM_OUT";

/// Grid points times steps above which `sweep-steps` requires `--long`.
pub const LONG_RUN_WORK: f64 = 1e11;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Capacity(String),
    #[error("{0}")]
    Codec(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Capacity(_) => 3,
            CliError::Codec(_) => 4,
            CliError::Numerical(_) => 5,
            CliError::Io(_) => 6,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Capacity(_) => "capacity",
            CliError::Codec(_) => "codec",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
            CliError::Internal(_) => "internal",
        }
    }

    /// The single diagnostic line printed on failure.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {}", self.category(), msg.trim())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::Capacity { .. } => CliError::Capacity(msg),
            EngineError::Codec(_) => CliError::Codec(msg),
            EngineError::Kernel(KernelError::Cfl { .. } | KernelError::Medium(_)) => {
                CliError::Config(ConfigError(vec![msg]))
            }
            EngineError::Kernel(_) => CliError::Numerical(msg),
            EngineError::Decomposition(_) | EngineError::Mode(_) | EngineError::Config(_) | EngineError::Field(_) => {
                CliError::Config(ConfigError(vec![msg]))
            }
            EngineError::Schedule(_) => CliError::Internal(msg),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Audit(inner) => inner.into(),
            AnalysisError::LengthMismatch(..) => CliError::Internal(e.to_string()),
            other => CliError::Config(ConfigError(vec![other.to_string()])),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Grid(msg) => CliError::Usage(format!("invalid step grid: {msg}")),
            ExperimentError::Engine(inner) => inner.into(),
            ExperimentError::Analysis(inner) => inner.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stencilstream", version, about = "Out-of-core temporal-blocked wave propagation with compressed blocks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run mode: baseline, rw32, ro32, rw-ro-24 or custom.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Bits per value for custom mode.
    #[arg(long, global = true)]
    pub rate: Option<u32>,
    /// Total time steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Sampling seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Fast-tier capacity in bytes.
    #[arg(long, global = true, value_name = "BYTES")]
    pub capacity: Option<usize>,
    /// Transfer bandwidth in bytes per second.
    #[arg(long, global = true, value_name = "BYTES_PER_S")]
    pub bandwidth: Option<f64>,
    /// Force the serial executor.
    #[arg(long, global = true)]
    pub serial: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration; write errors.csv, breakdown.csv and events.csv.
    Run,
    /// Run two configurations and compare B against A; write compare.csv.
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
    /// Compare modes against the in-core reference over the configured step
    /// grid; write sweep.csv and breakdown.csv.
    SweepSteps {
        /// Comma-separated modes (default: the configured mode).
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
        /// Allow large grids.
        #[arg(long)]
        long: bool,
    },
    /// Print the block map and the fast-tier plan.
    Plan,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode.clone(),
            rate: self.rate,
            steps: self.steps,
            seed: self.seed,
            out: self.out.clone(),
            capacity: self.capacity,
            bandwidth: self.bandwidth,
            serial: self.serial,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn load(path: Option<&Path>, ov: &Overrides) -> Result<Settings, CliError> {
    let text = path.map(read).transpose()?;
    Ok(parse_config(text.as_deref(), ov)?)
}

fn out_dir(settings: &Settings) -> PathBuf {
    settings
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes `name` in `dir` through a temporary file so a failed write leaves
/// no partial CSV behind.
fn write_file<F>(dir: &Path, name: &str, body: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let io_err = |e: io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    fs::create_dir_all(dir).map_err(io_err)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let path = dir.join(name);
    let mut w = BufWriter::new(fs::File::create(&tmp).map_err(io_err)?);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
    drop(w);
    fs::rename(&tmp, &path).map_err(io_err)?;
    Ok(path)
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(stdout, "{e}").map_err(|e| CliError::Io(e.to_string()))?;
                return Ok(());
            }
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    let ov = cli.flags.overrides();
    match cli.command {
        Command::Run => cmd_run(&load(cli.flags.config.as_deref(), &ov)?, stdout),
        Command::Plan => cmd_plan(&load(cli.flags.config.as_deref(), &ov)?, stdout),
        Command::Compare { a, b } => {
            let ov_a = Overrides { mode: None, rate: None, ..ov.clone() };
            let sa = load(Some(&a), &ov_a)?;
            let sb = load(Some(&b), &ov)?;
            cmd_compare(&sa, &sb, stdout)
        }
        Command::SweepSteps { modes, long } => {
            let s = load(cli.flags.config.as_deref(), &ov)?;
            let modes = if modes.is_empty() {
                vec![s.run.mode.clone()]
            } else {
                let rate = cli.flags.rate.or(s.run.mode.rate().map(|r| r.bits_per_value()));
                modes
                    .iter()
                    .map(|m| RunMode::parse(m.trim(), rate.filter(|_| m.trim() == "custom"), None))
                    .collect::<Result<Vec<_>, _>>()?
            };
            cmd_sweep_steps(&s, &modes, long, stdout)
        }
    }
}

fn out_line(stdout: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(stdout, "{line}").map_err(|e| CliError::Io(e.to_string()))
}

/// Runs the configuration, compares the final state with the in-core
/// reference and writes errors.csv, breakdown.csv and events.csv.
pub fn cmd_run(s: &Settings, stdout: &mut dyn Write) -> Result<(), CliError> {
    let grid = [s.run.total_steps];
    let samples = sample_points(&s.run.spec, s.points_per_plane, s.seed)?;
    let reference = reference_samples(s.run.spec, &s.run, &grid, &samples)?;
    let (errors, report) = error_curve(&s.run, &grid, &samples, &reference)?;
    let breakdown = breakdown_from_events(&report.events)?;
    let dir = out_dir(s);
    let mode = s.run.mode.name();
    write_file(&dir, "errors.csv", |w| write_errors_csv(w, &errors))?;
    write_file(&dir, "breakdown.csv", |w| write_breakdown_csv(w, &[(mode.clone(), breakdown.clone())]))?;
    write_file(&dir, "events.csv", |w| write_events_csv(w, &report.events))?;
    for e in &errors {
        out_line(stdout, format_args!("{mode}: {} steps, avg_rel_error {:e}, skipped {}", e.total_steps, e.avg_rel_error, e.skipped))?;
    }
    out_line(
        stdout,
        format_args!("{mode}: {} sweeps, bounding {}, peak fast tier {} bytes", report.sweeps, breakdown.bounding().name(), report.peak_resident),
    )?;
    let idle: Vec<String> = [Lane::Upload, Lane::Compute, Lane::Download]
        .iter()
        .map(|&l| format!("{:.6}", breakdown.lane_idle_seconds(l)))
        .collect();
    out_line(stdout, format_args!("{mode}: lane idle seconds (upload, compute, download) {}", idle.join(" ")))?;
    out_line(stdout, format_args!("wrote {}", dir.display()))
}

fn check_comparable(a: &Settings, b: &Settings) -> Result<(), CliError> {
    let mut problems = Vec::new();
    if a.run.spec != b.run.spec {
        problems.push("grids differ");
    }
    if a.run.problem != b.run.problem {
        problems.push("initial conditions or media differ");
    }
    if a.step_grid() != b.step_grid() {
        problems.push("step counts differ");
    }
    if a.run.temporal_steps != b.run.temporal_steps {
        problems.push("temporal_steps differ");
    }
    if a.seed != b.seed || a.points_per_plane != b.points_per_plane {
        problems.push("sampling seeds differ");
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("incompatible configurations: {}", problems.join(", "))))
    }
}

/// Runs A and B and writes the error of B relative to A at every step count.
pub fn cmd_compare(a: &Settings, b: &Settings, stdout: &mut dyn Write) -> Result<(), CliError> {
    check_comparable(a, b)?;
    let grid = a.step_grid();
    let samples = sample_points(&a.run.spec, a.points_per_plane, a.seed)?;
    let (ref_a, run_a) = sampled_run(&a.run, &grid, &samples)?;
    let (cand_b, run_b) = sampled_run(&b.run, &grid, &samples)?;
    let mode = b.run.mode.name();
    let mut rows = Vec::new();
    for steps in &grid {
        let (avg, skipped) = relative_error_values(&ref_a[steps], &cand_b[steps])?;
        rows.push(ErrorReport { mode: mode.clone(), total_steps: *steps, avg_rel_error: avg, samples: samples.len(), skipped });
    }
    let breakdowns = vec![
        (format!("a:{}", a.run.mode.name()), breakdown_from_events(&run_a.events)?),
        (format!("b:{mode}"), breakdown_from_events(&run_b.events)?),
    ];
    let dir = out_dir(b);
    write_file(&dir, "compare.csv", |w| write_errors_csv(w, &rows))?;
    write_file(&dir, "breakdown.csv", |w| write_breakdown_csv(w, &breakdowns))?;
    report_curve(stdout, &mode, &rows)?;
    out_line(stdout, format_args!("wrote {}", dir.display()))
}

fn report_curve(stdout: &mut dyn Write, mode: &str, rows: &[ErrorReport]) -> Result<(), CliError> {
    let steps: Vec<f64> = rows.iter().map(|r| r.total_steps as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.avg_rel_error).collect();
    let last = errs.last().copied().unwrap_or(0.0);
    match spearman(&steps, &errs) {
        Some(rho) => out_line(stdout, format_args!("{mode}: {} rows, final avg_rel_error {last:e}, spearman {rho:.3}", rows.len())),
        None => out_line(stdout, format_args!("{mode}: {} rows, final avg_rel_error {last:e}", rows.len())),
    }
}

/// Compares each mode with the in-core reference over the step grid.
pub fn cmd_sweep_steps(s: &Settings, modes: &[RunMode], long: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let grid = s.grid.clone().ok_or_else(|| {
        CliError::Usage("empty step grid: set steps_first, steps_last and steps_increment".into())
    })?;
    let last = grid.iter().copied().max().unwrap_or(0);
    let work = s.run.spec.nx as f64 * s.run.spec.ny as f64 * s.run.spec.nz as f64 * last as f64;
    if work > LONG_RUN_WORK && !long {
        return Err(CliError::Usage(format!(
            "{:.2e} point updates per mode; pass --long to run grids this large",
            work
        )));
    }
    let samples = sample_points(&s.run.spec, s.points_per_plane, s.seed)?;
    let reference = reference_samples(s.run.spec, &s.run, &grid, &samples)?;
    let mut rows = Vec::new();
    let mut breakdowns: Vec<(String, Breakdown)> = Vec::new();
    for mode in modes {
        let cfg = stencilstream::engine::RunConfig { mode: mode.clone(), ..s.run.clone() };
        let (errors, report) = error_curve(&cfg, &grid, &samples, &reference)?;
        report_curve(stdout, &mode.name(), &errors)?;
        breakdowns.push((mode.name(), breakdown_from_events(&report.events)?));
        rows.extend(errors);
    }
    let dir = out_dir(s);
    write_file(&dir, "sweep.csv", |w| write_errors_csv(w, &rows))?;
    write_file(&dir, "breakdown.csv", |w| write_breakdown_csv(w, &breakdowns))?;
    out_line(stdout, format_args!("wrote {}", dir.display()))
}

/// Prints the block map and the capacity plan; fails with the capacity
/// category when the configured capacity is too small.
pub fn cmd_plan(s: &Settings, stdout: &mut dyn Write) -> Result<(), CliError> {
    let map = build_block_map(s.run.spec, s.run.divisions, s.run.temporal_steps)?;
    let codecs = Dataset::ALL.map(|d| s.run.mode.codec_for(d));
    let plan = plan_capacity(&map, &codecs);
    out_line(stdout, format_args!("{map}mode {}", s.run.mode.name()))?;
    for d in Dataset::ALL {
        out_line(stdout, format_args!("  {:<16} {:?}", d.name(), codecs[d.index()]))?;
    }
    out_line(stdout, format_args!("fast tier plan:\n{}", plan.to_string().trim_end()))?;
    out_line(stdout, format_args!("sweeps {}", s.run.sweeps()))?;
    if let Some(cap) = s.run.capacity {
        if cap < plan.total_bytes() {
            return Err(EngineError::Capacity { required: plan.total_bytes(), capacity: cap }.into());
        }
        out_line(stdout, format_args!("capacity {cap} bytes: ok"))?;
    }
    Ok(())
}
