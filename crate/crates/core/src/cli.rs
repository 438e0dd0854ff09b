//! Command-line front end.
//!
//! ```text
//! corner-euler run --config cfg.json [--theta X] [--T X] [--dt X] [--nr N] [--nphi N] [--out DIR]
//! corner-euler sweep [--thetas a,b,...] ...
//! corner-euler velocity-probe --theta X [--direction edge|bisector]
//! corner-euler green-selftest --theta X
//! corner-euler classify --csv series.csv
//! ```
//!
//! Exit codes: 0 success, 1 a self-check reported a failure, 2 configuration
//! or usage error, 3 integration failure. `CORNER_EULER_THREADS` caps the
//! number of worker threads.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::biot_savart::{QuadratureConfig, VelocityField};
use crate::conformal::{PhysicalPoint, SectorDomain, DEFAULT_RADIUS};
use crate::diagnostics::{classify_growth, log_spaced, velocity_exponent_probe, ProbeDirection};
use crate::error::{Error, Result};
use crate::greens::green_selftest;
use crate::output::{self, read_growth_csv, read_last_snapshot, write_json, write_outputs, Summary};
use crate::scenarios::{build_graded_cells, ScenarioKind, ScenarioSpec};
use crate::transport::{continue_simulation, run_simulation, RunOutcome, RunSettings};

pub const THREADS_ENV: &str = "CORNER_EULER_THREADS";

/// Angles of the `sweep` preset.
pub const SWEEP_PRESET: [f64; 8] = [
    PI / 4.0,
    PI / 3.0,
    5.0 * PI / 12.0,
    PI / 2.0,
    7.0 * PI / 12.0,
    2.0 * PI / 3.0,
    3.0 * PI / 4.0,
    4.0 * PI / 3.0,
];

/// Tolerance for the exact Green identities in `green-selftest`.
pub const SELFTEST_TOL: f64 = 1e-10;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a `run` needs. `dom` is the full corner; it defaults to the
/// scenario angle with radius [`DEFAULT_RADIUS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dom: Option<SectorDomain>,
    #[serde(flatten)]
    pub settings: RunSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioSpec::new(ScenarioKind::AbsPlusOne, PI / 3.0),
            dom: None,
            settings: RunSettings::default(),
            output_dir: default_output_dir(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        output::read_json(path)
    }

    pub fn domain(&self) -> Result<SectorDomain> {
        match self.dom {
            Some(d) => Ok(d),
            None => SectorDomain::with_default_radius(self.scenario.theta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dom = self.domain()?;
        if (dom.theta() - self.scenario.theta).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "dom.theta {} differs from scenario.theta {}",
                dom.theta(),
                self.scenario.theta
            )));
        }
        self.scenario.validate(dom.radius())?;
        self.settings.validate()
    }

    /// Sets the angle of both the scenario and the domain.
    pub fn set_theta(&mut self, theta: f64) -> Result<()> {
        let radius = self.dom.map_or(DEFAULT_RADIUS, |d| d.radius());
        self.scenario.theta = theta;
        self.dom = Some(SectorDomain::new(theta, radius)?);
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "corner-euler", version, about = "Euler flow in a corner: growth of the vorticity gradient")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write series.csv and summary.json.
    Run(RunArgs),
    /// Run the scenario over several angles, choosing the kind per angle.
    Sweep(SweepArgs),
    /// Fit the velocity exponent near the corner for unit vorticity.
    VelocityProbe(ProbeArgs),
    /// Check the Green function identities.
    GreenSelftest(SelftestArgs),
    /// Re-fit the growth class of an existing series.csv.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    nphi: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(theta) = self.theta {
            if self.config.is_none() {
                cfg.scenario.kind = ScenarioKind::for_angle(theta)?;
            }
            cfg.set_theta(theta)?;
        }
        if let Some(t) = self.t_end {
            cfg.settings.t_end = t;
        }
        if let Some(dt) = self.dt {
            cfg.settings.dt = dt;
        }
        if let Some(n) = self.nr {
            cfg.scenario.mesh.0 = n;
        }
        if let Some(n) = self.nphi {
            cfg.scenario.mesh.1 = n;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    /// Continue from the last state in a snapshots.jsonl file.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Keep a snapshot every this many steps.
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated angles in radians; defaults to the eight-angle preset.
    #[arg(long, value_delimiter = ',')]
    thetas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Direction {
    Edge,
    Bisector,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 64)]
    nr: usize,
    #[arg(long, default_value_t = 64)]
    nphi: usize,
    #[arg(long, value_enum, default_value_t = Direction::Edge)]
    direction: Direction,
    /// Number of log-spaced radii in [1e-3 R, 1e-1 R].
    #[arg(long, default_value_t = 12)]
    points: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// A series.csv with at least `time` and `L` columns.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Integration { .. } => 3,
        _ => 2,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Errors are printed to stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = thread_pool().and_then(|pool| match pool {
        Some(p) => p.install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("cannot build a pool of {n} threads: {e}")))
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::VelocityProbe(a) => cmd_probe(a),
        Command::GreenSelftest(a) => cmd_selftest(a),
        Command::Classify(a) => cmd_classify(a),
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
            Ok(())
        }
    }
}

/// Runs `cfg` (optionally from a resumed state) and writes its outputs.
pub fn execute(cfg: &RunConfig, resume: Option<&Path>) -> Result<(RunOutcome, Summary)> {
    cfg.validate()?;
    let dom = cfg.domain()?;
    let outcome = match resume {
        None => run_simulation(&cfg.scenario, &dom, &cfg.settings)?,
        Some(p) => {
            let state = read_last_snapshot(p)?;
            let expected = cfg.scenario.simulation_domain(dom.radius())?;
            if state.dom != expected || state.mesh != cfg.scenario.mesh {
                return Err(Error::Config(format!(
                    "{}: snapshot does not match the configured domain and mesh",
                    p.display()
                )));
            }
            continue_simulation(state, &cfg.scenario, &cfg.settings)?
        }
    };
    let class = classify_growth(&outcome.series);
    let summary = Summary::new(&cfg.scenario, &outcome, &class);
    write_outputs(&cfg.output_dir, &outcome, &summary)?;
    Ok((outcome, summary))
}

fn report_line(s: &Summary) -> String {
    let arrived = s.arrival_times.iter().filter(|t| t.is_some()).count();
    format!(
        "theta={:.6} kind={} mode={:?} rate={:.4} r2={:.4} arrivals={}/{} t={:.3}",
        s.theta,
        s.kind.label(),
        s.mode,
        s.rate,
        s.r_squared,
        arrived,
        s.arrival_times.len(),
        s.final_time
    )
}

fn cmd_run(a: RunArgs) -> Result<i32> {
    let mut cfg = a.common.resolve()?;
    if a.snapshot_every.is_some() {
        cfg.settings.snapshot_every = a.snapshot_every;
    }
    let (_, summary) = execute(&cfg, a.resume.as_deref())?;
    if !a.common.quiet {
        eprintln!("{}", report_line(&summary));
        for w in &summary.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(0)
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let base = a.common.resolve()?;
    let thetas = a.thetas.unwrap_or_else(|| SWEEP_PRESET.to_vec());
    let table = base.output_dir.join("sweep.csv");
    let mut rows = Vec::new();
    for theta in thetas {
        let mut cfg = base.clone();
        let kind = ScenarioKind::for_angle(theta)?;
        // keep the configured kind when it already fits the angle
        let keep = matches!(
            (cfg.scenario.kind, kind),
            (ScenarioKind::AbsPlusOne | ScenarioKind::CappedRamp, ScenarioKind::AbsPlusOne)
        );
        if !keep {
            cfg.scenario.kind = kind;
        }
        cfg.set_theta(theta)?;
        cfg.output_dir = base.output_dir.join(format!("theta_{:.4}", theta));
        let (_, summary) = execute(&cfg, None)?;
        if !a.common.quiet {
            eprintln!("{}", report_line(&summary));
        }
        rows.push(summary);
    }
    fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    let csv_err = |source| Error::Csv {
        path: table.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&table).map_err(csv_err)?;
    w.write_record(["theta", "beta", "kind", "mode", "rate", "r_squared", "first_arrival"])
        .map_err(csv_err)?;
    for s in &rows {
        let first = s.arrival_times.iter().flatten().copied().min_by(f64::total_cmp);
        let mode = serde_json::to_value(s.mode).expect("mode serializes");
        w.write_record([
            s.theta.to_string(),
            s.beta.to_string(),
            s.kind.label().to_string(),
            mode.as_str().unwrap_or_default().to_string(),
            s.rate.to_string(),
            s.r_squared.to_string(),
            first.map_or(String::new(), |t| t.to_string()),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&table, e))?;
    Ok(0)
}

fn cmd_probe(a: ProbeArgs) -> Result<i32> {
    let dom = SectorDomain::with_default_radius(a.theta)?;
    if a.points < 4 {
        return Err(Error::Config("velocity-probe needs at least 4 points".into()));
    }
    let spec = ScenarioSpec::new(ScenarioKind::AbsPlusOne, a.theta);
    let cells = build_graded_cells(&dom, a.nr, a.nphi, spec.grading, spec.angular, |_| 1.0);
    let quad = QuadratureConfig::default();
    let radii = log_spaced(1e-3 * dom.radius(), 1e-1 * dom.radius(), a.points);
    let direction = match a.direction {
        Direction::Edge => ProbeDirection::Edge,
        Direction::Bisector => ProbeDirection::Bisector,
    };
    let fit = velocity_exponent_probe(&dom, &cells, &radii, direction, &quad)?;
    let field = VelocityField::new(&cells, &dom, &quad)?;
    let corner = field.velocity(PhysicalPoint::CORNER)?;
    let edge: Vec<PhysicalPoint> = log_spaced(1e-4 * dom.radius(), 0.2 * dom.radius(), 24)
        .into_iter()
        .map(|x| PhysicalPoint::new(x, 0.0))
        .collect();
    let max_edge_u1 = field
        .velocities(&edge)?
        .iter()
        .map(|u| u[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let expected = if dom.beta() > 2.0 { 1.0 } else { dom.beta() - 1.0 };
    let report = json!({
        "theta": a.theta,
        "beta": dom.beta(),
        "direction": direction,
        "mesh": [a.nr, a.nphi],
        "slope": fit.slope,
        "expected_slope": expected,
        "r_squared": fit.r_squared,
        "radii": fit.radii,
        "speeds": fit.speeds,
        "residuals": fit.residuals,
        "compensated_range": fit.compensated_range,
        "corner_velocity": corner,
        "max_edge_u1": max_edge_u1,
    });
    emit(&report, a.out.as_deref())?;
    Ok(0)
}

fn cmd_selftest(a: SelftestArgs) -> Result<i32> {
    let dom = SectorDomain::with_default_radius(a.theta)?;
    let r = green_selftest(&dom, a.samples)?;
    let pass = r.boundary_residual < SELFTEST_TOL
        && r.symmetry_residual < SELFTEST_TOL
        && r.pullback_residual < SELFTEST_TOL
        && (3.0..5.0).contains(&r.harmonicity_ratio);
    let mut report = serde_json::to_value(r).expect("report serializes");
    report["theta"] = json!(a.theta);
    report["pass"] = json!(pass);
    emit(&report, a.out.as_deref())?;
    Ok(if pass { 0 } else { 1 })
}

fn cmd_classify(a: ClassifyArgs) -> Result<i32> {
    let series = read_growth_csv(&a.csv)?;
    let class = classify_growth(&series);
    let report = serde_json::to_value(&class).expect("classification serializes");
    emit(&report, a.out.as_deref())?;
    Ok(0)
}
