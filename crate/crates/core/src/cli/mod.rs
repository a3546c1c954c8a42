//! Command-line front end: config loading, cached sweeps and exports.

pub mod cache;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResultCache;
pub use config::{
    apply_override, LambdaName, LambdaSetting, MaterialOverride, MaterialsConfig, PayloadConfig, RunConfig,
    SplineConfig, SweepConfig,
};

use crate::energy_torque::{
    coenergy_at, curve_from_samples, fit_spline, hex, sweep_meta, sweep_samples, torque_curve, validate_grid,
    CoenergyCurve, EnergyError, PlateauStats, TorqueCurve,
};
use crate::geometry::wrap_path;
use crate::grip_model::{
    calibrate_friction, capacity_table, reference_lifted_mass, write_capacity_csv, CapacityRow, FingerForceModel,
    PayloadModel,
};
use crate::magnetostatics::{solve_field_with, total_coenergy, SolveStats};
use crate::mesh::mesh_configuration;

/// Worker-count environment variable for the sweep pool.
pub const WORKERS_ENV: &str = "MAGSPRING_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Execution settings that do not change results (except `deterministic`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunOptions {
    /// Sequential element assembly; results are then independent of the
    /// worker count.
    pub deterministic: bool,
    /// Sweep pool size; rayon's default when `None`.
    pub workers: Option<usize>,
    pub use_cache: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            deterministic: true,
            workers: None,
            use_cache: true,
        }
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| runtime(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// SHA-256 of the canonical JSON of the effective config.
pub fn config_hash(cfg: &RunConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex(&Sha256::digest(&bytes))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryReport {
    pub r_open: f64,
    /// `None` when the finger count has no closed-radius formula.
    pub r_close: Option<f64>,
    pub theta_max: f64,
}

impl fmt::Display for GeometryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "r_open_mm = {:.6}", self.r_open * 1e3)?;
        match self.r_close {
            Some(r) => writeln!(f, "r_close_mm = {:.6}", r * 1e3)?,
            None => writeln!(f, "r_close_mm = unsupported")?,
        }
        writeln!(f, "theta_max_deg = {:.6}", self.theta_max.to_degrees())
    }
}

pub fn cmd_geometry(cfg: &RunConfig) -> GeometryReport {
    let g = &cfg.geometry;
    GeometryReport {
        r_open: g.open_radius(),
        r_close: g.close_radius().ok(),
        theta_max: g.max_wrap_angle(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SplineInfo {
    pub lambda: f64,
    pub gcv: Option<f64>,
    pub effective_dof: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub sweep_s: f64,
    pub fit_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub version: &'static str,
    pub config_hash: String,
    pub config: RunConfig,
    pub run_options: RunOptions,
    pub samples: usize,
    /// Samples computed in this run.
    pub samples_computed: usize,
    pub cache_hits: usize,
    /// Linear solves performed in this run.
    pub field_solves: usize,
    pub plateau_deg: (f64, f64),
    pub plateau: Option<PlateauStats>,
    pub terminal_torque: Option<f64>,
    pub coenergy_rise: f64,
    pub max_step_decrease: f64,
    pub spline: SplineInfo,
    /// Stats of every solve behind the curve (cached ones included), by theta.
    pub solver_stats: Vec<(f64, Vec<SolveStats>)>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub coenergy: CoenergyCurve,
    pub torque: TorqueCurve,
    pub meta: RunMeta,
    pub coenergy_csv: PathBuf,
    pub torque_csv: PathBuf,
    pub run_meta_json: PathBuf,
}

/// Cached sweep, spline fit and torque; writes `coenergy.csv`,
/// `torque.csv` and `run_meta.json` into the output directory.
pub fn cmd_sweep(cfg: &RunConfig, run: &RunOptions) -> Result<SweepOutput, CliError> {
    let start = Instant::now();
    let g = &cfg.geometry;
    let grid = cfg.theta_grid()?;
    validate_grid(g, &grid).map_err(|e| CliError::Config(format!("sweep: {e}")))?;
    let materials = cfg.region_materials()?;
    let opts = cfg.sweep_options(!run.deterministic);
    let cache = ResultCache::in_output_dir(&cfg.output_dir);
    let hits = AtomicUsize::new(0);
    let computed = AtomicUsize::new(0);
    let solves = AtomicUsize::new(0);

    let samples = with_pool(run.workers, || {
        sweep_samples(&grid, |theta| {
            let key = ResultCache::key(g, &materials, &cfg.mesh, theta, &opts);
            if run.use_cache {
                if let Some(s) = cache.get(&key) {
                    hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(s);
                }
            }
            let s = coenergy_at(g, &materials, &cfg.mesh, theta, &opts)?;
            computed.fetch_add(1, Ordering::Relaxed);
            solves.fetch_add(s.stats.len(), Ordering::Relaxed);
            if run.use_cache {
                if let Err(e) = cache.put(&key, &s) {
                    log::warn!("cache write failed at theta = {:.3} deg: {e}", theta.to_degrees());
                }
            }
            log::debug!("theta = {:.3} deg, w_co = {:.6e} J", theta.to_degrees(), s.w_co);
            Ok(s)
        })
    })?
    .map_err(|e| match e {
        EnergyError::Sample { theta_deg, message } => {
            CliError::Runtime(format!("solve failed at theta = {theta_deg:.4} deg: {message}"))
        }
        other => runtime(other),
    })?;
    let sweep_s = start.elapsed().as_secs_f64();

    let fit_start = Instant::now();
    let coenergy = curve_from_samples(&samples, sweep_meta(g, &materials, &cfg.mesh, &opts));
    let spline = fit_spline(&coenergy, cfg.spline.smoothing()).map_err(runtime)?;
    let torque = torque_curve(&spline, &grid).map_err(runtime)?;
    let fit_s = fit_start.elapsed().as_secs_f64();

    let out = &cfg.output_dir;
    let coenergy_csv = out.join("coenergy.csv");
    let torque_csv = out.join("torque.csv");
    let run_meta_json = out.join("run_meta.json");
    write_file(&coenergy_csv, |w| coenergy.write_csv(w))?;
    write_file(&torque_csv, |w| torque.write_csv(w))?;

    let (lo, hi) = crate::energy_torque::PLATEAU_WINDOW_DEG;
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        run_options: *run,
        samples: samples.len(),
        samples_computed: computed.into_inner(),
        cache_hits: hits.into_inner(),
        field_solves: solves.into_inner(),
        plateau_deg: (lo, hi),
        plateau: torque.default_plateau(),
        terminal_torque: torque.samples.last().map(|s| s.1),
        coenergy_rise: coenergy.rise(),
        max_step_decrease: coenergy.max_step_decrease(),
        spline: SplineInfo {
            lambda: spline.lambda,
            gcv: spline.gcv,
            effective_dof: spline.effective_dof,
        },
        solver_stats: samples.iter().map(|s| (s.theta.to_degrees(), s.stats.clone())).collect(),
        timings: Timings {
            sweep_s,
            fit_s,
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    write_file(&run_meta_json, |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        writeln!(w)
    })?;
    Ok(SweepOutput {
        coenergy,
        torque,
        meta,
        coenergy_csv,
        torque_csv,
        run_meta_json,
    })
}

#[derive(Debug, Clone)]
pub struct CapacityOutput {
    pub rows: Vec<CapacityRow>,
    pub friction_coeff: f64,
    /// Whether the coefficient came from the calibration mass.
    pub calibrated: bool,
    pub csv: PathBuf,
}

/// Payload table for every library material with tensile data.
pub fn cmd_capacity(cfg: &RunConfig) -> Result<CapacityOutput, CliError> {
    let lib = cfg.library()?;
    let g = &cfg.geometry;
    let p = &cfg.payload;
    let n = cfg.payload_fingers();
    let reference = reference_lifted_mass();
    let (mu, calibrated) = match p.friction_coeff {
        Some(mu) => (mu, false),
        None => {
            let name = &p.calibration_material;
            let mass_g = reference.get(name).ok_or_else(|| {
                CliError::Config(format!("payload.calibration_material: no reference mass for '{name}'"))
            })?;
            let mech = lib.get(name).ok().and_then(|e| e.mechanical).ok_or_else(|| {
                CliError::Config(format!("payload.calibration_material: '{name}' has no mechanical data"))
            })?;
            let mu = calibrate_friction(mass_g * 1e-3, n, p.finger_force, &mech, g, p.grip_deflection)
                .map_err(|e| CliError::Config(format!("payload: {e}")))?;
            (mu, true)
        }
    };
    let model = PayloadModel {
        friction_coeff: mu,
        n_fingers: n,
        normal_force_per_finger: p.finger_force,
    };
    let rows = capacity_table(&lib, &model, g, p.grip_deflection, &reference)
        .map_err(|e| CliError::Config(format!("payload: {e}")))?;
    let lever = FingerForceModel::default_lever_arm(g);
    log::info!(
        "friction coefficient {mu:.4} ({}), finger force {} N equals {:.3} mN m at the {:.1} mm contact radius",
        if calibrated { "calibrated" } else { "configured" },
        p.finger_force,
        p.finger_force * lever * 1e3,
        lever * 1e3
    );
    let csv = cfg.output_dir.join("capacity.csv");
    write_file(&csv, |w| write_capacity_csv(&rows, w))?;
    Ok(CapacityOutput {
        rows,
        friction_coeff: mu,
        calibrated,
        csv,
    })
}

#[derive(Debug, Clone)]
pub struct FieldDumpOutput {
    pub theta: f64,
    pub elements: usize,
    pub w_co: f64,
    pub csv: PathBuf,
    pub mesh: Option<PathBuf>,
}

/// Element field at one wrap angle, with the magnet's configured
/// magnetization direction.
pub fn cmd_field_dump(
    cfg: &RunConfig,
    run: &RunOptions,
    theta_deg: f64,
    output: Option<&Path>,
    mesh_out: Option<&Path>,
) -> Result<FieldDumpOutput, CliError> {
    let g = &cfg.geometry;
    if !theta_deg.is_finite() {
        return Err(CliError::Config(format!("--theta-deg must be finite, got {theta_deg}")));
    }
    let theta = theta_deg.to_radians();
    validate_grid(g, &[theta]).map_err(|e| CliError::Config(format!("--theta-deg: {e}")))?;
    let materials = cfg.region_materials()?;
    let fail = |m: String| CliError::Runtime(format!("field dump failed at theta = {theta_deg:.4} deg: {m}"));
    let path = wrap_path(g, theta, g.default_anchor()).map_err(|e| fail(e.to_string()))?;
    let mesh = mesh_configuration(g, &path, &cfg.mesh).map_err(|e| fail(e.to_string()))?;
    let sol = solve_field_with(&mesh, &materials, &cfg.sweep.solver, !run.deterministic)
        .map_err(|e| fail(e.to_string()))?;
    let w_co = total_coenergy(&sol, &materials, g.width).map_err(|e| fail(e.to_string()))?;
    let csv = match output {
        Some(p) => p.to_path_buf(),
        None => cfg.output_dir.join(format!("field_{theta_deg}deg.csv")),
    };
    write_file(&csv, |w| sol.write_csv(w))?;
    if let Some(p) = mesh_out {
        write_file(p, |w| mesh.write_text(w))?;
    }
    Ok(FieldDumpOutput {
        theta,
        elements: mesh.triangles.len(),
        w_co,
        csv,
        mesh: mesh_out.map(Path::to_path_buf),
    })
}

#[derive(Debug, Parser)]
#[command(name = "magspring", version, about = "Rolling-stripe magnetostatic gripper model")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run config; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value by dot path, e.g. `sweep.step_deg=2.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Sequential assembly, so results do not depend on the worker count.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print open and closed gripping radii and the wrap limit.
    Geometry,
    /// Coenergy sweep, torque curve and run metadata.
    Sweep {
        /// Recompute every sample and leave the cache untouched.
        #[arg(long)]
        no_cache: bool,
    },
    /// Predicted payload per material.
    Capacity,
    /// Element flux density at a single wrap angle.
    FieldDump {
        #[arg(long)]
        theta_deg: f64,
        /// CSV path; `output_dir/field_<theta>deg.csv` by default.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Also write the mesh as text.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
}

/// Worker count from the environment; unset or empty means rayon's default.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.common.config.as_deref(), &cli.common.set)?;
    let mut run = RunOptions {
        deterministic: cli.common.deterministic,
        workers: workers_from_env()?,
        use_cache: true,
    };
    let out = |e| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match cli.command {
        Command::Geometry => write!(stdout, "{}", cmd_geometry(&cfg)).map_err(out)?,
        Command::Sweep { no_cache } => {
            run.use_cache = !no_cache;
            let r = cmd_sweep(&cfg, &run)?;
            let m = &r.meta;
            writeln!(stdout, "samples = {}", m.samples).map_err(out)?;
            writeln!(stdout, "cache_hits = {}", m.cache_hits).map_err(out)?;
            writeln!(stdout, "field_solves = {}", m.field_solves).map_err(out)?;
            if let Some(p) = &m.plateau {
                writeln!(stdout, "plateau_mean_mNm = {:.4}", p.mean * 1e3).map_err(out)?;
                writeln!(stdout, "plateau_cv = {:.4}", p.cv).map_err(out)?;
            }
            writeln!(stdout, "wrote {}", r.coenergy_csv.display()).map_err(out)?;
            writeln!(stdout, "wrote {}", r.torque_csv.display()).map_err(out)?;
            writeln!(stdout, "wrote {}", r.run_meta_json.display()).map_err(out)?;
        }
        Command::Capacity => {
            let r = cmd_capacity(&cfg)?;
            writeln!(stdout, "friction_coeff = {:.6}", r.friction_coeff).map_err(out)?;
            for row in &r.rows {
                writeln!(stdout, "{} {:.2} g", row.material, row.predicted_mass_g).map_err(out)?;
            }
            writeln!(stdout, "wrote {}", r.csv.display()).map_err(out)?;
        }
        Command::FieldDump { theta_deg, output, mesh } => {
            let r = cmd_field_dump(&cfg, &run, theta_deg, output.as_deref(), mesh.as_deref())?;
            writeln!(stdout, "elements = {}", r.elements).map_err(out)?;
            writeln!(stdout, "w_co_J = {:.9e}", r.w_co).map_err(out)?;
            writeln!(stdout, "wrote {}", r.csv.display()).map_err(out)?;
            if let Some(p) = &r.mesh {
                writeln!(stdout, "wrote {}", p.display()).map_err(out)?;
            }
        }
    }
    Ok(())
}

/// Parse `args`, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("magspring: {e}");
            e.exit_code()
        }
    }
}
