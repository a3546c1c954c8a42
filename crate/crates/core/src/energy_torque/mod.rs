//! Coenergy sweeps over the wrap angle and the rolling torque derived from them.

pub mod spline;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{wrap_path, GripperGeometry, Vec2};
use crate::magnetostatics::{solve_field_with, total_coenergy, RegionMaterials, SolveStats, SolverOptions};
use crate::mesh::{mesh_configuration, strip_mre, Mesh, MeshParams, Region};

pub use spline::{Smoothing, SplineModel, MIN_SPLINE_SAMPLES};

/// Default sweep step.
pub const DEFAULT_STEP_DEG: f64 = 5.0;
/// Sweeps stop short of the geometric wrap limit by this fraction.
pub const DEFAULT_END_FRACTION: f64 = 0.98;
/// Window in which the torque is expected to be nearly constant.
pub const PLATEAU_WINDOW_DEG: (f64, f64) = (20.0, 200.0);

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("invalid theta grid: {0}")]
    Grid(String),
    #[error("sample at theta = {theta_deg:.3} deg failed: {message}")]
    Sample { theta_deg: f64, message: String },
    #[error("need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("theta = {x} rad lies outside the fitted range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("spline fit failed: {0}")]
    Fit(String),
}

/// How the magnet's magnetization is oriented relative to the finger.
///
/// `Averaged` takes the mean coenergy over all in-plane magnetization
/// directions. Coenergy is quadratic in the remanence, so the mean equals the
/// average of two solves with orthogonal directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MagnetOrientation {
    /// Use the magnet material's own `magnetization_dir`.
    Fixed,
    #[default]
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub orientation: MagnetOrientation,
    /// Assemble element matrices on the worker pool as well.
    #[serde(default)]
    pub parallel_assembly: bool,
}

/// Coenergy at one wrap angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub theta: f64,
    pub w_co: f64,
    pub elements: usize,
    pub stats: Vec<SolveStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub geometry_hash: String,
    pub mesh: MeshParams,
    pub materials: RegionMaterials,
    pub orientation: MagnetOrientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoenergyCurve {
    /// `(theta rad, w_co J)`, theta strictly increasing.
    pub samples: Vec<(f64, f64)>,
    pub sweep_meta: SweepMeta,
}

impl CoenergyCurve {
    pub fn thetas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Rise from the first to the last sample.
    pub fn rise(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.1 - a.1,
            _ => 0.0,
        }
    }

    /// Largest decrease between consecutive samples (zero if non-decreasing).
    pub fn max_step_decrease(&self) -> f64 {
        self.samples.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max)
    }

    /// CSV with columns `theta_deg,w_co_J`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta_deg,w_co_J")?;
        for &(t, v) in &self.samples {
            writeln!(w, "{},{}", t.to_degrees(), v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueCurve {
    /// `(theta rad, torque N m)`.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauStats {
    pub mean: f64,
    /// Population standard deviation over the mean.
    pub cv: f64,
    pub count: usize,
}

impl TorqueCurve {
    /// Value at the sample nearest to `theta`.
    pub fn nearest(&self, theta: f64) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .copied()
            .min_by(|a, b| (a.0 - theta).abs().total_cmp(&(b.0 - theta).abs()))
    }

    /// Statistics over samples with theta in `[lo, hi]` (radians).
    pub fn plateau(&self, lo: f64, hi: f64) -> Option<PlateauStats> {
        let eps = 1e-9;
        let vals: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.0 >= lo - eps && s.0 <= hi + eps)
            .map(|s| s.1)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(PlateauStats {
            mean,
            cv: var.sqrt() / mean.abs(),
            count: vals.len(),
        })
    }

    /// Plateau statistics over the default window.
    pub fn default_plateau(&self) -> Option<PlateauStats> {
        self.plateau(PLATEAU_WINDOW_DEG.0.to_radians(), PLATEAU_WINDOW_DEG.1.to_radians())
    }

    /// Trapezoidal integral over the sample grid.
    pub fn integral(&self) -> f64 {
        self.samples.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
    }

    /// CSV with columns `theta_deg,t_mNm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta_deg,t_mNm")?;
        for &(t, v) in &self.samples {
            writeln!(w, "{},{}", t.to_degrees(), v * 1e3)?;
        }
        Ok(())
    }
}

/// Hex SHA-256 of the geometry's JSON form.
pub fn geometry_hash(g: &GripperGeometry) -> String {
    let json = serde_json::to_vec(g).expect("geometry serializes");
    hex(&Sha256::digest(json))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `0, step, 2 step, ...` below `end`, with `end` itself appended.
pub fn uniform_grid(end: f64, step: f64) -> Result<Vec<f64>, EnergyError> {
    if !(step > 0.0 && step.is_finite() && end >= 0.0 && end.is_finite()) {
        return Err(EnergyError::Grid(format!("need step > 0 and end >= 0, got step {step}, end {end}")));
    }
    let mut g: Vec<f64> = (0..)
        .map(|k| k as f64 * step)
        .take_while(|&t| t < end - 1e-9 * step)
        .collect();
    g.push(end);
    Ok(g)
}

/// Default sweep grid: 5 deg steps up to 98 % of the wrap limit.
pub fn default_grid(g: &GripperGeometry) -> Vec<f64> {
    uniform_grid(DEFAULT_END_FRACTION * g.max_wrap_angle(), DEFAULT_STEP_DEG.to_radians())
        .expect("default grid parameters are valid")
}

pub fn validate_grid(g: &GripperGeometry, grid: &[f64]) -> Result<(), EnergyError> {
    if grid.is_empty() {
        return Err(EnergyError::Grid("grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EnergyError::Grid("theta values must be strictly increasing".into()));
    }
    let max = g.max_wrap_angle();
    if let Some(&t) = grid.iter().find(|&&t| !(t >= 0.0 && t <= max)) {
        return Err(EnergyError::Grid(format!(
            "theta = {:.3} deg outside [0, {:.3}] deg",
            t.to_degrees(),
            max.to_degrees()
        )));
    }
    Ok(())
}

/// Variants of the material map actually solved for one sample.
fn orientation_materials(materials: &RegionMaterials, orientation: MagnetOrientation) -> Vec<RegionMaterials> {
    match orientation {
        MagnetOrientation::Fixed => vec![materials.clone()],
        MagnetOrientation::Averaged => [Vec2::x(), Vec2::y()]
            .iter()
            .map(|&d| {
                materials
                    .iter()
                    .map(|(&r, m)| (r, if m.is_magnet() { m.with_direction(d) } else { *m }))
                    .collect()
            })
            .collect(),
    }
}

/// Coenergy of a fixed mesh under the chosen orientation model.
pub fn mesh_coenergy(
    mesh: &Mesh,
    materials: &RegionMaterials,
    depth: f64,
    opts: &SweepOptions,
) -> Result<(f64, Vec<SolveStats>), String> {
    let variants = orientation_materials(materials, opts.orientation);
    let mut total = 0.0;
    let mut stats = Vec::with_capacity(variants.len());
    for mats in &variants {
        let sol = solve_field_with(mesh, mats, &opts.solver, opts.parallel_assembly).map_err(|e| e.to_string())?;
        total += total_coenergy(&sol, mats, depth).map_err(|e| e.to_string())?;
        stats.push(sol.stats);
    }
    Ok((total / variants.len() as f64, stats))
}

/// One wrap state: path, mesh, solve(s) and coenergy.
pub fn coenergy_at(
    g: &GripperGeometry,
    materials: &RegionMaterials,
    mesh_params: &MeshParams,
    theta: f64,
    opts: &SweepOptions,
) -> Result<SampleResult, EnergyError> {
    let fail = |message: String| EnergyError::Sample {
        theta_deg: theta.to_degrees(),
        message,
    };
    let path = wrap_path(g, theta, g.default_anchor()).map_err(|e| fail(e.to_string()))?;
    let mesh = mesh_configuration(g, &path, mesh_params).map_err(|e| fail(e.to_string()))?;
    let (w_co, stats) = mesh_coenergy(&mesh, materials, g.width, opts).map_err(fail)?;
    Ok(SampleResult {
        theta,
        w_co,
        elements: mesh.triangles.len(),
        stats,
    })
}

/// Evaluate `eval` at every grid point on the rayon pool and return the
/// results in grid order. The first failure in grid order is reported.
pub fn sweep_samples<F>(grid: &[f64], eval: F) -> Result<Vec<SampleResult>, EnergyError>
where
    F: Fn(f64) -> Result<SampleResult, EnergyError> + Sync,
{
    let results: Vec<Result<SampleResult, EnergyError>> = grid.par_iter().map(|&t| eval(t)).collect();
    results.into_iter().collect()
}

pub fn sweep_meta(g: &GripperGeometry, materials: &RegionMaterials, mesh_params: &MeshParams, opts: &SweepOptions) -> SweepMeta {
    SweepMeta {
        geometry_hash: geometry_hash(g),
        mesh: *mesh_params,
        materials: materials.clone(),
        orientation: opts.orientation,
    }
}

pub fn curve_from_samples(samples: &[SampleResult], meta: SweepMeta) -> CoenergyCurve {
    CoenergyCurve {
        samples: samples.iter().map(|s| (s.theta, s.w_co)).collect(),
        sweep_meta: meta,
    }
}

/// Coenergy at every grid angle.
pub fn sweep_coenergy(
    g: &GripperGeometry,
    materials: &RegionMaterials,
    mesh_params: &MeshParams,
    grid: &[f64],
    opts: &SweepOptions,
) -> Result<CoenergyCurve, EnergyError> {
    validate_grid(g, grid)?;
    let samples = sweep_samples(grid, |t| coenergy_at(g, materials, mesh_params, t, opts))?;
    Ok(curve_from_samples(&samples, sweep_meta(g, materials, mesh_params, opts)))
}

/// Coenergy of the magnet alone: the straight-finger mesh with the stripe
/// retagged as air.
pub fn magnet_self_coenergy(
    g: &GripperGeometry,
    materials: &RegionMaterials,
    mesh_params: &MeshParams,
    opts: &SweepOptions,
) -> Result<f64, EnergyError> {
    let fail = |message: String| EnergyError::Sample { theta_deg: 0.0, message };
    let path = wrap_path(g, 0.0, g.default_anchor()).map_err(|e| fail(e.to_string()))?;
    let mesh = strip_mre(&mesh_configuration(g, &path, mesh_params).map_err(|e| fail(e.to_string()))?);
    debug_assert!(!mesh.regions.contains(&Region::Mre));
    mesh_coenergy(&mesh, materials, g.width, opts).map(|r| r.0).map_err(fail)
}

/// Smoothing spline through the coenergy samples.
pub fn fit_spline(c: &CoenergyCurve, smoothing: Smoothing) -> Result<SplineModel, EnergyError> {
    spline::fit(&c.thetas(), &c.values(), smoothing)
}

/// Analytic spline derivative on `eval_grid`.
pub fn torque_curve(s: &SplineModel, eval_grid: &[f64]) -> Result<TorqueCurve, EnergyError> {
    let samples = eval_grid
        .iter()
        .map(|&t| s.derivative(t).map(|d| (t, d)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TorqueCurve { samples })
}

/// Finite-difference derivative of the raw samples.
///
/// Interior points use the three-point formula for uneven spacing, which is
/// exact for quadratics; the end points use one-sided differences.
pub fn torque_fd_oracle(c: &CoenergyCurve) -> Result<TorqueCurve, EnergyError> {
    let s = &c.samples;
    let n = s.len();
    if n < 3 {
        return Err(EnergyError::InsufficientData { need: 3, got: n });
    }
    let mut out = Vec::with_capacity(n);
    out.push((s[0].0, (s[1].1 - s[0].1) / (s[1].0 - s[0].0)));
    for i in 1..n - 1 {
        let (h1, h2) = (s[i].0 - s[i - 1].0, s[i + 1].0 - s[i].0);
        let d = -h2 / (h1 * (h1 + h2)) * s[i - 1].1 + (h2 - h1) / (h1 * h2) * s[i].1 + h1 / (h2 * (h1 + h2)) * s[i + 1].1;
        out.push((s[i].0, d));
    }
    out.push((s[n - 1].0, (s[n - 1].1 - s[n - 2].1) / (s[n - 1].0 - s[n - 2].0)));
    Ok(TorqueCurve { samples: out })
}

/// RMS difference between two torque curves on their common interior samples.
pub fn rms_interior_difference(a: &TorqueCurve, b: &TorqueCurve) -> f64 {
    let n = a.samples.len().min(b.samples.len());
    if n < 3 {
        return 0.0;
    }
    let sq: f64 = (1..n - 1).map(|i| (a.samples[i].1 - b.samples[i].1).powi(2)).sum();
    (sq / (n - 2) as f64).sqrt()
}
