//! Run configuration: JSON file plus `key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::energy_torque::{
    uniform_grid, MagnetOrientation, Smoothing, SweepOptions, DEFAULT_END_FRACTION, DEFAULT_STEP_DEG,
};
use crate::geometry::{GripperGeometry, Vec2};
use crate::grip_model::{CALIBRATION_MATERIAL, DEFAULT_GRIP_DEFLECTION, MEASURED_FINGER_FORCE};
use crate::magnetostatics::{RegionMaterials, SolverOptions};
use crate::materials::{MaterialLibrary, MaterialModel};
use crate::mesh::{MeshParams, Region};

/// Edits applied to a library entry before use. Unset fields keep the
/// library value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MaterialOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_c: Option<f64>,
    /// Magnetization direction, degrees from +x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetization_deg: Option<f64>,
    /// Young's modulus (Pa).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_mod: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    /// Library file; the bundled library when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    #[serde(default = "default_mre")]
    pub mre: String,
    #[serde(default = "default_magnet")]
    pub magnet: String,
    #[serde(default = "default_air")]
    pub air: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, MaterialOverride>,
}

fn default_mre() -> String {
    CALIBRATION_MATERIAL.to_string()
}

fn default_magnet() -> String {
    "NdFeB".to_string()
}

fn default_air() -> String {
    "air".to_string()
}

impl Default for MaterialsConfig {
    fn default() -> Self {
        Self {
            library: None,
            mre: default_mre(),
            magnet: default_magnet(),
            air: default_air(),
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub start_deg: f64,
    /// Last angle; 98 % of the wrap limit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_deg: Option<f64>,
    #[serde(default = "default_step")]
    pub step_deg: f64,
    #[serde(default)]
    pub orientation: MagnetOrientation,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_step() -> f64 {
    DEFAULT_STEP_DEG
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            start_deg: 0.0,
            stop_deg: None,
            step_deg: DEFAULT_STEP_DEG,
            orientation: MagnetOrientation::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Spline smoothing: `"auto"` or a non-negative number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Fixed(f64),
    Named(LambdaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaName {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineConfig {
    #[serde(default = "default_lambda")]
    pub lambda: LambdaSetting,
}

fn default_lambda() -> LambdaSetting {
    LambdaSetting::Named(LambdaName::Auto)
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self { lambda: default_lambda() }
    }
}

impl SplineConfig {
    pub fn smoothing(&self) -> Smoothing {
        match self.lambda {
            LambdaSetting::Fixed(l) => Smoothing::Fixed(l),
            LambdaSetting::Named(LambdaName::Auto) => Smoothing::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadConfig {
    /// Friction coefficient; calibrated on `calibration_material` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_coeff: Option<f64>,
    /// Finger count; the geometry's when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fingers: Option<u32>,
    /// Finger deflection against the object (m).
    #[serde(default = "default_deflection")]
    pub grip_deflection: f64,
    /// Magnetic pressing force per finger (N).
    #[serde(default = "default_force")]
    pub finger_force: f64,
    #[serde(default = "default_calibration")]
    pub calibration_material: String,
}

fn default_deflection() -> f64 {
    DEFAULT_GRIP_DEFLECTION
}

fn default_force() -> f64 {
    MEASURED_FINGER_FORCE
}

fn default_calibration() -> String {
    CALIBRATION_MATERIAL.to_string()
}

impl Default for PayloadConfig {
    fn default() -> Self {
        Self {
            friction_coeff: None,
            n_fingers: None,
            grip_deflection: DEFAULT_GRIP_DEFLECTION,
            finger_force: MEASURED_FINGER_FORCE,
            calibration_material: default_calibration(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Lengths in metres.
    pub geometry: GripperGeometry,
    #[serde(default)]
    pub materials: MaterialsConfig,
    #[serde(default)]
    pub mesh: MeshParams,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub spline: SplineConfig,
    #[serde(default)]
    pub payload: PayloadConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GripperGeometry::default(),
            materials: MaterialsConfig::default(),
            mesh: MeshParams::default(),
            sweep: SweepConfig::default(),
            spline: SplineConfig::default(),
            payload: PayloadConfig::default(),
            output_dir: default_output(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Set `path` (dot separated) in `root` to `raw`, parsed as JSON when it
/// parses and as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override '{assignment}' is not of the form key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_err(format!("override key '{path}' has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_err(format!("override '{path}': '{}' is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("override path has at least one key")
}

impl RunConfig {
    /// Parse a config text, apply overrides and validate.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| config_err(format!("config is not valid JSON: {e}")))?;
        if !value.is_object() {
            return Err(config_err("config must be a JSON object"));
        }
        if overrides.is_empty() {
            // parse from text so diagnostics carry line and column
            let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config file when given, built-in defaults otherwise.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json_str(&text, overrides)
            }
            None => {
                let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
                for o in overrides {
                    apply_override(&mut value, o)?;
                }
                Self::from_value(value)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry.validate().map_err(|e| config_err(format!("geometry: {e}")))?;
        self.mesh.validate().map_err(|e| config_err(format!("mesh: {e}")))?;
        let s = &self.sweep;
        if !(s.step_deg > 0.0 && s.step_deg.is_finite()) {
            return Err(config_err(format!("sweep.step_deg must be positive, got {}", s.step_deg)));
        }
        if !(s.start_deg >= 0.0 && s.start_deg.is_finite()) {
            return Err(config_err(format!("sweep.start_deg must be >= 0, got {}", s.start_deg)));
        }
        let max_deg = self.geometry.max_wrap_angle().to_degrees();
        let stop = self.stop_deg();
        if !(stop >= s.start_deg && stop <= max_deg) {
            return Err(config_err(format!(
                "sweep.stop_deg = {stop} must lie in [start_deg, {max_deg:.4}]"
            )));
        }
        if !(s.solver.rel_tol > 0.0 && s.solver.max_iter > 0) {
            return Err(config_err("sweep.solver: rel_tol and max_iter must be positive"));
        }
        if let LambdaSetting::Fixed(l) = self.spline.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(config_err(format!("spline.lambda must be \"auto\" or >= 0, got {l}")));
            }
        }
        let p = &self.payload;
        if let Some(mu) = p.friction_coeff {
            if !(0.0..=2.0).contains(&mu) {
                return Err(config_err(format!("payload.friction_coeff must lie in [0, 2], got {mu}")));
            }
        }
        if p.n_fingers.is_some_and(|n| n < 2) {
            return Err(config_err("payload.n_fingers must be at least 2"));
        }
        if !(p.grip_deflection >= 0.0 && p.grip_deflection.is_finite()) {
            return Err(config_err("payload.grip_deflection must be >= 0"));
        }
        if !(p.finger_force >= 0.0 && p.finger_force.is_finite()) {
            return Err(config_err("payload.finger_force must be >= 0"));
        }
        let lib = self.library()?;
        for name in [&self.materials.mre, &self.materials.magnet, &self.materials.air, &p.calibration_material] {
            lib.get(name).map_err(|_| config_err(format!("materials: unknown material '{name}'")))?;
        }
        let region = self.region_materials()?;
        if !region[&Region::Pm].is_magnet() {
            return Err(config_err(format!("materials.magnet: '{}' is not a permanent magnet", self.materials.magnet)));
        }
        Ok(())
    }

    pub fn stop_deg(&self) -> f64 {
        self.sweep
            .stop_deg
            .unwrap_or_else(|| (DEFAULT_END_FRACTION * self.geometry.max_wrap_angle()).to_degrees())
    }

    /// Sweep angles in radians.
    pub fn theta_grid(&self) -> Result<Vec<f64>, CliError> {
        let start = self.sweep.start_deg.to_radians();
        let stop = self.stop_deg().to_radians();
        let grid = uniform_grid(stop - start, self.sweep.step_deg.to_radians())
            .map_err(|e| config_err(e.to_string()))?;
        let mut out: Vec<f64> = grid.iter().map(|t| start + t).collect();
        if let Some(last) = out.last_mut() {
            *last = stop;
        }
        Ok(out)
    }

    /// Library with overrides applied.
    pub fn library(&self) -> Result<MaterialLibrary, CliError> {
        let mut lib = match &self.materials.library {
            Some(p) => MaterialLibrary::load(p).map_err(|e| config_err(format!("materials.library: {e}")))?,
            None => MaterialLibrary::builtin(),
        };
        for (name, o) in &self.materials.overrides {
            let entry = lib
                .entries
                .get_mut(name)
                .ok_or_else(|| config_err(format!("materials.overrides: unknown material '{name}'")))?;
            entry.magnetic = apply_magnetic(&entry.magnetic, o);
            if let Some(e) = o.e_mod {
                match entry.mechanical.as_mut() {
                    Some(m) => m.e_mod = e,
                    None => {
                        return Err(config_err(format!(
                            "materials.overrides.{name}.e_mod: material has no mechanical data"
                        )))
                    }
                }
            }
        }
        lib.validate().map_err(|e| config_err(format!("materials: {e}")))?;
        Ok(lib)
    }

    /// Material of each mesh region.
    pub fn region_materials(&self) -> Result<RegionMaterials, CliError> {
        let lib = self.library()?;
        let get = |n: &str| {
            lib.get(n)
                .map(|e| e.magnetic)
                .map_err(|_| config_err(format!("materials: unknown material '{n}'")))
        };
        Ok(RegionMaterials::from([
            (Region::Air, get(&self.materials.air)?),
            (Region::Mre, get(&self.materials.mre)?),
            (Region::Pm, get(&self.materials.magnet)?),
        ]))
    }

    pub fn sweep_options(&self, parallel_assembly: bool) -> SweepOptions {
        SweepOptions {
            solver: self.sweep.solver,
            orientation: self.sweep.orientation,
            parallel_assembly,
        }
    }

    pub fn payload_fingers(&self) -> u32 {
        self.payload.n_fingers.unwrap_or(self.geometry.n_fingers as u32)
    }
}

fn apply_magnetic(m: &MaterialModel, o: &MaterialOverride) -> MaterialModel {
    match *m {
        MaterialModel::Air => match o.mu_r {
            Some(mu_r) => MaterialModel::LinearPermeable { mu_r },
            None => MaterialModel::Air,
        },
        MaterialModel::LinearPermeable { mu_r } => MaterialModel::LinearPermeable {
            mu_r: o.mu_r.unwrap_or(mu_r),
        },
        MaterialModel::LinearPermanentMagnet {
            mu_r,
            b_r,
            h_c,
            magnetization_dir,
        } => {
            let dir = match o.magnetization_deg {
                Some(deg) => {
                    let d = Vec2::new(deg.to_radians().cos(), deg.to_radians().sin());
                    [d.x, d.y]
                }
                None => magnetization_dir,
            };
            MaterialModel::LinearPermanentMagnet {
                mu_r: o.mu_r.unwrap_or(mu_r),
                b_r: o.b_r.unwrap_or(b_r),
                h_c: o.h_c.unwrap_or(h_c),
                magnetization_dir: dir,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_nested_keys() {
        let mut v = serde_json::json!({"geometry": {"d_pm": 0.02}});
        apply_override(&mut v, "geometry.d_pm=0.03").unwrap();
        apply_override(&mut v, "sweep.step_deg=2").unwrap();
        apply_override(&mut v, "materials.mre=MRE_DS15").unwrap();
        assert_eq!(v["geometry"]["d_pm"], 0.03);
        assert_eq!(v["sweep"]["step_deg"], 2);
        assert_eq!(v["materials"]["mre"], "MRE_DS15");
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "geometry..x=1").is_err());
        assert!(apply_override(&mut v, "geometry.d_pm.x=1").is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&text, &[]).unwrap(), cfg);
        assert_eq!(cfg.theta_grid().unwrap().len(), 60);
    }

    #[test]
    fn missing_geometry_names_the_field() {
        let err = RunConfig::from_json_str(r#"{"mesh": {"h_max": 0.001, "h_air": 0.02, "air_radius_factor": 5}}"#, &[])
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("geometry"), "{err}");
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        let base = serde_json::to_string(&RunConfig::default()).unwrap();
        for set in [
            "sweep.step_deg=0",
            "sweep.stop_deg=400",
            "sweep.bogus=1",
            "materials.mre=unobtainium",
            "materials.magnet=MRE_RTV",
            "spline.lambda=-1",
            "spline.lambda=sometimes",
            "payload.friction_coeff=3",
            "mesh.h_max=0",
        ] {
            let err = RunConfig::from_json_str(&base, &[set.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{set}: {err}");
        }
    }

    #[test]
    fn lambda_accepts_auto_and_numbers() {
        let base = serde_json::to_string(&RunConfig::default()).unwrap();
        let c = RunConfig::from_json_str(&base, &["spline.lambda=0.5".into()]).unwrap();
        assert_eq!(c.spline.smoothing(), Smoothing::Fixed(0.5));
        let c = RunConfig::from_json_str(&base, &["spline.lambda=auto".into()]).unwrap();
        assert_eq!(c.spline.smoothing(), Smoothing::Auto);
    }

    #[test]
    fn material_overrides_apply() {
        let cfg = RunConfig::load(
            None,
            &[
                "materials.overrides.MRE_RTV.mu_r=4".into(),
                "materials.overrides.NdFeB.magnetization_deg=90".into(),
                "materials.overrides.MRE_DS15.e_mod=1e6".into(),
            ],
        )
        .unwrap();
        let r = cfg.region_materials().unwrap();
        assert_eq!(r[&Region::Mre].mu_r(), 4.0);
        assert!((r[&Region::Pm].remanence().normalize() - Vec2::y()).norm() < 1e-12);
        let lib = cfg.library().unwrap();
        assert_eq!(lib.get("MRE_DS15").unwrap().mechanical.unwrap().e_mod, 1e6);
        assert!(RunConfig::load(None, &["materials.overrides.air.e_mod=1".into()]).is_err());
    }

    #[test]
    fn grid_honours_start_and_stop() {
        let cfg = RunConfig::load(None, &["sweep.start_deg=10".into(), "sweep.stop_deg=30".into()]).unwrap();
        let deg: Vec<f64> = cfg.theta_grid().unwrap().iter().map(|t| t.to_degrees()).collect();
        assert_eq!(deg.len(), 5);
        assert!((deg[0] - 10.0).abs() < 1e-12 && (deg[4] - 30.0).abs() < 1e-12);
    }
}
