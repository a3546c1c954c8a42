//! Magnetic constitutive laws and tensile data for the finger materials.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Vacuum permeability (H/m).
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Relative deviation above which a magnet's recoil permeability is flagged.
pub const PM_CONSISTENCY_RTOL: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("invalid material `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("material `{0}` not found in library")]
    Unknown(String),
    #[error("reading material library: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing material library: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialModel {
    Air,
    LinearPermeable {
        mu_r: f64,
    },
    /// Linear recoil line `B = mu0 mu_r H + b_r m`.
    LinearPermanentMagnet {
        mu_r: f64,
        b_r: f64,
        h_c: f64,
        magnetization_dir: [f64; 2],
    },
}

impl MaterialModel {
    pub fn permeable(mu_r: f64) -> Self {
        MaterialModel::LinearPermeable { mu_r }
    }

    /// Magnet whose recoil permeability is implied by the datasheet pair.
    pub fn magnet_from_datasheet(b_r: f64, h_c: f64, dir: Vec2) -> Self {
        let d = dir.normalize();
        MaterialModel::LinearPermanentMagnet {
            mu_r: b_r / (MU0 * h_c),
            b_r,
            h_c,
            magnetization_dir: [d.x, d.y],
        }
    }

    pub fn mu_r(&self) -> f64 {
        match *self {
            MaterialModel::Air => 1.0,
            MaterialModel::LinearPermeable { mu_r } => mu_r,
            MaterialModel::LinearPermanentMagnet { mu_r, .. } => mu_r,
        }
    }

    /// Reluctivity `1 / (mu0 mu_r)`.
    pub fn reluctivity(&self) -> f64 {
        1.0 / (MU0 * self.mu_r())
    }

    /// Remanent flux density vector; zero for unmagnetized materials.
    pub fn remanence(&self) -> Vec2 {
        match *self {
            MaterialModel::LinearPermanentMagnet {
                b_r,
                magnetization_dir: [x, y],
                ..
            } => Vec2::new(x, y) * b_r,
            _ => Vec2::zeros(),
        }
    }

    pub fn is_magnet(&self) -> bool {
        matches!(self, MaterialModel::LinearPermanentMagnet { .. })
    }

    /// Same material with the remanence scaled by `factor`.
    pub fn with_remanence_scaled(&self, factor: f64) -> Self {
        match *self {
            MaterialModel::LinearPermanentMagnet {
                mu_r,
                b_r,
                h_c,
                magnetization_dir,
            } => MaterialModel::LinearPermanentMagnet {
                mu_r,
                b_r: b_r * factor,
                h_c: h_c * factor,
                magnetization_dir,
            },
            other => other,
        }
    }

    pub fn with_direction(&self, dir: Vec2) -> Self {
        match *self {
            MaterialModel::LinearPermanentMagnet { mu_r, b_r, h_c, .. } => {
                let d = dir.normalize();
                MaterialModel::LinearPermanentMagnet {
                    mu_r,
                    b_r,
                    h_c,
                    magnetization_dir: [d.x, d.y],
                }
            }
            other => other,
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), MaterialError> {
        let bad = |reason: String| MaterialError::Invalid {
            name: name.to_string(),
            reason,
        };
        match *self {
            MaterialModel::Air => Ok(()),
            MaterialModel::LinearPermeable { mu_r } => {
                if !(mu_r.is_finite() && mu_r >= 1.0) {
                    return Err(bad(format!("mu_r must be >= 1, got {mu_r}")));
                }
                Ok(())
            }
            MaterialModel::LinearPermanentMagnet {
                mu_r,
                b_r,
                h_c,
                magnetization_dir: [x, y],
            } => {
                if !(mu_r.is_finite() && mu_r >= 1.0) {
                    return Err(bad(format!("mu_r must be >= 1, got {mu_r}")));
                }
                if !(b_r > 0.0 && b_r.is_finite()) {
                    return Err(bad(format!("b_r must be positive, got {b_r}")));
                }
                if !(h_c > 0.0 && h_c.is_finite()) {
                    return Err(bad(format!("h_c must be positive, got {h_c}")));
                }
                let norm = (x * x + y * y).sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(bad(format!("magnetization_dir must be a unit vector, |m| = {norm}")));
                }
                let report = pm_consistency_check(self);
                if report.flagged {
                    log::warn!(
                        "magnet `{name}`: mu_r {mu_r} deviates {:.1}% from datasheet-implied {:.4}",
                        100.0 * report.deviation,
                        report.implied_mu_r
                    );
                }
                Ok(())
            }
        }
    }
}

/// Coenergy density `int_0^H B dH` for the field `b` (J/m^3).
pub fn coenergy_density(m: &MaterialModel, b: Vec2) -> f64 {
    match *m {
        MaterialModel::LinearPermanentMagnet { mu_r, .. } => {
            let mu = MU0 * mu_r;
            let br = m.remanence();
            let h = (b - br) / mu;
            0.5 * mu * h.norm_squared() + br.dot(&h)
        }
        _ => b.norm_squared() / (2.0 * MU0 * m.mu_r()),
    }
}

/// Magnetizing field for flux density `b` under the material law.
pub fn magnetizing_field(m: &MaterialModel, b: Vec2) -> Vec2 {
    (b - m.remanence()) * m.reluctivity()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub implied_mu_r: f64,
    pub deviation: f64,
    pub flagged: bool,
}

/// Compare the magnet's recoil permeability with `b_r / (mu0 h_c)`.
///
/// Non-magnets report a zero deviation.
pub fn pm_consistency_check(m: &MaterialModel) -> ConsistencyReport {
    match *m {
        MaterialModel::LinearPermanentMagnet { mu_r, b_r, h_c, .. } => {
            let implied = b_r / (MU0 * h_c);
            let deviation = (mu_r - implied).abs() / implied;
            ConsistencyReport {
                implied_mu_r: implied,
                deviation,
                flagged: deviation > PM_CONSISTENCY_RTOL,
            }
        }
        _ => ConsistencyReport {
            implied_mu_r: m.mu_r(),
            deviation: 0.0,
            flagged: false,
        },
    }
}

/// Tensile data of a cured elastomer (Pa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicalProperties {
    pub e_mod: f64,
    pub sigma_100: f64,
    #[serde(default)]
    pub sigma_300: Option<f64>,
}

impl MechanicalProperties {
    pub fn validate(&self, name: &str) -> Result<(), MaterialError> {
        let bad = |reason: String| MaterialError::Invalid {
            name: name.to_string(),
            reason,
        };
        if !(self.e_mod > 0.0 && self.e_mod.is_finite()) {
            return Err(bad(format!("e_mod must be positive, got {}", self.e_mod)));
        }
        if !(self.sigma_100 > 0.0 && self.sigma_100.is_finite()) {
            return Err(bad(format!("sigma_100 must be positive, got {}", self.sigma_100)));
        }
        if let Some(s300) = self.sigma_300 {
            if !(s300 > self.sigma_100) {
                return Err(bad(format!(
                    "sigma_300 ({s300}) must exceed sigma_100 ({})",
                    self.sigma_100
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialEntry {
    pub magnetic: MaterialModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanical: Option<MechanicalProperties>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// Named materials, ordered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialLibrary {
    pub entries: BTreeMap<String, MaterialEntry>,
}

const BUILTIN_LIBRARY: &str = include_str!("../data/materials.json");

impl MaterialLibrary {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_LIBRARY).expect("bundled material library is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, MaterialError> {
        let lib: MaterialLibrary = serde_json::from_str(text)?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self, MaterialError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        for (name, e) in &self.entries {
            e.magnetic.validate(name)?;
            if let Some(mech) = &e.mechanical {
                mech.validate(name)?;
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&MaterialEntry, MaterialError> {
        self.entries
            .get(name)
            .ok_or_else(|| MaterialError::Unknown(name.to_string()))
    }

    /// Entries carrying tensile data, in name order.
    pub fn with_mechanical(&self) -> impl Iterator<Item = (&str, &MaterialEntry, &MechanicalProperties)> {
        self.entries
            .iter()
            .filter_map(|(n, e)| e.mechanical.as_ref().map(|m| (n.as_str(), e, m)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ndfeb() -> MaterialModel {
        MaterialModel::magnet_from_datasheet(1.23, 899e3, Vec2::new(1.0, 0.0))
    }

    #[test]
    fn density_closed_forms() {
        assert_eq!(coenergy_density(&MaterialModel::Air, Vec2::zeros()), 0.0);
        let air = coenergy_density(&MaterialModel::Air, Vec2::new(1.0, 0.0));
        assert_relative_eq!(air, 1.0 / (2.0 * MU0), max_relative = 1e-14);
        assert!((air - 3.979e5).abs() < 1e2);
        let mre = coenergy_density(&MaterialModel::permeable(3.0), Vec2::new(1.0, 0.0));
        assert_relative_eq!(mre, 1.0 / (6.0 * MU0), max_relative = 1e-14);
        assert!((mre - 1.326e5).abs() < 1e2);
    }

    #[test]
    fn magnet_density_matches_integral_of_b_dh() {
        // trapezoid integration of B dH along a straight path from H = 0 to H
        let m = ndfeb();
        let b = Vec2::new(0.3, -0.4);
        let h_end = magnetizing_field(&m, b);
        let n = 2000;
        let mu = MU0 * m.mu_r();
        let mut acc = 0.0;
        for k in 0..n {
            let h0 = h_end * (k as f64 / n as f64);
            let h1 = h_end * ((k + 1) as f64 / n as f64);
            let b0 = h0 * mu + m.remanence();
            let b1 = h1 * mu + m.remanence();
            acc += 0.5 * (b0 + b1).dot(&(h1 - h0));
        }
        assert_relative_eq!(coenergy_density(&m, b), acc, max_relative = 1e-9);
    }

    #[test]
    fn consistency_examples() {
        let m = MaterialModel::LinearPermanentMagnet {
            mu_r: 1.05,
            b_r: 1.23,
            h_c: 899e3,
            magnetization_dir: [1.0, 0.0],
        };
        let r = pm_consistency_check(&m);
        assert!((r.implied_mu_r - 1.089).abs() < 5e-4);
        assert!(!r.flagged);

        let exact = MaterialModel::LinearPermanentMagnet {
            mu_r: 1.0,
            b_r: MU0 * 1e6,
            h_c: 1e6,
            magnetization_dir: [0.0, 1.0],
        };
        assert!(pm_consistency_check(&exact).deviation < 1e-15);

        let weak = MaterialModel::LinearPermanentMagnet {
            mu_r: 1.05,
            b_r: 1.23,
            h_c: 100e3,
            magnetization_dir: [1.0, 0.0],
        };
        let r = pm_consistency_check(&weak);
        assert!((r.implied_mu_r - 9.79).abs() < 5e-3);
        assert!(r.flagged);
        // flagged magnets are still accepted
        assert!(weak.validate("weak").is_ok());
    }

    #[test]
    fn invalid_materials_rejected() {
        assert!(MaterialModel::permeable(0.5).validate("x").is_err());
        let bad_dir = MaterialModel::LinearPermanentMagnet {
            mu_r: 1.05,
            b_r: 1.2,
            h_c: 9e5,
            magnetization_dir: [1.0, 1.0],
        };
        assert!(bad_dir.validate("x").is_err());
        let mech = MechanicalProperties {
            e_mod: 1e6,
            sigma_100: 2e6,
            sigma_300: Some(1e6),
        };
        assert!(mech.validate("x").is_err());
    }

    #[test]
    fn builtin_library_contents() {
        let lib = MaterialLibrary::builtin();
        for name in ["air", "MRE_RTV", "MRE_MS10", "MRE_DS15", "NdFeB"] {
            assert!(lib.get(name).is_ok(), "{name}");
        }
        assert_eq!(lib.with_mechanical().count(), 3);
        let rtv = lib.get("MRE_RTV").unwrap().mechanical.unwrap();
        assert_relative_eq!(rtv.e_mod, 0.81e6);
        assert!(rtv.sigma_300.is_none());
        let pm = lib.get("NdFeB").unwrap().magnetic;
        assert!(!pm_consistency_check(&pm).flagged);
        assert!(matches!(lib.get("steel"), Err(MaterialError::Unknown(_))));
    }

    proptest! {
        #[test]
        fn permeable_density_is_quadratic(bx in -3.0f64..3.0, by in -3.0f64..3.0, mu in 1.0f64..10.0) {
            let m = MaterialModel::permeable(mu);
            let b = Vec2::new(bx, by);
            let d1 = coenergy_density(&m, b);
            let d2 = coenergy_density(&m, b * 2.0);
            prop_assert!(d1 >= 0.0);
            prop_assert!((d2 - 4.0 * d1).abs() <= 1e-12 * d2.abs().max(1e-300));
        }

        #[test]
        fn magnet_density_bounded_below(bx in -5.0f64..5.0, by in -5.0f64..5.0, ang in 0.0f64..6.3) {
            let m = ndfeb().with_direction(Vec2::new(ang.cos(), ang.sin()));
            let MaterialModel::LinearPermanentMagnet { mu_r, b_r, .. } = m else { unreachable!() };
            let floor = -b_r * b_r / (2.0 * MU0 * mu_r);
            let d = coenergy_density(&m, Vec2::new(bx, by));
            prop_assert!(d.is_finite());
            prop_assert!(d >= floor * (1.0 + 1e-12));
        }
    }
}
