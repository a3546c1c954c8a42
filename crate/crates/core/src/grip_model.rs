//! Finger force and payload predictions from torque and tensile data.
//!
//! The finger presses with a magnetic term, the rolling torque over the lever
//! arm, plus a cantilever term proportional to its deflection. The payload
//! follows from Coulomb friction at every finger with one calibrated
//! friction coefficient.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GripperGeometry;
use crate::materials::{MaterialLibrary, MechanicalProperties};

/// Standard gravity used to turn forces into masses (m/s^2).
pub const G0: f64 = 9.81;
/// Measured pushing force of one finger at zero displacement (N).
pub const MEASURED_FINGER_FORCE: f64 = 0.7;
/// Deflection of the fingers against a gripped object (m).
pub const DEFAULT_GRIP_DEFLECTION: f64 = 2e-3;
/// Material the friction coefficient is calibrated on.
pub const CALIBRATION_MATERIAL: &str = "MRE_RTV";

const LIFTED_MASS: &str = include_str!("../data/lifted_mass.json");

#[derive(Debug, Error, PartialEq)]
pub enum GripError {
    #[error("invalid grip model input: {0}")]
    Invalid(String),
}

fn invalid(msg: String) -> GripError {
    GripError::Invalid(msg)
}

/// Tip stiffness `3 E I / L^3` of the finger as an end-loaded cantilever
/// of length `finger_length`.
pub fn beam_stiffness(mech: &MechanicalProperties, g: &GripperGeometry) -> f64 {
    beam_stiffness_with_length(mech, g, g.finger_length)
}

/// [`beam_stiffness`] with an explicit free length.
pub fn beam_stiffness_with_length(mech: &MechanicalProperties, g: &GripperGeometry, length: f64) -> f64 {
    let inertia = g.width * g.finger_thickness.powi(3) / 12.0;
    3.0 * mech.e_mod * inertia / length.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerForceModel {
    /// Rolling torque on the plateau (N m).
    pub plateau_torque: f64,
    /// Distance from the magnet axis to the line of action (m).
    pub lever_arm: f64,
    /// Cantilever stiffness at the tip (N/m).
    pub elastic_stiffness: f64,
}

impl FingerForceModel {
    pub fn new(plateau_torque: f64, lever_arm: f64, elastic_stiffness: f64) -> Result<Self, GripError> {
        let m = Self {
            plateau_torque,
            lever_arm,
            elastic_stiffness,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model whose zero-deflection force equals `force`.
    pub fn from_force(force: f64, lever_arm: f64, elastic_stiffness: f64) -> Result<Self, GripError> {
        Self::new(force * lever_arm, lever_arm, elastic_stiffness)
    }

    /// Lever arm at the contact circle, the default line of action.
    pub fn default_lever_arm(g: &GripperGeometry) -> f64 {
        g.contact_radius()
    }

    pub fn validate(&self) -> Result<(), GripError> {
        if !(self.lever_arm > 0.0 && self.lever_arm.is_finite()) {
            return Err(invalid(format!("lever_arm must be positive, got {}", self.lever_arm)));
        }
        if !(self.elastic_stiffness >= 0.0 && self.elastic_stiffness.is_finite()) {
            return Err(invalid(format!(
                "elastic_stiffness must be non-negative, got {}",
                self.elastic_stiffness
            )));
        }
        if !self.plateau_torque.is_finite() {
            return Err(invalid("plateau_torque must be finite".into()));
        }
        Ok(())
    }

    pub fn magnetic_force(&self) -> f64 {
        self.plateau_torque / self.lever_arm
    }
}

pub fn tip_force(f: &FingerForceModel, deflection: f64) -> Result<f64, GripError> {
    if !(deflection >= 0.0 && deflection.is_finite()) {
        return Err(invalid(format!("deflection must be non-negative, got {deflection}")));
    }
    Ok(f.magnetic_force() + f.elastic_stiffness * deflection)
}

/// `(x, F)` at each displacement; `grid` must be non-negative and increasing.
pub fn force_displacement_curve(f: &FingerForceModel, grid: &[f64]) -> Result<Vec<(f64, f64)>, GripError> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("displacements must be strictly increasing".into()));
    }
    grid.iter().map(|&x| tip_force(f, x).map(|force| (x, force))).collect()
}

/// Largest relative difference between two force curves on the same grid.
pub fn max_relative_difference(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p.1 - q.1).abs() / p.1.abs().max(q.1.abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadModel {
    pub friction_coeff: f64,
    pub n_fingers: u32,
    /// Magnetic pressing force of one finger (N).
    pub normal_force_per_finger: f64,
}

impl PayloadModel {
    pub fn validate(&self) -> Result<(), GripError> {
        if !(self.friction_coeff >= 0.0 && self.friction_coeff <= 2.0) {
            return Err(invalid(format!(
                "friction coefficient must lie in [0, 2], got {}",
                self.friction_coeff
            )));
        }
        if self.n_fingers < 2 {
            return Err(invalid(format!("need at least two fingers, got {}", self.n_fingers)));
        }
        if !(self.normal_force_per_finger >= 0.0 && self.normal_force_per_finger.is_finite()) {
            return Err(invalid(format!(
                "normal force must be non-negative, got {}",
                self.normal_force_per_finger
            )));
        }
        Ok(())
    }
}

/// Normal force of one finger deflected by `grip_deflection`.
fn finger_normal_force(p: &PayloadModel, mech: &MechanicalProperties, g: &GripperGeometry, grip_deflection: f64) -> f64 {
    p.normal_force_per_finger + beam_stiffness(mech, g) * grip_deflection
}

/// Heaviest object held by friction alone (kg).
pub fn max_payload(
    p: &PayloadModel,
    mech: &MechanicalProperties,
    g: &GripperGeometry,
    grip_deflection: f64,
) -> Result<f64, GripError> {
    p.validate()?;
    if !(grip_deflection >= 0.0 && grip_deflection.is_finite()) {
        return Err(invalid(format!("grip deflection must be non-negative, got {grip_deflection}")));
    }
    Ok(p.n_fingers as f64 * p.friction_coeff * finger_normal_force(p, mech, g, grip_deflection) / G0)
}

/// Friction coefficient for which [`max_payload`] returns `mass` (kg).
pub fn calibrate_friction(
    mass: f64,
    n_fingers: u32,
    normal_force_per_finger: f64,
    mech: &MechanicalProperties,
    g: &GripperGeometry,
    grip_deflection: f64,
) -> Result<f64, GripError> {
    let probe = PayloadModel {
        friction_coeff: 1.0,
        n_fingers,
        normal_force_per_finger,
    };
    let per_unit = max_payload(&probe, mech, g, grip_deflection)?;
    if per_unit <= 0.0 {
        return Err(invalid("zero normal force, friction cannot be calibrated".into()));
    }
    let mu = mass / per_unit;
    if !(mu > 0.0 && mu <= 2.0) {
        return Err(invalid(format!("calibrated friction coefficient {mu} outside (0, 2]")));
    }
    Ok(mu)
}

/// Lifted masses per material (g) shipped with the library.
pub fn reference_lifted_mass() -> BTreeMap<String, f64> {
    serde_json::from_str(LIFTED_MASS).expect("bundled lifted-mass table is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub material: String,
    pub e_mod_mpa: f64,
    pub predicted_mass_g: f64,
    pub measured_mass_g: Option<f64>,
}

/// Predicted payload of every library material with tensile data, stiffest first.
pub fn capacity_table(
    lib: &MaterialLibrary,
    p: &PayloadModel,
    g: &GripperGeometry,
    grip_deflection: f64,
    reference: &BTreeMap<String, f64>,
) -> Result<Vec<CapacityRow>, GripError> {
    let mut rows = lib
        .with_mechanical()
        .map(|(name, _, mech)| {
            Ok(CapacityRow {
                material: name.to_string(),
                e_mod_mpa: mech.e_mod / 1e6,
                predicted_mass_g: max_payload(p, mech, g, grip_deflection)? * 1e3,
                measured_mass_g: reference.get(name).copied(),
            })
        })
        .collect::<Result<Vec<_>, GripError>>()?;
    rows.sort_by(|a, b| b.e_mod_mpa.total_cmp(&a.e_mod_mpa).then_with(|| a.material.cmp(&b.material)));
    Ok(rows)
}

/// CSV with columns `material,E_mod_MPa,predicted_mass_g,paper_mass_g`;
/// materials without a reference mass leave the last column empty.
pub fn write_capacity_csv<W: Write>(rows: &[CapacityRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "material,E_mod_MPa,predicted_mass_g,paper_mass_g")?;
    for r in rows {
        let reference = r.measured_mass_g.map(|m| m.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.material, r.e_mod_mpa, r.predicted_mass_g, reference)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mech(e_mod: f64) -> MechanicalProperties {
        MechanicalProperties {
            e_mod,
            sigma_100: 1e6,
            sigma_300: None,
        }
    }

    fn lib_mech(name: &str) -> MechanicalProperties {
        MaterialLibrary::builtin().get(name).unwrap().mechanical.unwrap()
    }

    #[test]
    fn rtv_cantilever_stiffness() {
        let g = GripperGeometry::default();
        let k = beam_stiffness(&mech(0.81e6), &g);
        let expect = 3.0 * 0.81e6 * 3.375e-11 / 2.16e-4;
        assert!((k - expect).abs() < 1e-12 * expect);
        assert!((k - 0.380).abs() < 5e-4);
        assert_eq!(beam_stiffness(&mech(0.0), &g), 0.0);
        let thick = GripperGeometry {
            finger_thickness: 2.0 * g.finger_thickness,
            ..g
        };
        assert!((beam_stiffness(&mech(0.81e6), &thick) / k - 8.0).abs() < 1e-12);
    }

    #[test]
    fn tip_force_terms() {
        let zero = FingerForceModel::new(0.0, 0.0115, 0.0).unwrap();
        for x in [0.0, 1e-3, 1e-2] {
            assert_eq!(tip_force(&zero, x).unwrap(), 0.0);
        }
        let f = FingerForceModel::new(8e-3, 0.01, 0.5).unwrap();
        assert!((tip_force(&f, 0.0).unwrap() - 0.8).abs() < 1e-15);
        assert!(tip_force(&f, -1e-3).is_err());
        assert!(FingerForceModel::new(1e-3, 0.0, 0.0).is_err());
        assert!(FingerForceModel::new(1e-3, 0.01, -1.0).is_err());
    }

    #[test]
    fn measured_force_implies_plateau_torque() {
        let g = GripperGeometry::default();
        let lever = FingerForceModel::default_lever_arm(&g);
        assert!((lever - 11.5e-3).abs() < 1e-15);
        let f = FingerForceModel::from_force(MEASURED_FINGER_FORCE, lever, 0.0).unwrap();
        assert!((f.plateau_torque - 8.05e-3).abs() < 1e-12);
    }

    #[test]
    fn force_curves_shape() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 1e-3).collect();
        let flat = FingerForceModel::from_force(0.7, 0.0115, 0.0).unwrap();
        let c = force_displacement_curve(&flat, &grid).unwrap();
        assert_eq!(c.len(), 11);
        assert!(c.windows(2).all(|w| w[1].0 > w[0].0));
        assert!(c.iter().all(|&(_, f)| (f - 0.7).abs() < 1e-12));
        assert!(force_displacement_curve(&flat, &[0.0, 0.0]).is_err());
        assert!(force_displacement_curve(&flat, &[-1e-3, 0.0]).is_err());
    }

    #[test]
    fn materials_give_nearly_identical_force_curves() {
        let g = GripperGeometry::default();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 1e-3).collect();
        let lever = FingerForceModel::default_lever_arm(&g);
        let curve = |name: &str| {
            let k = beam_stiffness(&lib_mech(name), &g);
            force_displacement_curve(&FingerForceModel::from_force(MEASURED_FINGER_FORCE, lever, k).unwrap(), &grid)
                .unwrap()
        };
        let diff = max_relative_difference(&curve("MRE_RTV"), &curve("MRE_DS15"));
        assert!(diff < 0.05, "{diff}");
    }

    #[test]
    fn calibration_reproduces_reference_mass_and_ordering() {
        let g = GripperGeometry::default();
        let reference = reference_lifted_mass();
        let target = reference[CALIBRATION_MATERIAL] * 1e-3;
        let mu = calibrate_friction(
            target,
            3,
            MEASURED_FINGER_FORCE,
            &lib_mech(CALIBRATION_MATERIAL),
            &g,
            DEFAULT_GRIP_DEFLECTION,
        )
        .unwrap();
        assert!((mu - 0.455).abs() < 1e-3, "{mu}");
        let p = PayloadModel {
            friction_coeff: mu,
            n_fingers: 3,
            normal_force_per_finger: MEASURED_FINGER_FORCE,
        };
        let rtv = max_payload(&p, &lib_mech("MRE_RTV"), &g, DEFAULT_GRIP_DEFLECTION).unwrap();
        assert!((rtv - target).abs() < 1e-12);
        let rows = capacity_table(&MaterialLibrary::builtin(), &p, &g, DEFAULT_GRIP_DEFLECTION, &reference).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.material.as_str()).collect();
        assert_eq!(names, ["MRE_RTV", "MRE_MS10", "MRE_DS15"]);
        assert!(rows.windows(2).all(|w| w[0].predicted_mass_g > w[1].predicted_mass_g));
        assert_eq!(rows[2].measured_mass_g, Some(40.2));
    }

    #[test]
    fn zero_friction_lifts_nothing() {
        let g = GripperGeometry::default();
        let p = PayloadModel {
            friction_coeff: 0.0,
            n_fingers: 3,
            normal_force_per_finger: 0.7,
        };
        assert_eq!(max_payload(&p, &lib_mech("MRE_RTV"), &g, 2e-3).unwrap(), 0.0);
    }

    #[test]
    fn payload_validation() {
        let g = GripperGeometry::default();
        let m = mech(1e6);
        let ok = PayloadModel {
            friction_coeff: 0.5,
            n_fingers: 3,
            normal_force_per_finger: 0.7,
        };
        assert!(max_payload(&PayloadModel { friction_coeff: 2.5, ..ok }, &m, &g, 0.0).is_err());
        assert!(max_payload(&PayloadModel { n_fingers: 1, ..ok }, &m, &g, 0.0).is_err());
        assert!(max_payload(&ok, &m, &g, -1e-3).is_err());
        assert!(calibrate_friction(10.0, 3, 0.7, &m, &g, 2e-3).is_err());
        assert!(calibrate_friction(0.1, 3, 0.0, &mech(1e-30), &g, 0.0).is_err());
    }

    #[test]
    fn capacity_csv_layout() {
        let rows = vec![
            CapacityRow {
                material: "A".into(),
                e_mod_mpa: 0.5,
                predicted_mass_g: 12.5,
                measured_mass_g: Some(10.0),
            },
            CapacityRow {
                material: "B".into(),
                e_mod_mpa: 0.25,
                predicted_mass_g: 6.0,
                measured_mass_g: None,
            },
        ];
        let mut out = Vec::new();
        write_capacity_csv(&rows, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "material,E_mod_MPa,predicted_mass_g,paper_mass_g\nA,0.5,12.5,10\nB,0.25,6,\n"
        );
    }

    proptest! {
        #[test]
        fn payload_increases_with_each_input(
            mu in 0.01f64..1.9,
            n in 2u32..6,
            force in 0.01f64..5.0,
            e in 1e4f64..1e7,
            defl in 1e-4f64..1e-2,
            bump in 1.01f64..1.5,
        ) {
            let g = GripperGeometry::default();
            let p = PayloadModel { friction_coeff: mu, n_fingers: n, normal_force_per_finger: force };
            let base = max_payload(&p, &mech(e), &g, defl).unwrap();
            let more_mu = PayloadModel { friction_coeff: (mu * bump).min(2.0), ..p };
            prop_assert!(max_payload(&more_mu, &mech(e), &g, defl).unwrap() > base);
            let more_fingers = PayloadModel { n_fingers: n + 1, ..p };
            prop_assert!(max_payload(&more_fingers, &mech(e), &g, defl).unwrap() > base);
            let more_force = PayloadModel { normal_force_per_finger: force * bump, ..p };
            prop_assert!(max_payload(&more_force, &mech(e), &g, defl).unwrap() > base);
            prop_assert!(max_payload(&p, &mech(e * bump), &g, defl).unwrap() > base);
        }

        #[test]
        fn tip_force_is_affine(torque in -1.0f64..1.0, lever in 1e-3f64..0.1, k in 0.0f64..10.0, x in 0.0f64..0.05, y in 0.0f64..0.05) {
            let f = FingerForceModel::new(torque, lever, k).unwrap();
            let (fx, fy) = (tip_force(&f, x).unwrap(), tip_force(&f, y).unwrap());
            let f0 = tip_force(&f, 0.0).unwrap();
            prop_assert!((f0 - torque / lever).abs() <= 1e-12 * f0.abs().max(1.0));
            prop_assert!(((fx - f0) - k * x).abs() <= 1e-12 * fx.abs().max(1.0));
            prop_assert!(((fx - fy) - k * (x - y)).abs() <= 1e-12 * fx.abs().max(fy.abs()).max(1.0));
        }

        #[test]
        fn force_curve_is_monotone(torque in 0.0f64..0.1, k in 0.0f64..10.0, steps in 2usize..40) {
            let f = FingerForceModel::new(torque, 0.0115, k).unwrap();
            let grid: Vec<f64> = (0..steps).map(|i| i as f64 * 1e-3).collect();
            let c = force_displacement_curve(&f, &grid).unwrap();
            prop_assert!(c.windows(2).all(|w| w[1].1 >= w[0].1));
        }
    }
}
