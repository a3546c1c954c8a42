//! Friction calibration, payload per elastomer and finger force curves.

use magspring::geometry::GripperGeometry;
use magspring::grip_model::{
    beam_stiffness, calibrate_friction, capacity_table, force_displacement_curve, reference_lifted_mass,
    FingerForceModel, PayloadModel, DEFAULT_GRIP_DEFLECTION, MEASURED_FINGER_FORCE,
};
use magspring::materials::MaterialLibrary;

fn main() {
    let g = GripperGeometry::default();
    let lib = MaterialLibrary::builtin();
    let reference = reference_lifted_mass();
    let rtv = lib.get("MRE_RTV").unwrap().mechanical.unwrap();
    let mu = calibrate_friction(
        reference["MRE_RTV"] * 1e-3,
        3,
        MEASURED_FINGER_FORCE,
        &rtv,
        &g,
        DEFAULT_GRIP_DEFLECTION,
    )
    .unwrap();
    println!("friction coefficient calibrated on MRE_RTV: {mu:.4}");
    let model = PayloadModel {
        friction_coeff: mu,
        n_fingers: 3,
        normal_force_per_finger: MEASURED_FINGER_FORCE,
    };
    for row in capacity_table(&lib, &model, &g, DEFAULT_GRIP_DEFLECTION, &reference).unwrap() {
        let measured = row.measured_mass_g.map(|m| format!("{m:.1} g")).unwrap_or_else(|| "-".into());
        println!(
            "{:<9} E = {:.3} MPa  predicted {:.2} g  measured {measured}",
            row.material, row.e_mod_mpa, row.predicted_mass_g
        );
    }
    let grid: Vec<f64> = (0..=5).map(|i| i as f64 * 2e-3).collect();
    let lever = FingerForceModel::default_lever_arm(&g);
    for (name, _, mech) in lib.with_mechanical() {
        let f = FingerForceModel::from_force(MEASURED_FINGER_FORCE, lever, beam_stiffness(mech, &g)).unwrap();
        let curve: Vec<String> = force_displacement_curve(&f, &grid)
            .unwrap()
            .iter()
            .map(|(_, force)| format!("{force:.4}"))
            .collect();
        println!("{name:<9} k = {:.3} N/m  F(0..10 mm) = [{}] N", beam_stiffness(mech, &g), curve.join(", "));
    }
}
