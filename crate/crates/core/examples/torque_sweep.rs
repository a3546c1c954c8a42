//! Coenergy sweep on a coarse mesh, spline torque and its finite-difference
//! check. Pass `--fixed` to keep the magnet's own magnetization direction.

use magspring::energy_torque::{
    default_grid, fit_spline, rms_interior_difference, sweep_coenergy, torque_curve, torque_fd_oracle,
    MagnetOrientation, Smoothing, SweepOptions,
};
use magspring::geometry::GripperGeometry;
use magspring::magnetostatics::RegionMaterials;
use magspring::materials::MaterialLibrary;
use magspring::mesh::{MeshParams, Region};

fn main() {
    let fixed = std::env::args().any(|a| a == "--fixed");
    let g = GripperGeometry::default();
    let lib = MaterialLibrary::builtin();
    let mats = RegionMaterials::from([
        (Region::Air, lib.get("air").unwrap().magnetic),
        (Region::Mre, lib.get("MRE_RTV").unwrap().magnetic),
        (Region::Pm, lib.get("NdFeB").unwrap().magnetic),
    ]);
    let mesh = MeshParams {
        h_max: 1e-3,
        ..MeshParams::default()
    };
    let opts = SweepOptions {
        orientation: if fixed { MagnetOrientation::Fixed } else { MagnetOrientation::Averaged },
        ..SweepOptions::default()
    };
    let grid = default_grid(&g);
    let curve = sweep_coenergy(&g, &mats, &mesh, &grid, &opts).unwrap();
    let spline = fit_spline(&curve, Smoothing::Auto).unwrap();
    let torque = torque_curve(&spline, &grid).unwrap();
    let fd = torque_fd_oracle(&curve).unwrap();
    println!("{:>8} {:>12} {:>10} {:>10}", "deg", "w_co J", "T mNm", "FD mNm");
    for ((c, t), d) in curve.samples.iter().zip(&torque.samples).zip(&fd.samples).step_by(4) {
        println!("{:>8.2} {:>12.6} {:>10.3} {:>10.3}", c.0.to_degrees(), c.1, t.1 * 1e3, d.1 * 1e3);
    }
    let p = torque.default_plateau().unwrap();
    println!("plateau mean {:.3} mN m, CV {:.4}", p.mean * 1e3, p.cv);
    println!(
        "spline lambda {:.3e}, effective dof {:.2}, spline-FD RMS {:.3} % of plateau",
        spline.lambda,
        spline.effective_dof,
        100.0 * rms_interior_difference(&torque, &fd) / p.mean
    );
}
