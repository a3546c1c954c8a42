//! Field of a uniformly magnetized cylinder in air against the closed form
//! `B = (b_r / 2)(1 - a^2 / R^2)` for `A = 0` on the outer circle `R`.

use magspring::geometry::Vec2;
use magspring::magnetostatics::{solve_field, RegionMaterials, SolverOptions};
use magspring::materials::{MaterialModel, MU0};
use magspring::mesh::{triangulate, MeshParams, Outline, Region};

fn main() {
    let (a, outer, b_r): (f64, f64, f64) = (10e-3, 100e-3, 1.2);
    let magnet = MaterialModel::LinearPermanentMagnet {
        mu_r: 1.0,
        b_r,
        h_c: b_r / MU0,
        magnetization_dir: [1.0, 0.0],
    };
    let mats = RegionMaterials::from([(Region::Air, MaterialModel::Air), (Region::Pm, magnet)]);
    let exact = 0.5 * b_r * (1.0 - (a / outer).powi(2));
    let base = MeshParams {
        h_max: 2.0 * a / 10.0,
        ..MeshParams::default()
    };
    let mut prev: Option<f64> = None;
    for f in [1.0, 2.0, 4.0, 8.0] {
        let p = base.refined(f);
        let mesh = triangulate(&Outline::magnet_in_air(a, outer, &p).unwrap(), &p).unwrap();
        let sol = solve_field(&mesh, &mats, &SolverOptions::default()).unwrap();
        let (mut sq, mut area) = (0.0, 0.0);
        for e in 0..mesh.triangles.len() {
            if mesh.regions[e] == Region::Pm {
                let w = mesh.signed_area(e);
                sq += w * (sol.b_elem[e] - Vec2::new(exact, 0.0)).norm_squared();
                area += w;
            }
        }
        let err = (sq / area).sqrt() / exact;
        let order = prev.map(|e| format!("{:.2}", (e / err).log2())).unwrap_or_default();
        println!(
            "h = d/{:<3} {:>7} elements  mean Bx {:.5} T (exact {exact:.5})  rms err {err:.3e}  order {order}",
            10.0 * f,
            mesh.triangles.len(),
            sol.mean_b(Region::Pm).x
        );
        prev = Some(err);
    }
}
