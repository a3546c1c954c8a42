//! Mesh of one wrap state with per-region statistics.
//!
//! `cargo run --release --example mesh_configuration -- 120 mesh.txt`
//! meshes the 120 deg state and writes it as text.

use magspring::geometry::{wrap_path, GripperGeometry};
use magspring::mesh::{mesh_configuration, MeshParams, Region};

fn main() {
    let mut args = std::env::args().skip(1);
    let deg: f64 = args.next().map(|s| s.parse().expect("angle in degrees")).unwrap_or(120.0);
    let g = GripperGeometry::default();
    let path = wrap_path(&g, deg.to_radians(), g.default_anchor()).unwrap();
    let mesh = mesh_configuration(&g, &path, &MeshParams::default()).unwrap();
    println!("theta = {deg} deg: {} nodes, {} triangles", mesh.nodes.len(), mesh.triangles.len());
    println!("minimum angle {:.2} deg, conforming {}", mesh.min_angle(), mesh.is_conforming());
    for r in [Region::Pm, Region::Mre, Region::Air] {
        let n = mesh.regions.iter().filter(|&&x| x == r).count();
        println!(
            "{:<4} {:>6} elements, area {:.4e} m^2, longest edge {:.3} mm",
            r.as_str(),
            n,
            mesh.region_area(r),
            mesh.max_edge_in(r) * 1e3
        );
    }
    if let Some(out) = args.next() {
        mesh.write_text(std::io::BufWriter::new(std::fs::File::create(&out).unwrap())).unwrap();
        println!("wrote {out}");
    }
}
