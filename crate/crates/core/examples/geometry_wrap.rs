//! Gripper radii, wrap limit and the stripe mid-line at a few wrap angles.

use magspring::geometry::{wrap_path, GripperGeometry};

fn main() {
    let g = GripperGeometry::default();
    println!("r_open  = {:.4} mm", g.open_radius() * 1e3);
    println!("r_close = {:.4} mm", g.close_radius().unwrap() * 1e3);
    println!("theta_max = {:.2} deg", g.max_wrap_angle().to_degrees());
    println!("{:>9} {:>10} {:>10} {:>11} {:>10}", "theta", "arc mm", "free mm", "length mm", "vertices");
    for deg in [0.0, 45.0, 90.0, 180.0, 270.0] {
        let p = wrap_path(&g, f64::to_radians(deg), g.default_anchor()).unwrap();
        println!(
            "{:>9.1} {:>10.3} {:>10.3} {:>11.3} {:>10}",
            deg,
            p.state.arc_length * 1e3,
            p.state.free_length * 1e3,
            p.length() * 1e3,
            p.polyline.len()
        );
    }
}
