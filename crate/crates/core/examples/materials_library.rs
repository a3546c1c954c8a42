//! Bundled material library: magnetic models, tensile data and the magnet's
//! datasheet consistency.

use magspring::materials::{pm_consistency_check, MaterialLibrary};

fn main() {
    let lib = MaterialLibrary::builtin();
    for (name, e) in &lib.entries {
        let m = &e.magnetic;
        let mech = e
            .mechanical
            .map(|p| format!("E = {:.3} MPa", p.e_mod / 1e6))
            .unwrap_or_else(|| "no tensile data".into());
        println!("{name:<9} mu_r = {:<8.4} |B_r| = {:.3} T  {mech}", m.mu_r(), m.remanence().norm());
        if m.is_magnet() {
            let c = pm_consistency_check(m);
            println!(
                "          b_r / (mu0 h_c) = {:.4}, deviation {:.2e}, flagged {}",
                c.implied_mu_r, c.deviation, c.flagged
            );
        }
    }
}
