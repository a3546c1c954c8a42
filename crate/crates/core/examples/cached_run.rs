//! Config-driven sweep through the result cache: the second run reads every
//! sample back instead of solving.

use magspring::cli::{cmd_sweep, RunConfig, RunOptions};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(
        None,
        &[
            format!("output_dir={}", dir.path().display()),
            "mesh.h_max=0.001".into(),
            "sweep.stop_deg=120".into(),
        ],
    )
    .unwrap();
    for run in ["cold", "warm"] {
        let out = cmd_sweep(&cfg, &RunOptions::default()).unwrap();
        let m = &out.meta;
        println!(
            "{run}: {} samples, {} field solves, {} cache hits, {:.2} s",
            m.samples, m.field_solves, m.cache_hits, m.timings.total_s
        );
    }
    println!("{}", std::fs::read_to_string(dir.path().join("torque.csv")).unwrap());
}
