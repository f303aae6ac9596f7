//! Runs the bundled reference scenario and prints a short summary.
//!
//! `cargo run --release -p affloc-core --example reference_run -- [out-dir]`
//! also writes the scenario file and all run artifacts when a directory is
//! given.

use std::path::PathBuf;
use std::time::Instant;

use affloc_core::simulator::{interval_fits, reference_scenario, run, write_outputs};
use affloc_core::Tolerances;

fn main() {
    let sc = reference_scenario();
    let started = Instant::now();
    let res = run(&sc, &Tolerances::default()).expect("reference scenario runs");
    println!("run took {:.1?}", started.elapsed());
    println!(
        "xi = {:.4}  beta = {:.4}  T* = {}  smsi = {}",
        res.gains.xi, res.gains.beta, res.gains.t_star, res.smsi
    );
    for fit in interval_fits(&res) {
        println!(
            "[{:>5}, {:>5})  window to {:>6.1}  slope {:>8.4}  R2 {:.4}  start {:.2e}  end {:.2e}",
            fit.start, fit.end, fit.window_end, fit.slope, fit.r_squared, fit.initial_max, fit.terminal_max
        );
    }
    for j in &res.jumps {
        println!("jump at {}: {:?}  V {:.3e} -> {:.3e}", j.t, j.case, j.v_before, j.v_after);
    }
    println!(
        "flow bound held at {}/{} instants ({:.3}%)",
        res.flow.satisfied,
        res.flow.checked,
        100.0 * res.flow.fraction()
    );
    println!("identity deviation {:.2e}", res.identity_deviation);
    for w in &res.warnings {
        println!("warning: {w}");
    }
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        write_outputs(&res, &dir).expect("outputs are writable");
        std::fs::write(dir.join("scenario.json"), sc.to_json()).expect("scenario is writable");
        println!("artifacts in {}", dir.display());
    }
}
