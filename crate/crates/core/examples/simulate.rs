//! Integrates the normalized SICA model with every integrator on the
//! default 101-node grid and prints the terminal state of each.
//!
//! ```bash
//! cargo run --example simulate
//! ```

use sica::analysis::{simplex_drift, Setup};
use sica::integrators::{AdaptiveSettings, Method};

pub fn run_example() -> sica::Result<()> {
    let setup = Setup::default();
    println!("{:<6} {:>12} {:>12} {:>12} {:>12} {:>10}", "method", "s(20)", "i(20)", "c(20)", "a(20)", "drift");
    for method in Method::ALL {
        let traj = setup.simulate(method, &AdaptiveSettings::default())?;
        let x = traj.last();
        println!(
            "{:<6} {:>12.8} {:>12.8} {:>12.8} {:>12.8} {:>10.1e}",
            method,
            x[0],
            x[1],
            x[2],
            x[3],
            simplex_drift(&traj)
        );
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
