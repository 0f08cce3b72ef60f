//! The absolute model divided through by the population agrees with the
//! normalized model.

use sica::integrators::{integrate_dp45, AdaptiveSettings, TimeGrid};
use sica::model::{AbsoluteField, AbsoluteState, Fractions, ModelParams, NormalizedField};

pub fn run_example() -> sica::Result<()> {
    let params = ModelParams::default();
    let grid = TimeGrid::new(0.0, 20.0, 100)?;
    let tight = AdaptiveSettings::tight(1e-9, 1e-12);
    let start = Fractions::default();

    // Any population scale gives the same fractions.
    for scale in [1.0, 1e4] {
        let x0 = start.to_array().map(|v| v * scale);
        let abs = integrate_dp45(&AbsoluteField { params }, 0.0, 20.0, &x0, &tight, grid)?;
        let norm = integrate_dp45(&NormalizedField { params }, 0.0, 20.0, &start.to_array(), &tight, grid)?;
        let mut worst: f64 = 0.0;
        for k in 0..grid.len() {
            let f = AbsoluteState::from_slice(abs.state(k)).fractions()?.to_array();
            for (a, b) in f.iter().zip(norm.state(k)) {
                worst = worst.max((a - b).abs());
            }
        }
        let n_end = AbsoluteState::from_slice(abs.last()).total();
        println!("N(0) = {scale:>7}  N(20) = {n_end:>12.4}  max |S/N − s| = {worst:.2e}");
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
