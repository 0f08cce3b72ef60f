//! Optimal prevention effort for the SICA model with `u_max = 0.5` by the
//! forward-backward sweep, compared with doing nothing.

use sica::analysis::{maximality_gap, stationarity_residual};
use sica::integrators::FixedMethod;
use sica::integrators::integrate_fixed;
use sica::model::{objective, AdjointMode, ControlBounds, Fractions, ModelParams, NormalizedField};
use sica::sweep::{solve, SicaProblem, SweepSettings};

pub fn run_example() -> sica::Result<()> {
    let params = ModelParams::default();
    let bounds = ControlBounds::new(0.5)?;
    let problem = SicaProblem::new(params, Fractions::default(), bounds, AdjointMode::Derived)?;
    let settings = SweepSettings::default();
    let result = solve(&problem, &settings)?;

    let free = integrate_fixed(
        FixedMethod::Rk4,
        &NormalizedField { params },
        settings.grid,
        &Fractions::default().to_array(),
    )?;
    let j0 = objective(&free, &vec![0.0; settings.grid.len()])?;

    println!("iterations      {}", result.iterations);
    println!("J(u*)           {:.6}", result.objective);
    println!("J(0)            {:.6}", j0);
    println!("maximality gap  {:.1e}", maximality_gap(&result, &params, &bounds, 51));
    if let Some(r) = stationarity_residual(&result, &params, &bounds) {
        println!("|dH/du| interior {r:.1e}");
    }

    // Control at full effort until the switching time, then released.
    let grid = settings.grid;
    let switch = result.control.iter().position(|&u| u < bounds.u_max()).unwrap_or(grid.steps());
    println!("u* = u_max on [0, {:.2}]", grid.node(switch));
    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>6}", "t", "s*", "s", "i*", "i", "u*");
    for k in (0..grid.len()).step_by(100) {
        let (x, y) = (result.state.state(k), free.state(k));
        println!(
            "{:>5.1} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6.3}",
            grid.node(k),
            x[0],
            y[0],
            x[1],
            y[1],
            result.control[k]
        );
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
