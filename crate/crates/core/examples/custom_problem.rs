//! The sweep on a problem of your own: a scalar linear-quadratic problem
//! with a closed-form optimum.
//!
//! Maximize `∫₀¹ −(x² + u²) dt` subject to `x' = u`, `x(0) = 1`. The
//! optimum is `x(t) = cosh(1 − t)/cosh(1)`, `u = −x·tanh(1 − t)`, with
//! value `−tanh(1)`. The sweep works with `v = −u ∈ [0, 0.9]`, a range the
//! optimum never leaves.

use sica::integrators::TimeGrid;
use sica::model::ControlBounds;
use sica::sweep::{solve, ControlProblem, SweepSettings};

struct Regulator {
    x0: [f64; 1],
}

impl ControlProblem for Regulator {
    fn dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn bounds(&self) -> ControlBounds {
        ControlBounds::new(0.9).expect("valid bound")
    }

    fn state_rhs(&self, _t: f64, _x: &[f64], v: f64, dx: &mut [f64]) {
        dx[0] = -v;
    }

    // H = −x² − v² − λv, so λ' = 2x and the law is v = −λ/2.
    fn adjoint_rhs(&self, _t: f64, x: &[f64], _lam: &[f64], _v: f64, dl: &mut [f64]) {
        dl[0] = 2.0 * x[0];
    }

    fn control_law(&self, _t: f64, _x: &[f64], lam: &[f64]) -> f64 {
        self.bounds().clamp(-0.5 * lam[0])
    }

    fn running_cost(&self, _t: f64, x: &[f64], v: f64) -> f64 {
        -(x[0] * x[0] + v * v)
    }
}

pub fn run_example() -> sica::Result<f64> {
    let settings = SweepSettings {
        grid: TimeGrid::new(0.0, 1.0, 200)?,
        delta_error: 1e-8,
        ..Default::default()
    };
    let result = solve(&Regulator { x0: [1.0] }, &settings)?;
    let grid = settings.grid;
    let mut worst: f64 = 0.0;
    for k in 0..grid.len() {
        let t = grid.node(k);
        let exact = (1.0 - t).cosh() / 1f64.cosh();
        worst = worst.max((result.state.state(k)[0] - exact).abs());
    }
    println!("iterations {}  max |x − x_exact| = {worst:.2e}", result.iterations);
    println!("J = {:.8} (exact {:.8})", result.objective, -(1f64.tanh()));
    Ok(worst)
}

fn main() -> sica::Result<()> {
    run_example().map(|_| ())
}
