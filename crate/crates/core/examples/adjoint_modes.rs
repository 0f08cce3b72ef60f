//! The derived costate equations against the printed ones, which carry
//! `+d·s` instead of `−d·s` in the `λ4` row.
//!
//! A finite-difference gradient of the Hamiltonian singles out the derived
//! form; both forms are then run through the sweep.

use sica::model::{adjoint_rhs, hamiltonian, AdjointMode, AdjointState, ControlBounds, Fractions, ModelParams};
use sica::sweep::{solve, SicaProblem, SweepSettings};

fn fd_gradient(p: &ModelParams, x: &Fractions, lam: &AdjointState, u: f64) -> [f64; 4] {
    let h = 1e-6;
    std::array::from_fn(|j| {
        let mut up = x.to_array();
        let mut dn = x.to_array();
        up[j] += h;
        dn[j] -= h;
        (hamiltonian(p, &Fractions::from_slice(&up), lam, u) - hamiltonian(p, &Fractions::from_slice(&dn), lam, u))
            / (2.0 * h)
    })
}

pub fn run_example() -> sica::Result<()> {
    let p = ModelParams::default();
    let x = Fractions::new(0.5, 0.2, 0.2, 0.1);
    let lam = AdjointState::new(1.2, -0.4, 0.3, 0.8);
    let u = 0.25;
    let grad = fd_gradient(&p, &x, &lam, u);
    for mode in [AdjointMode::Derived, AdjointMode::Verbatim] {
        let rhs = adjoint_rhs(&p, &x, &lam, u, mode).to_array();
        let worst = (0..4).map(|j| (rhs[j] + grad[j]).abs()).fold(0.0, f64::max);
        println!("{:<8} max |λ' + ∂H/∂x| = {worst:.2e}", mode.name());
    }

    let bounds = ControlBounds::new(0.5)?;
    for mode in [AdjointMode::Derived, AdjointMode::Verbatim] {
        let problem = SicaProblem::new(p, Fractions::default(), bounds, mode)?;
        let r = solve(&problem, &SweepSettings::default())?;
        println!("{:<8} iterations {:>3}  J(u*) {:.8}", mode.name(), r.iterations, r.objective);
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
