//! Empirical convergence orders of Euler, RK2 and RK4 from terminal errors
//! against a DP45 run at `reltol = 1e-12`.

use sica::analysis::{convergence_order_against, order_reference, reference_terminal, Setup};
use sica::integrators::FixedMethod;

pub fn run_example() -> sica::Result<()> {
    let setup = Setup::default();
    let exact = reference_terminal(&setup, &order_reference())?;
    let levels = [100, 200, 400, 800, 1600];
    for method in FixedMethod::ALL {
        let report = convergence_order_against(method, &setup, &levels, &exact)?;
        let errs: Vec<String> = report.max_errors.iter().map(|e| format!("{e:.2e}")).collect();
        println!(
            "{:<5} slope {:.3} (nominal {})  errors [{}]",
            method,
            report.slope,
            method.order(),
            errs.join(", ")
        );
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
