//! Norms of the difference between each fixed-step method and the DP45
//! reference, next to the published tables.
//!
//! The `octave-default` reference reproduces the published RK4 table; the
//! `tight` reference shows how much of that table is reference error.

use sica::analysis::{build_norm_table, compare_with_published, ReferenceProfile, Setup};
use sica::integrators::FixedMethod;

pub fn run_example() -> sica::Result<()> {
    let setup = Setup::default();
    for profile in [ReferenceProfile::OctaveDefault, ReferenceProfile::Tight] {
        println!("reference: {profile}");
        for method in FixedMethod::ALL {
            let table = build_norm_table(method.into(), &setup, &profile.settings())?;
            let entries = compare_with_published(&table).expect("fixed-step method");
            let (lo, hi) = entries
                .iter()
                .map(|e| e.computed / e.published)
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
            let inside = entries.iter().filter(|e| e.within_band).count();
            println!("  {method:<5} computed/published in [{lo:.4}, {hi:.4}], {inside}/12 inside the band");
        }
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
