//! Writes the CSVs and gnuplot scripts behind the trajectory and optimal
//! control figures into a directory (default: `target/sica-figures`).
//!
//! ```bash
//! cargo run --example gnuplot_figures -- /tmp/figs
//! cd /tmp/figs && for f in *.gp; do gnuplot "$f"; done
//! ```

use std::path::{Path, PathBuf};

use sica::cli::{cmd_optimize, cmd_simulate, RunConfig};
use sica::integrators::Method;

pub fn write_figures(dir: &Path) -> sica::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for method in [Method::Euler, Method::Rk2, Method::Rk4] {
        let mut cfg = RunConfig::default();
        cfg.output.csv = Some(dir.join(format!("{method}.csv")));
        cfg.output.plot = true;
        let out = cmd_simulate(&cfg, method)?;
        written.push(out.csv);
        written.extend(out.extra);
    }
    let mut cfg = RunConfig::default();
    cfg.output.csv = Some(dir.join("optimal.csv"));
    cfg.output.plot = true;
    let out = cmd_optimize(&cfg)?;
    written.push(out.csv);
    written.extend(out.extra);
    Ok(written)
}

pub fn run_example() -> sica::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/sica-figures"));
    for path in write_figures(&dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> sica::Result<()> {
    run_example()
}
