//! Error-norm tables, convergence-order studies and solution diagnostics.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{
    integrate, integrate_dp45, integrate_fixed, AdaptiveSettings, FixedMethod, Method, TimeGrid, Trajectory,
};
use crate::model::{hamiltonian_kernel, ControlBounds, Fractions, ModelParams, NormalizedField};
use crate::sweep::SweepResult;

/// Variable labels in state order.
pub const VARIABLES: [&str; 4] = ["s", "i", "c", "a"];

/// Norms 1, 2 and ∞ of a difference vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormTriple {
    pub n1: f64,
    pub n2: f64,
    pub ninf: f64,
}

impl NormTriple {
    pub fn new(n1: f64, n2: f64, ninf: f64) -> Self {
        NormTriple { n1, n2, ninf }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.n1, self.n2, self.ninf]
    }

    /// `ninf ≤ n2 ≤ n1`, allowing for rounding in the 2-norm.
    pub fn is_ordered(&self) -> bool {
        let slack = 4.0 * f64::EPSILON * self.n1;
        self.ninf <= self.n2 + slack && self.n2 <= self.n1 + slack
    }
}

pub fn diff_norms(x: &[f64], y: &[f64]) -> Result<NormTriple> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut out = NormTriple::default();
    let mut sq = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = (a - b).abs();
        out.n1 += d;
        sq += d * d;
        out.ninf = out.ninf.max(d);
    }
    out.n2 = sq.sqrt();
    Ok(out)
}

/// Which DP45 configuration produces the reference column of a norm table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceProfile {
    /// `ode45` defaults (`RelTol 1e-3`, `AbsTol 1e-6`) with Octave's controller.
    #[default]
    OctaveDefault,
    /// Standard controller at `reltol 1e-6`, `abstol 1e-9`.
    Tight,
}

impl ReferenceProfile {
    pub fn settings(self) -> AdaptiveSettings {
        match self {
            ReferenceProfile::OctaveDefault => AdaptiveSettings::octave_default(),
            ReferenceProfile::Tight => AdaptiveSettings::default(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReferenceProfile::OctaveDefault => "octave-default",
            ReferenceProfile::Tight => "tight",
        }
    }
}

impl fmt::Display for ReferenceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferenceProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "octave-default" => Ok(ReferenceProfile::OctaveDefault),
            "tight" => Ok(ReferenceProfile::Tight),
            other => Err(Error::Config(format!("unknown reference profile `{other}`"))),
        }
    }
}

/// Initial-value problem for the normalized model on a fixed grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub params: ModelParams,
    pub initial: Fractions,
    pub grid: TimeGrid,
}

impl Default for Setup {
    fn default() -> Self {
        Setup {
            params: ModelParams::default(),
            initial: Fractions::default(),
            grid: TimeGrid::new(0.0, 20.0, 100).expect("static grid"),
        }
    }
}

impl Setup {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.initial.validate()
    }

    pub fn field(&self) -> NormalizedField {
        NormalizedField { params: self.params }
    }

    pub fn simulate(&self, method: Method, adaptive: &AdaptiveSettings) -> Result<Trajectory> {
        self.validate()?;
        integrate(method, &self.field(), self.grid, &self.initial.to_array(), adaptive)
    }
}

/// Per-variable norms of `method − reference` on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub method: Method,
    pub grid: TimeGrid,
    pub reference: AdaptiveSettings,
    /// Rows in the order s, i, c, a.
    pub rows: [NormTriple; 4],
}

impl NormTable {
    pub fn row(&self, variable: usize) -> NormTriple {
        self.rows[variable]
    }
}

pub fn norm_table_from(
    method: Method,
    candidate: &Trajectory,
    reference: &Trajectory,
    reference_settings: AdaptiveSettings,
) -> Result<NormTable> {
    if candidate.grid() != reference.grid() {
        return Err(Error::GridMismatch("candidate and reference grids differ".into()));
    }
    if candidate.dim() != 4 || reference.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: if candidate.dim() != 4 { candidate.dim() } else { reference.dim() },
        });
    }
    let mut rows = [NormTriple::default(); 4];
    for (j, row) in rows.iter_mut().enumerate() {
        *row = diff_norms(&reference.component(j), &candidate.component(j))?;
    }
    Ok(NormTable {
        method,
        grid: *candidate.grid(),
        reference: reference_settings,
        rows,
    })
}

/// Runs `method` and the DP45 reference on `setup.grid` and tabulates their difference.
pub fn build_norm_table(method: Method, setup: &Setup, reference: &AdaptiveSettings) -> Result<NormTable> {
    let reference_traj = setup.simulate(Method::Dp45, reference)?;
    let candidate = setup.simulate(method, reference)?;
    norm_table_from(method, &candidate, &reference_traj, *reference)
}

const EULER_TABLE: [[f64; 3]; 4] = [
    [0.4495660, 0.0659270, 0.0161175],
    [0.1646710, 0.0301720, 0.0113068],
    [0.5255950, 0.0783920, 0.0190621],
    [0.0443340, 0.0101360, 0.0041673],
];

const RK2_TABLE: [[f64; 3]; 4] = [
    [0.0106530, 0.0014868, 0.0003341],
    [0.0105505, 0.0025288, 0.0009613],
    [0.0151705, 0.0022508, 0.0006695],
    [0.0044304, 0.0011695, 0.0004678],
];

const RK4_TABLE: [[f64; 3]; 4] = [
    [0.0003193, 0.0000409, 0.0000107],
    [0.0002733, 0.0000395, 0.0000140],
    [0.0004841, 0.0000674, 0.0000186],
    [0.0000579, 0.0000098, 0.0000042],
];

/// Published norms of `method − ode45` on the default setup, rows s, i, c, a.
pub fn published_table(method: FixedMethod) -> [NormTriple; 4] {
    let raw = match method {
        FixedMethod::Euler => &EULER_TABLE,
        FixedMethod::Rk2 => &RK2_TABLE,
        FixedMethod::Rk4 => &RK4_TABLE,
    };
    raw.map(|[n1, n2, ninf]| NormTriple { n1, n2, ninf })
}

/// Acceptance band on `computed / published`: 10% for Euler and RK2, a factor of 5 for RK4.
pub fn reproduction_band(method: FixedMethod) -> RangeInclusive<f64> {
    match method {
        FixedMethod::Euler | FixedMethod::Rk2 => 0.9..=1.1,
        FixedMethod::Rk4 => 0.2..=5.0,
    }
}

/// Computed entry next to its published value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableEntry {
    pub variable: &'static str,
    pub norm: &'static str,
    pub computed: f64,
    pub published: f64,
    pub relative_deviation: f64,
    pub within_band: bool,
}

pub fn compare_with_published(table: &NormTable) -> Option<Vec<TableEntry>> {
    let fixed = table.method.fixed()?;
    let published = published_table(fixed);
    let band = reproduction_band(fixed);
    let mut out = Vec::with_capacity(12);
    for (j, (got, want)) in table.rows.iter().zip(&published).enumerate() {
        for (norm, (c, p)) in ["1", "2", "inf"].into_iter().zip(got.to_array().into_iter().zip(want.to_array())) {
            out.push(TableEntry {
                variable: VARIABLES[j],
                norm,
                computed: c,
                published: p,
                relative_deviation: (c - p) / p,
                within_band: band.contains(&(c / p)),
            });
        }
    }
    Some(out)
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidSettings("slope needs at least two paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidSettings("slope needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Expected slope window for each fixed-step method.
pub fn order_band(method: FixedMethod) -> RangeInclusive<f64> {
    match method {
        FixedMethod::Euler => 0.9..=1.1,
        FixedMethod::Rk2 => 1.8..=2.2,
        FixedMethod::Rk4 => 3.5..=4.5,
    }
}

/// Reference for order studies: standard controller at `reltol 1e-12`.
///
/// The absolute tolerance sits below RK4's terminal error at the finest
/// default refinement (a few times `1e-13`).
pub fn order_reference() -> AdaptiveSettings {
    AdaptiveSettings::tight(1e-12, 1e-14)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub method: FixedMethod,
    pub refinements: Vec<usize>,
    pub steps: Vec<f64>,
    /// Terminal absolute error per refinement, columns s, i, c, a.
    pub errors: Vec<[f64; 4]>,
    /// Terminal max-norm error per refinement.
    pub max_errors: Vec<f64>,
    /// Slope of `log error` against `log h` per variable.
    pub variable_slopes: [f64; 4],
    /// Slope of the max-norm error.
    pub slope: f64,
}

impl OrderReport {
    pub fn within_band(&self) -> bool {
        order_band(self.method).contains(&self.slope)
    }
}

/// Terminal state of the reference on `[t0, tf]`.
pub fn reference_terminal(setup: &Setup, reference: &AdaptiveSettings) -> Result<Vec<f64>> {
    setup.validate()?;
    let g = setup.grid;
    let sample = TimeGrid::new(g.t0(), g.tf(), 1)?;
    let traj = integrate_dp45(&setup.field(), g.t0(), g.tf(), &setup.initial.to_array(), reference, sample)?;
    Ok(traj.last().to_vec())
}

/// Empirical order of `method` from terminal errors over `refinements` against `exact_terminal`.
pub fn convergence_order_against(
    method: FixedMethod,
    setup: &Setup,
    refinements: &[usize],
    exact_terminal: &[f64],
) -> Result<OrderReport> {
    if refinements.len() < 3 {
        return Err(Error::InvalidSettings(format!(
            "convergence study needs at least 3 refinement levels, got {}",
            refinements.len()
        )));
    }
    setup.validate()?;
    let field = setup.field();
    let x0 = setup.initial.to_array();
    let (t0, tf) = (setup.grid.t0(), setup.grid.tf());

    let mut steps = Vec::with_capacity(refinements.len());
    let mut errors = Vec::with_capacity(refinements.len());
    for &m in refinements {
        let grid = TimeGrid::new(t0, tf, m)?;
        let traj = integrate_fixed(method, &field, grid, &x0)?;
        let err: [f64; 4] = std::array::from_fn(|j| (traj.last()[j] - exact_terminal[j]).abs());
        steps.push(grid.step());
        errors.push(err);
    }
    let max_errors: Vec<f64> = errors.iter().map(|e| e.iter().copied().fold(0.0, f64::max)).collect();

    let log = |v: &[f64]| -> Result<Vec<f64>> {
        v.iter()
            .map(|&e| {
                if e > 0.0 {
                    Ok(e.ln())
                } else {
                    Err(Error::InvalidSettings(
                        "zero error at a refinement level; slope undefined".into(),
                    ))
                }
            })
            .collect()
    };
    let log_h = log(&steps)?;
    let slope = least_squares_slope(&log_h, &log(&max_errors)?)?;
    let mut variable_slopes = [0.0; 4];
    for (j, s) in variable_slopes.iter_mut().enumerate() {
        let col: Vec<f64> = errors.iter().map(|e| e[j]).collect();
        *s = least_squares_slope(&log_h, &log(&col)?)?;
    }
    Ok(OrderReport {
        method,
        refinements: refinements.to_vec(),
        steps,
        errors,
        max_errors,
        variable_slopes,
        slope,
    })
}

/// Empirical order of `method` against a DP45 run at `reference`.
pub fn convergence_order(
    method: FixedMethod,
    setup: &Setup,
    refinements: &[usize],
    reference: &AdaptiveSettings,
) -> Result<OrderReport> {
    let exact = reference_terminal(setup, reference)?;
    convergence_order_against(method, setup, refinements, &exact)
}

/// `max_k |Σ x_k − 1|` over the trajectory.
pub fn simplex_drift(traj: &Trajectory) -> f64 {
    traj.states()
        .map(|x| (x.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Step of the central difference in [`stationarity_residual`].
pub const STATIONARITY_STEP: f64 = 1e-6;

/// Largest `|∂H/∂u|` by central differences over nodes with `0 < u < u_max`;
/// `None` when no node is interior.
pub fn stationarity_residual(result: &SweepResult, p: &ModelParams, bounds: &ControlBounds) -> Option<f64> {
    let e = STATIONARITY_STEP;
    let mut worst: Option<f64> = None;
    for (k, &u) in result.control.iter().enumerate() {
        if !(u > 0.0 && u < bounds.u_max()) {
            continue;
        }
        let x = result.state.state(k);
        let lam = result.adjoint.state(k);
        let du = (hamiltonian_kernel(p, x, lam, u + e) - hamiltonian_kernel(p, x, lam, u - e)) / (2.0 * e);
        worst = Some(worst.map_or(du.abs(), |w: f64| w.max(du.abs())));
    }
    worst
}

/// Largest `H(u) − H(u*)` over `samples` equispaced controls in `[0, u_max]` at every node.
pub fn maximality_gap(result: &SweepResult, p: &ModelParams, bounds: &ControlBounds, samples: usize) -> f64 {
    let samples = samples.max(2);
    let mut worst = f64::NEG_INFINITY;
    for (k, &u_star) in result.control.iter().enumerate() {
        let x = result.state.state(k);
        let lam = result.adjoint.state(k);
        let h_star = hamiltonian_kernel(p, x, lam, u_star);
        for m in 0..samples {
            let u = bounds.u_max() * m as f64 / (samples - 1) as f64;
            worst = worst.max(hamiltonian_kernel(p, x, lam, u) - h_star);
        }
    }
    worst
}
