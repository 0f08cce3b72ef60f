//! Initial-value-problem integrators for vector ODE systems.
//!
//! Fixed-step Euler, Heun (RK2) and classical RK4 march over a uniform
//! [`TimeGrid`]. The adaptive Dormand–Prince 5(4) integrator samples its
//! solution on a requested grid and supports two step-control profiles:
//!
//! * [`StepControl::Standard`]: elementary controller (safety 0.9, growth
//!   clamp `[0.2, 5]`) whose steps are clipped so that every sample node is
//!   hit exactly.
//! * [`StepControl::OctaveCompat`]: the step-size selection, error norm and
//!   quartic Hermite dense output used by GNU Octave's `ode45`, so that
//!   comparisons against values produced by that routine at its default
//!   tolerances can be reproduced.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t0 + k·h`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !tf.is_finite() {
            return Err(Error::InvalidGrid(format!("non-finite bounds [{t0}, {tf}]")));
        }
        if tf <= t0 {
            return Err(Error::InvalidGrid(format!("tf = {tf} must exceed t0 = {t0}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("number of steps M must be at least 1".into()));
        }
        Ok(TimeGrid { t0, tf, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.tf - self.t0) / self.steps as f64
    }

    /// Time of node `k`. The last node is exactly `tf`.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.tf
        } else {
            self.t0 + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }
}

/// Right-hand side `dx/dt = f(t, x)` of an ODE system.
pub trait VectorField {
    fn dim(&self) -> usize;

    /// Writes `f(t, x)` into `dx`.
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (**self).eval(t, x, dx)
    }
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, dx)
    }
}

/// States of an `n`-dimensional system on every node of a grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Trajectory {
            grid,
            dim,
            data: vec![0.0; grid.len() * dim],
        }
    }

    /// Builds a trajectory from per-node rows.
    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} rows for a grid of {} nodes",
                rows.len(),
                grid.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Trajectory { grid, dim, data })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub(crate) fn state_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    /// Values of coordinate `j` over all nodes.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedMethod {
    Euler,
    Rk2,
    Rk4,
}

impl FixedMethod {
    pub const ALL: [FixedMethod; 3] = [FixedMethod::Euler, FixedMethod::Rk2, FixedMethod::Rk4];

    pub fn name(self) -> &'static str {
        match self {
            FixedMethod::Euler => "euler",
            FixedMethod::Rk2 => "rk2",
            FixedMethod::Rk4 => "rk4",
        }
    }

    /// Global order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            FixedMethod::Euler => 1,
            FixedMethod::Rk2 => 2,
            FixedMethod::Rk4 => 4,
        }
    }
}

impl fmt::Display for FixedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(FixedMethod::Euler),
            "rk2" => Ok(FixedMethod::Rk2),
            "rk4" => Ok(FixedMethod::Rk4),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Any integrator selectable by name: a fixed-step method or adaptive DP45.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk2,
    Rk4,
    Dp45,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Euler, Method::Rk2, Method::Rk4, Method::Dp45];

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk2 => "rk2",
            Method::Rk4 => "rk4",
            Method::Dp45 => "dp45",
        }
    }

    pub fn fixed(self) -> Option<FixedMethod> {
        match self {
            Method::Euler => Some(FixedMethod::Euler),
            Method::Rk2 => Some(FixedMethod::Rk2),
            Method::Rk4 => Some(FixedMethod::Rk4),
            Method::Dp45 => None,
        }
    }
}

impl From<FixedMethod> for Method {
    fn from(m: FixedMethod) -> Self {
        match m {
            FixedMethod::Euler => Method::Euler,
            FixedMethod::Rk2 => Method::Rk2,
            FixedMethod::Rk4 => Method::Rk4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp45" => Ok(Method::Dp45),
            other => other.parse::<FixedMethod>().map(Method::from).map_err(|_| {
                Error::Config(format!("unknown method `{other}` (expected euler, rk2, rk4 or dp45)"))
            }),
        }
    }
}

/// Integrates `f` on `grid` with `method`; `adaptive` configures DP45 only.
pub fn integrate<F: VectorField>(
    method: Method,
    f: &F,
    grid: TimeGrid,
    x0: &[f64],
    adaptive: &AdaptiveSettings,
) -> Result<Trajectory> {
    match method.fixed() {
        Some(m) => integrate_fixed(m, f, grid, x0),
        None => integrate_dp45(f, grid.t0(), grid.tf(), x0, adaptive, grid),
    }
}

/// Stage of a classical RK4 step; the sweep uses it to pick stage controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Start,
    Mid1,
    Mid2,
    End,
}

/// Scratch buffers for the fixed-step kernels.
pub(crate) struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(dim: usize) -> Self {
        Workspace {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

/// Classical RK4 step of signed length `h` from `(t, x)` into `out`.
///
/// `eval(stage, t, x, dx)` supplies the field, letting callers vary
/// exogenous inputs between stages. Stage times are `t`, `t + h/2`, `t + h/2`
/// and `t + h`; the update is `x + h/6·(K1 + 2(K2 + K3) + K4)`.
pub(crate) fn rk4_kernel<E>(t: f64, x: &[f64], h: f64, out: &mut [f64], ws: &mut Workspace, mut eval: E)
where
    E: FnMut(Stage, f64, &[f64], &mut [f64]),
{
    let h2 = h / 2.0;
    let h6 = h / 6.0;
    eval(Stage::Start, t, x, &mut ws.k1);
    for j in 0..x.len() {
        ws.tmp[j] = x[j] + h2 * ws.k1[j];
    }
    eval(Stage::Mid1, t + h2, &ws.tmp, &mut ws.k2);
    for j in 0..x.len() {
        ws.tmp[j] = x[j] + h2 * ws.k2[j];
    }
    eval(Stage::Mid2, t + h2, &ws.tmp, &mut ws.k3);
    for j in 0..x.len() {
        ws.tmp[j] = x[j] + h * ws.k3[j];
    }
    eval(Stage::End, t + h, &ws.tmp, &mut ws.k4);
    for j in 0..x.len() {
        out[j] = x[j] + h6 * (ws.k1[j] + 2.0 * (ws.k2[j] + ws.k3[j]) + ws.k4[j]);
    }
}

fn fixed_kernel<F: VectorField>(
    method: FixedMethod,
    f: &F,
    t: f64,
    x: &[f64],
    h: f64,
    out: &mut [f64],
    ws: &mut Workspace,
) {
    match method {
        FixedMethod::Euler => {
            f.eval(t, x, &mut ws.k1);
            for j in 0..x.len() {
                out[j] = x[j] + h * ws.k1[j];
            }
        }
        FixedMethod::Rk2 => {
            let h2 = h / 2.0;
            f.eval(t, x, &mut ws.k1);
            for j in 0..x.len() {
                ws.tmp[j] = x[j] + h * ws.k1[j];
            }
            f.eval(t + h, &ws.tmp, &mut ws.k2);
            for j in 0..x.len() {
                out[j] = x[j] + h2 * (ws.k1[j] + ws.k2[j]);
            }
        }
        FixedMethod::Rk4 => rk4_kernel(t, x, h, out, ws, |_, t, x, dx| f.eval(t, x, dx)),
    }
}

fn check_inputs<F: VectorField>(f: &F, x: &[f64], h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidStep(h));
    }
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("initial vector has non-finite entries".into()));
    }
    Ok(())
}

fn single_step<F: VectorField>(method: FixedMethod, f: &F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    check_inputs(f, x, h)?;
    let mut ws = Workspace::new(x.len());
    let mut out = vec![0.0; x.len()];
    fixed_kernel(method, f, t, x, h, &mut out, &mut ws);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::IntegrationFailure { t: t + h, node: None })
    }
}

/// One explicit Euler step, `x + h·f(t, x)`.
pub fn step_euler<F: VectorField>(f: &F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    single_step(FixedMethod::Euler, f, t, x, h)
}

/// One Heun step: `K1 = f(t, x)`, `K2 = f(t + h, x + h·K1)`, `x + h/2·(K1 + K2)`.
pub fn step_rk2<F: VectorField>(f: &F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    single_step(FixedMethod::Rk2, f, t, x, h)
}

/// One classical fourth-order Runge–Kutta step.
pub fn step_rk4<F: VectorField>(f: &F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    single_step(FixedMethod::Rk4, f, t, x, h)
}

/// Marches `x0` over every node of `grid` with the chosen fixed-step method.
pub fn integrate_fixed<F: VectorField>(method: FixedMethod, f: &F, grid: TimeGrid, x0: &[f64]) -> Result<Trajectory> {
    check_inputs(f, x0, grid.step())?;
    let dim = x0.len();
    let h = grid.step();
    let mut traj = Trajectory::zeros(grid, dim);
    traj.state_mut(0).copy_from_slice(x0);
    let mut ws = Workspace::new(dim);
    let mut next = vec![0.0; dim];
    for k in 0..grid.steps() {
        fixed_kernel(method, f, grid.node(k), traj.state(k), h, &mut next, &mut ws);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                t: grid.node(k + 1),
                node: Some(k + 1),
            });
        }
        traj.state_mut(k + 1).copy_from_slice(&next);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepControl {
    /// Safety factor 0.9, growth clamp `[0.2, 5]`, steps clipped onto sample nodes.
    Standard,
    /// GNU Octave `ode45` controller with quartic Hermite dense output.
    OctaveCompat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveSettings {
    pub reltol: f64,
    pub abstol: f64,
    /// First trial step. `None` selects the profile's own rule.
    pub initial_step: Option<f64>,
    /// Cap on attempted (accepted plus rejected) steps.
    pub max_steps: usize,
    pub control: StepControl,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        AdaptiveSettings {
            reltol: 1e-6,
            abstol: 1e-9,
            initial_step: None,
            max_steps: 100_000,
            control: StepControl::Standard,
        }
    }
}

impl AdaptiveSettings {
    /// Tight standard-controller settings.
    pub fn tight(reltol: f64, abstol: f64) -> Self {
        AdaptiveSettings {
            reltol,
            abstol,
            max_steps: 10_000_000,
            ..Default::default()
        }
    }

    /// Octave `ode45` defaults: `RelTol = 1e-3`, `AbsTol = 1e-6`.
    pub fn octave_default() -> Self {
        AdaptiveSettings {
            reltol: 1e-3,
            abstol: 1e-6,
            initial_step: None,
            max_steps: 100_000,
            control: StepControl::OctaveCompat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reltol > 0.0 && self.reltol.is_finite()) {
            return Err(Error::InvalidSettings(format!("reltol must be > 0, got {}", self.reltol)));
        }
        if !(self.abstol > 0.0 && self.abstol.is_finite()) {
            return Err(Error::InvalidSettings(format!("abstol must be > 0, got {}", self.abstol)));
        }
        if let Some(h0) = self.initial_step {
            if !(h0 > 0.0 && h0.is_finite()) {
                return Err(Error::InvalidSettings(format!("initial step must be > 0, got {h0}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidSettings("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
// Fourth-order midpoint weights used by the Hermite dense output (Shampine 1986).
const DP_MID: [f64; 7] = [
    6025192743.0 / 30085553152.0,
    0.0,
    51252292925.0 / 65400821598.0,
    -2691868925.0 / 45128329728.0,
    187940372067.0 / 1594534317056.0,
    -1776094331.0 / 19743644256.0,
    11237099.0 / 235043384.0,
];

/// One Dormand–Prince attempt. `k[0]` must already hold `f(t, x)`; on return
/// `k[1..7]` are filled, `x5` is the fifth-order and `x4` the embedded
/// fourth-order solution.
struct DpStepper {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    x5: Vec<f64>,
    x4: Vec<f64>,
}

impl DpStepper {
    fn new(dim: usize) -> Self {
        DpStepper {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            x5: vec![0.0; dim],
            x4: vec![0.0; dim],
        }
    }

    fn attempt<F: VectorField>(&mut self, f: &F, t: f64, x: &[f64], h: f64) {
        let n = x.len();
        for s in 1..7 {
            for j in 0..n {
                let mut acc = 0.0;
                for (r, a) in DP_A[s][..s].iter().enumerate() {
                    acc += a * self.k[r][j];
                }
                self.tmp[j] = x[j] + h * acc;
            }
            f.eval(t + DP_C[s] * h, &self.tmp, &mut self.k[s]);
        }
        for j in 0..n {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += DP_B5[s] * self.k[s][j];
                s4 += DP_B4[s] * self.k[s][j];
            }
            self.x5[j] = x[j] + h * s5;
            self.x4[j] = x[j] + h * s4;
        }
    }

    /// Quartic Hermite interpolant over an accepted step `[t, t + h]`.
    fn hermite(&self, x_old: &[f64], h: f64, theta: f64, out: &mut [f64]) {
        let s = theta;
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let b0 = 1.0 - 11.0 * s2 + 18.0 * s3 - 8.0 * s4;
        let b1 = s - 4.0 * s2 + 5.0 * s3 - 2.0 * s4;
        let b2 = 16.0 * s2 - 32.0 * s3 + 16.0 * s4;
        let b3 = -5.0 * s2 + 14.0 * s3 - 8.0 * s4;
        let b4 = s2 - 3.0 * s3 + 2.0 * s4;
        for j in 0..x_old.len() {
            let mut mid = 0.0;
            for (s, w) in DP_MID.iter().enumerate() {
                mid += w * self.k[s][j];
            }
            let u_half = x_old[j] + 0.5 * h * mid;
            out[j] = b0 * x_old[j]
                + b1 * (h * self.k[0][j])
                + b2 * u_half
                + b3 * self.x5[j]
                + b4 * (h * self.k[6][j]);
        }
    }
}

/// Adaptive Dormand–Prince 5(4) integration from `(t0, x0)`, sampled on `sample`.
///
/// Per-component error control keeps the local error estimate within
/// `abstol + reltol·|x|` (standard profile) or Octave's
/// `max(abstol, reltol·|x|)` scale (compat profile). With
/// [`StepControl::Standard`] steps are clipped to land on each sample node and
/// integration stops at the last node; with [`StepControl::OctaveCompat`] the
/// integrator runs to `tf` and interpolates sample values from dense output.
pub fn integrate_dp45<F: VectorField>(
    f: &F,
    t0: f64,
    tf: f64,
    x0: &[f64],
    settings: &AdaptiveSettings,
    sample: TimeGrid,
) -> Result<Trajectory> {
    settings.validate()?;
    if !(tf > t0) {
        return Err(Error::InvalidGrid(format!("tf = {tf} must exceed t0 = {t0}")));
    }
    if sample.t0() < t0 || sample.tf() > tf {
        return Err(Error::InvalidGrid(format!(
            "sample grid [{}, {}] outside integration span [{t0}, {tf}]",
            sample.t0(),
            sample.tf()
        )));
    }
    check_inputs(f, x0, 1.0)?;
    match settings.control {
        StepControl::Standard => dp45_standard(f, t0, x0, settings, sample),
        StepControl::OctaveCompat => dp45_octave(f, t0, tf, x0, settings, sample),
    }
}

fn dp45_standard<F: VectorField>(
    f: &F,
    t0: f64,
    x0: &[f64],
    settings: &AdaptiveSettings,
    sample: TimeGrid,
) -> Result<Trajectory> {
    const SAFETY: f64 = 0.9;
    const MIN_SCALE: f64 = 0.2;
    const MAX_SCALE: f64 = 5.0;

    let n = x0.len();
    let mut traj = Trajectory::zeros(sample, n);
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut h = settings.initial_step.unwrap_or((sample.tf() - t0) / 100.0);
    let mut dp = DpStepper::new(n);
    f.eval(t, &x, &mut dp.k[0]);

    let mut idx = 0;
    while idx < sample.len() && sample.node(idx) <= t {
        traj.state_mut(idx).copy_from_slice(&x);
        idx += 1;
    }

    let mut attempts = 0;
    while idx < sample.len() {
        if attempts >= settings.max_steps {
            return Err(Error::StepLimit {
                max_steps: settings.max_steps,
                t,
            });
        }
        attempts += 1;

        let target = sample.node(idx);
        let remaining = target - t;
        let lands = h >= remaining;
        let h_try = if lands { remaining } else { h };
        dp.attempt(f, t, &x, h_try);

        let mut err: f64 = 0.0;
        for j in 0..n {
            let scale = settings.abstol + settings.reltol * x[j].abs().max(dp.x5[j].abs());
            err = err.max((dp.x5[j] - dp.x4[j]).abs() / scale);
        }
        if err.is_nan() {
            return Err(Error::IntegrationFailure { t: t + h_try, node: None });
        }

        if err <= 1.0 {
            t = if lands { target } else { t + h_try };
            x.copy_from_slice(&dp.x5);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure { t, node: None });
            }
            // FSAL: the last stage is f at the accepted point.
            let last = std::mem::take(&mut dp.k[6]);
            dp.k[6] = std::mem::replace(&mut dp.k[0], last);
            if lands {
                traj.state_mut(idx).copy_from_slice(&x);
                idx += 1;
            }
            let scale = if err == 0.0 {
                MAX_SCALE
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
            };
            h = h_try * scale;
        } else {
            h = h_try * (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, 1.0);
        }
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
    }
    Ok(traj)
}

fn octave_norm(x: &[f64], x_old: &[f64], y: Option<&[f64]>, abstol: f64, reltol: f64) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..x.len() {
        let sc = abstol.max(reltol * x[j].abs().max(x_old[j].abs()));
        let d = x[j] - y.map_or(0.0, |y| y[j]);
        m = m.max(d.abs() / sc);
    }
    m
}

/// Hairer–Nørsett–Wanner starting step as used by Octave.
fn octave_starting_step<F: VectorField>(f: &F, t0: f64, x0: &[f64], order: f64, abstol: f64, reltol: f64) -> f64 {
    let n = x0.len();
    let d0 = octave_norm(x0, x0, None, abstol, reltol);
    let mut y = vec![0.0; n];
    f.eval(t0, x0, &mut y);
    let d1 = octave_norm(&y, &y, None, abstol, reltol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * (d0 / d1) };
    let x1: Vec<f64> = x0.iter().zip(&y).map(|(x, y)| x + h0 * y).collect();
    let mut yh = vec![0.0; n];
    f.eval(t0 + h0, &x1, &mut yh);
    let dy: Vec<f64> = yh.iter().zip(&y).map(|(a, b)| a - b).collect();
    let d2 = octave_norm(&dy, &dy, None, abstol, reltol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (1e-2 / d1.max(d2)).powf(1.0 / (order + 1.0))
    };
    (100.0 * h0).min(h1)
}

fn dp45_octave<F: VectorField>(
    f: &F,
    t0: f64,
    tf: f64,
    x0: &[f64],
    settings: &AdaptiveSettings,
    sample: TimeGrid,
) -> Result<Trajectory> {
    // ode45 controls a fifth-order solution (local extrapolation).
    const ORDER: f64 = 5.0;
    const FAC_MIN: f64 = 0.8;
    const FAC_MAX: f64 = 1.5;
    let fac = 0.38_f64.powf(1.0 / (ORDER + 1.0));

    let n = x0.len();
    let (abstol, reltol) = (settings.abstol, settings.reltol);
    let max_step = 0.1 * (tf - t0);
    let mut dt = settings
        .initial_step
        .unwrap_or_else(|| octave_starting_step(f, t0, x0, ORDER, abstol, reltol))
        .min(max_step);

    let mut traj = Trajectory::zeros(sample, n);
    let mut idx = 0;
    while idx < sample.len() && sample.node(idx) <= t0 {
        traj.state_mut(idx).copy_from_slice(x0);
        idx += 1;
    }

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut dp = DpStepper::new(n);
    f.eval(t, &x, &mut dp.k[0]);
    let mut interp = vec![0.0; n];
    let mut attempts = 0;

    while t < tf {
        if attempts >= settings.max_steps {
            return Err(Error::StepLimit {
                max_steps: settings.max_steps,
                t,
            });
        }
        attempts += 1;

        let t_new = if dt >= tf - t { tf } else { t + dt };
        dp.attempt(f, t, &x, dt);
        let mut err = octave_norm(&dp.x5, &x, Some(&dp.x4), abstol, reltol);
        if err.is_nan() {
            return Err(Error::IntegrationFailure { t: t_new, node: None });
        }

        if err <= 1.0 {
            if dp.x5.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure { t: t_new, node: None });
            }
            while idx < sample.len() && sample.node(idx) <= t_new {
                let theta = (sample.node(idx) - t) / dt;
                dp.hermite(&x, dt, theta, &mut interp);
                traj.state_mut(idx).copy_from_slice(&interp);
                idx += 1;
            }
            t = t_new;
            x.copy_from_slice(&dp.x5);
            let last = std::mem::take(&mut dp.k[6]);
            dp.k[6] = std::mem::replace(&mut dp.k[0], last);
        }

        err += f64::EPSILON;
        dt *= FAC_MAX.min(FAC_MIN.max(fac * (1.0 / err).powf(1.0 / (ORDER + 1.0))));
        dt = dt.min(max_step);
        if t < tf && dt <= f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        dt = dt.min(tf - t);
    }
    if idx < sample.len() {
        return Err(Error::StepUnderflow { t });
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn growth() -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0])
    }

    fn zero_field(dim: usize) -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField::new(dim, |_t, _x: &[f64], dx: &mut [f64]| dx.fill(0.0))
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(TimeGrid::new(0.0, 20.0, 0), Err(Error::InvalidGrid(_))));
        assert!(matches!(TimeGrid::new(1.0, 1.0, 10), Err(Error::InvalidGrid(_))));
        assert!(matches!(TimeGrid::new(2.0, 1.0, 10), Err(Error::InvalidGrid(_))));
        let g = TimeGrid::new(0.0, 20.0, 100).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(100), 20.0);
        assert!((g.node(50) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn euler_examples() {
        let x = step_euler(&growth(), 0.0, &[1.0], 0.1).unwrap();
        assert_eq!(x, vec![1.1]);
        let x0 = [0.6, 0.2, 0.1, 0.1];
        assert_eq!(step_euler(&zero_field(4), 3.0, &x0, 0.2).unwrap(), x0.to_vec());
    }

    #[test]
    fn rk2_examples() {
        let one = FnField::new(1, |_t, _x: &[f64], dx: &mut [f64]| dx[0] = 1.0);
        assert_eq!(step_rk2(&one, 0.0, &[0.0], 0.5).unwrap(), vec![0.5]);
        let x = step_rk2(&growth(), 0.0, &[1.0], 0.1).unwrap();
        assert!((x[0] - 1.105).abs() < 1e-15);
        let decay = FnField::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
        assert_eq!(step_rk2(&decay, 0.0, &[0.0], 0.7).unwrap(), vec![0.0]);
    }

    #[test]
    fn rk4_examples() {
        let x = step_rk4(&growth(), 0.0, &[1.0], 0.1).unwrap();
        assert!((x[0] - 0.1_f64.exp()).abs() < 1e-7);
        assert!((x[0] - 1.105_170_83).abs() < 1e-8);
        assert_eq!(step_rk4(&zero_field(2), 0.0, &[3.0, -1.0], 0.3).unwrap(), vec![3.0, -1.0]);
        let ramp = FnField::new(1, |t, _x: &[f64], dx: &mut [f64]| dx[0] = t);
        assert_eq!(step_rk4(&ramp, 0.0, &[0.0], 1.0).unwrap(), vec![0.5]);
    }

    #[test]
    fn step_preconditions() {
        assert!(matches!(step_euler(&growth(), 0.0, &[1.0], 0.0), Err(Error::InvalidStep(_))));
        assert!(matches!(step_rk4(&growth(), 0.0, &[1.0], -0.1), Err(Error::InvalidStep(_))));
        assert!(matches!(
            step_rk2(&growth(), 0.0, &[1.0, 2.0], 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_reports_node() {
        let blow = FnField::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0]);
        let grid = TimeGrid::new(0.0, 10.0, 10).unwrap();
        let err = integrate_fixed(FixedMethod::Euler, &blow, grid, &[10.0]).unwrap_err();
        match err {
            Error::IntegrationFailure { node: Some(k), .. } => assert!((1..=10).contains(&k)),
            other => panic!("unexpected {other:?}"),
        }
        let err = step_euler(&blow, 0.0, &[1e200], 1.0).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { node: None, .. }));
    }

    #[test]
    fn euler_closed_form() {
        for n in [1usize, 7, 100] {
            let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
            let traj = integrate_fixed(FixedMethod::Euler, &growth(), grid, &[1.0]).unwrap();
            let exact = (1.0 + 1.0 / n as f64).powi(n as i32);
            assert!((traj.last()[0] - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn single_interval_is_single_step() {
        let grid = TimeGrid::new(0.0, 0.5, 1).unwrap();
        for m in FixedMethod::ALL {
            let traj = integrate_fixed(m, &growth(), grid, &[1.0]).unwrap();
            let step = single_step(m, &growth(), 0.0, &[1.0], 0.5).unwrap();
            assert_eq!(traj.last(), step.as_slice());
            assert_eq!(traj.state(0), &[1.0]);
        }
    }

    #[test]
    fn rk4_exact_for_cubic_time_fields() {
        // x' = (1 + 2t - 3t^2 + 0.5t^3, -t^3)
        let f = FnField::new(2, |t, _x: &[f64], dx: &mut [f64]| {
            dx[0] = 1.0 + 2.0 * t - 3.0 * t * t + 0.5 * t * t * t;
            dx[1] = -t * t * t;
        });
        let exact = |t: f64| [t + t * t - t * t * t + 0.125 * t.powi(4), -0.25 * t.powi(4)];
        let grid = TimeGrid::new(0.0, 2.0, 7).unwrap();
        let traj = integrate_fixed(FixedMethod::Rk4, &f, grid, &[0.0, 0.0]).unwrap();
        for k in 0..grid.len() {
            let e = exact(grid.node(k));
            for j in 0..2 {
                assert!((traj.state(k)[j] - e[j]).abs() < 1e-12, "node {k} comp {j}");
            }
        }
    }

    #[test]
    fn dp45_exponential() {
        let settings = AdaptiveSettings::tight(1e-9, 1e-12);
        let sample = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let traj = integrate_dp45(&growth(), 0.0, 1.0, &[1.0], &settings, sample).unwrap();
        assert!((traj.last()[0] - std::f64::consts::E).abs() < 1e-8);
        for k in 0..sample.len() {
            assert!((traj.state(k)[0] - sample.node(k).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn dp45_octave_profile_exponential() {
        let settings = AdaptiveSettings::octave_default();
        let sample = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let traj = integrate_dp45(&growth(), 0.0, 1.0, &[1.0], &settings, sample).unwrap();
        for k in 0..sample.len() {
            let exact = sample.node(k).exp();
            assert!((traj.state(k)[0] - exact).abs() < 1e-3 * exact);
        }
    }

    #[test]
    fn dp45_zero_field_constant() {
        let sample = TimeGrid::new(0.0, 5.0, 20).unwrap();
        for settings in [
            AdaptiveSettings::default(),
            AdaptiveSettings::tight(1e-3, 1e-3),
            AdaptiveSettings::octave_default(),
        ] {
            let traj = integrate_dp45(&zero_field(3), 0.0, 5.0, &[1.0, 2.0, 3.0], &settings, sample).unwrap();
            for s in traj.states() {
                for (v, want) in s.iter().zip([1.0, 2.0, 3.0]) {
                    assert!((v - want).abs() <= 8.0 * f64::EPSILON * want, "{v} vs {want}");
                }
            }
        }
    }

    #[test]
    fn dp45_step_limit() {
        let settings = AdaptiveSettings {
            max_steps: 3,
            ..AdaptiveSettings::tight(1e-12, 1e-14)
        };
        let sample = TimeGrid::new(0.0, 10.0, 2).unwrap();
        let err = integrate_dp45(&growth(), 0.0, 10.0, &[1.0], &settings, sample).unwrap_err();
        assert!(matches!(err, Error::StepLimit { max_steps: 3, .. }));
    }

    #[test]
    fn dp45_rejects_bad_inputs() {
        let sample = TimeGrid::new(0.0, 2.0, 2).unwrap();
        let bad = AdaptiveSettings {
            reltol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate_dp45(&growth(), 0.0, 2.0, &[1.0], &bad, sample),
            Err(Error::InvalidSettings(_))
        ));
        assert!(matches!(
            integrate_dp45(&growth(), 0.0, 1.0, &[1.0], &AdaptiveSettings::default(), sample),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn sample_grid_inside_span() {
        // Sample grid starting after t0: node 0 is reached by integration.
        let sample = TimeGrid::new(0.5, 1.0, 5).unwrap();
        for settings in [AdaptiveSettings::tight(1e-10, 1e-12), AdaptiveSettings::octave_default()] {
            let traj = integrate_dp45(&growth(), 0.0, 1.0, &[1.0], &settings, sample).unwrap();
            let tol = if settings.control == StepControl::Standard { 1e-9 } else { 1e-3 };
            for k in 0..sample.len() {
                assert!((traj.state(k)[0] - sample.node(k).exp()).abs() < tol);
            }
        }
    }

    #[test]
    fn deterministic() {
        let grid = TimeGrid::new(0.0, 3.0, 33).unwrap();
        let f = FnField::new(2, |t, x: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0] + 0.1 * t.sin();
        });
        for m in FixedMethod::ALL {
            let a = integrate_fixed(m, &f, grid, &[1.0, 0.0]).unwrap();
            let b = integrate_fixed(m, &f, grid, &[1.0, 0.0]).unwrap();
            assert_eq!(a, b);
        }
        let s = AdaptiveSettings::default();
        let a = integrate_dp45(&f, 0.0, 3.0, &[1.0, 0.0], &s, grid).unwrap();
        let b = integrate_dp45(&f, 0.0, 3.0, &[1.0, 0.0], &s, grid).unwrap();
        assert_eq!(a, b);
    }
}
