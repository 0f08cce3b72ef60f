//! Forward-backward sweep for single-control, fixed-horizon problems.
//!
//! Each iteration integrates the state forward with RK4 under the current
//! grid-resident control, integrates the costates backward from their
//! terminal values with RK4, and relaxes the control towards the pointwise
//! control law. Stage controls and stage states are taken at the step's end
//! nodes for the first and last stages and as arithmetic means of the two
//! nodes for the midpoint stages.
//!
//! Iteration stops once every tracked vector (each state component, the
//! control and each costate) satisfies
//! `δ·Σ|new| − Σ|old − new| ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{rk4_kernel, Stage, TimeGrid, Trajectory, Workspace};
use crate::model::{
    adjoint_kernel, controlled_kernel, raw_control, trapezoid, AdjointMode, ControlBounds, Fractions, ModelParams,
};

/// Optimal-control problem with one bounded control and free terminal state.
pub trait ControlProblem {
    fn dim(&self) -> usize;

    fn initial_state(&self) -> &[f64];

    /// Costate values at the final time (transversality).
    fn terminal_adjoint(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn bounds(&self) -> ControlBounds;

    fn state_rhs(&self, t: f64, x: &[f64], u: f64, dx: &mut [f64]);

    fn adjoint_rhs(&self, t: f64, x: &[f64], lam: &[f64], u: f64, dl: &mut [f64]);

    /// Pointwise control law, already clamped to [`ControlProblem::bounds`].
    fn control_law(&self, t: f64, x: &[f64], lam: &[f64]) -> f64;

    /// Integrand of the objective being maximized.
    fn running_cost(&self, t: f64, x: &[f64], u: f64) -> f64;
}

/// The SICA prevention problem: maximize `∫ (s − i − u²) dt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SicaProblem {
    pub params: ModelParams,
    pub bounds: ControlBounds,
    initial: [f64; 4],
    pub adjoint_mode: AdjointMode,
}

impl SicaProblem {
    pub fn new(params: ModelParams, initial: Fractions, bounds: ControlBounds, adjoint_mode: AdjointMode) -> Result<Self> {
        params.validate()?;
        initial.validate()?;
        Ok(SicaProblem {
            params,
            bounds,
            initial: initial.to_array(),
            adjoint_mode,
        })
    }

    pub fn initial(&self) -> Fractions {
        Fractions::from_slice(&self.initial)
    }
}

impl ControlProblem for SicaProblem {
    fn dim(&self) -> usize {
        4
    }

    fn initial_state(&self) -> &[f64] {
        &self.initial
    }

    fn bounds(&self) -> ControlBounds {
        self.bounds
    }

    fn state_rhs(&self, _t: f64, x: &[f64], u: f64, dx: &mut [f64]) {
        controlled_kernel(&self.params, x, u, dx);
    }

    fn adjoint_rhs(&self, _t: f64, x: &[f64], lam: &[f64], u: f64, dl: &mut [f64]) {
        adjoint_kernel(&self.params, x, lam, u, self.adjoint_mode, dl);
    }

    fn control_law(&self, _t: f64, x: &[f64], lam: &[f64]) -> f64 {
        self.bounds.clamp(raw_control(&self.params, x, lam))
    }

    fn running_cost(&self, _t: f64, x: &[f64], u: f64) -> f64 {
        x[0] - x[1] - u * u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub grid: TimeGrid,
    /// Relative-change tolerance `δ`.
    pub delta_error: f64,
    /// Weight of the fresh control-law output in the relaxed update.
    pub relaxation: f64,
    pub max_iterations: usize,
    /// Starting control on the grid; zeros when `None`.
    pub initial_control: Option<Vec<f64>>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            grid: TimeGrid::new(0.0, 20.0, 1000).expect("static grid"),
            delta_error: 1e-3,
            relaxation: 0.5,
            max_iterations: 500,
            initial_control: None,
        }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_error > 0.0 && self.delta_error.is_finite()) {
            return Err(Error::InvalidSettings(format!(
                "delta_error must be > 0, got {}",
                self.delta_error
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidSettings(format!(
                "relaxation weight must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidSettings("max_iterations must be at least 1".into()));
        }
        if let Some(u) = &self.initial_control {
            if u.len() != self.grid.len() {
                return Err(Error::GridMismatch(format!(
                    "initial control has {} nodes, grid has {}",
                    u.len(),
                    self.grid.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// State trajectory of the final forward pass.
    pub state: Trajectory,
    /// Costates of the final backward pass.
    pub adjoint: Trajectory,
    /// Clamped control law evaluated on the final state and costates.
    pub control: Vec<f64>,
    /// Relaxed iterate of the final update, the listing's printed control.
    pub relaxed_control: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of `control`, evaluated on the state it generates.
    pub objective: f64,
    /// Minimum convergence margin of the final iteration.
    pub margin: f64,
    /// Per-vector margins of the final iteration, ordered states, control, costates.
    pub margins: Vec<f64>,
    /// Minimum margin of every iteration.
    pub margin_history: Vec<f64>,
}

fn check_control_len(u: &[f64], grid: &TimeGrid) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "control has {} nodes, grid has {}",
            u.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// RK4 state march under the grid control `u`.
pub fn forward_pass<P: ControlProblem + ?Sized>(prob: &P, u: &[f64], grid: TimeGrid) -> Result<Trajectory> {
    check_control_len(u, &grid)?;
    let n = prob.dim();
    let x0 = prob.initial_state();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let h = grid.step();
    let mut traj = Trajectory::zeros(grid, n);
    traj.state_mut(0).copy_from_slice(x0);
    let mut ws = Workspace::new(n);
    let mut next = vec![0.0; n];
    for k in 0..grid.steps() {
        let (u_start, u_end) = (u[k], u[k + 1]);
        let u_mid = 0.5 * (u_start + u_end);
        rk4_kernel(grid.node(k), traj.state(k), h, &mut next, &mut ws, |stage, t, x, dx| {
            let uc = match stage {
                Stage::Start => u_start,
                Stage::Mid1 | Stage::Mid2 => u_mid,
                Stage::End => u_end,
            };
            prob.state_rhs(t, x, uc, dx);
        });
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

/// RK4 costate march from the terminal node back to node 0 along `(x, u)`.
pub fn backward_pass<P: ControlProblem + ?Sized>(prob: &P, x: &Trajectory, u: &[f64]) -> Result<Trajectory> {
    let grid = *x.grid();
    check_control_len(u, &grid)?;
    let n = prob.dim();
    let terminal = prob.terminal_adjoint();
    if terminal.len() != n || x.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if terminal.len() != n { terminal.len() } else { x.dim() },
        });
    }
    let h = grid.step();
    let mut lam = Trajectory::zeros(grid, n);
    lam.state_mut(grid.steps()).copy_from_slice(&terminal);
    let mut ws = Workspace::new(n);
    let mut prev = vec![0.0; n];
    let mut x_mid = vec![0.0; n];
    for j in (1..=grid.steps()).rev() {
        let (x_end, x_start) = (x.state(j), x.state(j - 1));
        for m in 0..n {
            x_mid[m] = 0.5 * (x_end[m] + x_start[m]);
        }
        let u_mid = 0.5 * (u[j] + u[j - 1]);
        rk4_kernel(grid.node(j), lam.state(j), -h, &mut prev, &mut ws, |stage, t, l, dl| {
            let (xs, us) = match stage {
                Stage::Start => (x_end, u[j]),
                Stage::Mid1 | Stage::Mid2 => (x_mid.as_slice(), u_mid),
                Stage::End => (x_start, u[j - 1]),
            };
            prob.adjoint_rhs(t, xs, l, us, dl);
        });
        if prev.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                t: grid.node(j - 1),
                node: Some(j - 1),
            });
        }
        lam.state_mut(j - 1).copy_from_slice(&prev);
    }
    Ok(lam)
}

/// Relaxed update `weight·law(x, λ) + (1 − weight)·u_old` at every node.
pub fn update_control<P: ControlProblem + ?Sized>(
    prob: &P,
    x: &Trajectory,
    lam: &Trajectory,
    u_old: &[f64],
    weight: f64,
) -> Result<Vec<f64>> {
    if x.grid() != lam.grid() {
        return Err(Error::GridMismatch("state and costate grids differ".into()));
    }
    check_control_len(u_old, x.grid())?;
    let grid = x.grid();
    Ok((0..grid.len())
        .map(|k| {
            let law = prob.control_law(grid.node(k), x.state(k), lam.state(k));
            weight * law + (1.0 - weight) * u_old[k]
        })
        .collect())
}

/// `δ·Σ|new| − Σ|old − new|` for one tracked vector.
pub fn change_margin(old: &[f64], new: &[f64], delta: f64) -> f64 {
    let scale: f64 = new.iter().map(|v| v.abs()).sum();
    let change: f64 = old.iter().zip(new).map(|(o, n)| (o - n).abs()).sum();
    delta * scale - change
}

/// Minimum of [`change_margin`] over all pairs; converged iff the result is `≥ 0`.
pub fn relative_change_test(tracked: &[(&[f64], &[f64])], delta: f64) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for (old, new) in tracked {
        if old.len() != new.len() {
            return Err(Error::DimensionMismatch {
                expected: old.len(),
                got: new.len(),
            });
        }
        margin = margin.min(change_margin(old, new, delta));
    }
    Ok(margin)
}

/// Objective of `u` on its own state trajectory by the trapezoidal rule.
pub fn evaluate_objective<P: ControlProblem + ?Sized>(prob: &P, x: &Trajectory, u: &[f64]) -> Result<f64> {
    check_control_len(u, x.grid())?;
    let grid = x.grid();
    let costs: Vec<f64> = (0..grid.len())
        .map(|k| prob.running_cost(grid.node(k), x.state(k), u[k]))
        .collect();
    trapezoid(grid, &costs)
}

/// Iterates forward pass, backward pass and relaxed control update until the
/// relative-change test passes.
///
/// Before the first iteration the previous state holds the initial state at
/// node 0 and zeros elsewhere and the previous costates are zero, so the
/// first iteration never passes the test.
pub fn solve<P: ControlProblem + ?Sized>(prob: &P, settings: &SweepSettings) -> Result<SweepResult> {
    settings.validate()?;
    let grid = settings.grid;
    let n = prob.dim();
    let bounds = prob.bounds();

    let mut u = settings
        .initial_control
        .clone()
        .unwrap_or_else(|| vec![0.0; grid.len()]);
    let mut old_state = Trajectory::zeros(grid, n);
    old_state.state_mut(0).copy_from_slice(prob.initial_state());
    let mut old_adjoint = Trajectory::zeros(grid, n);
    let mut history = Vec::new();

    for iteration in 1..=settings.max_iterations {
        let wrap = |source: Error| Error::SweepFailure {
            iteration,
            source: Box::new(source),
        };
        let state = forward_pass(prob, &u, grid).map_err(wrap)?;
        let adjoint = backward_pass(prob, &state, &u).map_err(wrap)?;
        let new_u = update_control(prob, &state, &adjoint, &u, settings.relaxation)?;

        let mut margins = Vec::with_capacity(2 * n + 1);
        for j in 0..n {
            margins.push(change_margin(&old_state.component(j), &state.component(j), settings.delta_error));
        }
        margins.push(change_margin(&u, &new_u, settings.delta_error));
        for j in 0..n {
            margins.push(change_margin(
                &old_adjoint.component(j),
                &adjoint.component(j),
                settings.delta_error,
            ));
        }
        let margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        history.push(margin);

        let converged = margin >= 0.0;
        if converged || iteration == settings.max_iterations {
            let control: Vec<f64> = (0..grid.len())
                .map(|k| prob.control_law(grid.node(k), state.state(k), adjoint.state(k)))
                .collect();
            debug_assert!(control.iter().all(|&v| (0.0..=bounds.u_max()).contains(&v)));
            let response = forward_pass(prob, &control, grid)?;
            let objective = evaluate_objective(prob, &response, &control)?;
            let result = SweepResult {
                state,
                adjoint,
                control,
                relaxed_control: new_u,
                iterations: iteration,
                converged,
                objective,
                margin,
                margins,
                margin_history: history,
            };
            if converged {
                return Ok(result);
            }
            return Err(Error::NotConverged {
                iterations: iteration,
                margin,
                result: Box::new(result),
            });
        }
        old_state = state;
        old_adjoint = adjoint;
        u = new_u;
    }
    unreachable!("loop returns on its last iteration")
}
