//! SICA HIV/AIDS dynamics and the pieces of its prevention-control problem.
//!
//! Compartments are susceptible (`s`), HIV-infected without AIDS symptoms
//! (`i`), chronic under antiretroviral treatment (`c`) and AIDS-symptomatic
//! (`a`). The absolute model tracks head counts with a varying total `N`;
//! the normalized model tracks the fractions `x/N`, which stay on the unit
//! simplex. A prevention control `u ∈ [0, u_max]` scales down transmission.
//!
//! The objective to maximize is `∫ (s − i − u²) dt`; its Hamiltonian is
//! concave in `u`, giving the clamped closed-form control law
//! [`optimal_control_law`]. Costates follow `λ' = −∂H/∂x`
//! ([`AdjointMode::Derived`]). [`AdjointMode::Verbatim`] instead reproduces
//! the widely circulated printed form, which carries `+d·s` where the
//! derivative of the Hamiltonian gives `−d·s` in the `λ4` equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{TimeGrid, Trajectory, VectorField};

/// Epidemiological rates (per year unless dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    /// Natural death rate.
    pub mu: f64,
    /// Recruitment rate.
    pub b: f64,
    /// HIV transmission rate.
    pub beta: f64,
    /// Relative infectiousness of treated chronic individuals (≤ 1).
    pub eta_c: f64,
    /// Relative infectiousness of AIDS-symptomatic individuals (≥ 1).
    pub eta_a: f64,
    /// Treatment rate moving `I` to `C`.
    pub phi: f64,
    /// Progression rate from `I` to `A`.
    pub rho: f64,
    /// AIDS treatment rate moving `A` back to `I`.
    pub alpha: f64,
    /// Treatment default rate moving `C` back to `I`.
    pub omega: f64,
    /// AIDS-induced death rate.
    pub d: f64,
}

impl Default for ModelParams {
    /// Baseline rates: `μ = 1/69.54`, `b = 2.1μ`, `β = 1.6`, `η_C = 0.015`,
    /// `η_A = 1.3`, `φ = 1`, `ρ = 0.1`, `α = 0.33`, `ω = 0.09`, `d = 1`.
    fn default() -> Self {
        let mu = 1.0 / 69.54;
        ModelParams {
            mu,
            b: 2.1 * mu,
            beta: 1.6,
            eta_c: 0.015,
            eta_a: 1.3,
            phi: 1.0,
            rho: 0.1,
            alpha: 0.33,
            omega: 0.09,
            d: 1.0,
        }
    }
}

/// Configuration form of [`ModelParams`]: every rate optional, `b` defaulting to `2.1·mu`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    mu: Option<f64>,
    b: Option<f64>,
    beta: Option<f64>,
    eta_c: Option<f64>,
    eta_a: Option<f64>,
    phi: Option<f64>,
    rho: Option<f64>,
    alpha: Option<f64>,
    omega: Option<f64>,
    d: Option<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let base = ModelParams::default();
        let mu = raw.mu.unwrap_or(base.mu);
        let p = ModelParams {
            mu,
            b: raw.b.unwrap_or(2.1 * mu),
            beta: raw.beta.unwrap_or(base.beta),
            eta_c: raw.eta_c.unwrap_or(base.eta_c),
            eta_a: raw.eta_a.unwrap_or(base.eta_a),
            phi: raw.phi.unwrap_or(base.phi),
            rho: raw.rho.unwrap_or(base.rho),
            alpha: raw.alpha.unwrap_or(base.alpha),
            omega: raw.omega.unwrap_or(base.omega),
            d: raw.d.unwrap_or(base.d),
        };
        p.validate()?;
        Ok(p)
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mu", self.mu),
            ("b", self.b),
            ("beta", self.beta),
            ("eta_c", self.eta_c),
            ("eta_a", self.eta_a),
            ("phi", self.phi),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("omega", self.omega),
            ("d", self.d),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.eta_c > 1.0 {
            return Err(Error::InvalidParams(format!("eta_c must be <= 1, got {}", self.eta_c)));
        }
        if self.eta_a < 1.0 {
            return Err(Error::InvalidParams(format!("eta_a must be >= 1, got {}", self.eta_a)));
        }
        Ok(())
    }

    /// Infectious prevalence weighted by relative infectiousness.
    #[inline]
    fn weighted_infectives(&self, i: f64, c: f64, a: f64) -> f64 {
        i + self.eta_c * c + self.eta_a * a
    }
}

/// Population fractions on the unit simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fractions {
    pub s: f64,
    pub i: f64,
    pub c: f64,
    pub a: f64,
}

impl Default for Fractions {
    /// `(0.6, 0.2, 0.1, 0.1)`.
    fn default() -> Self {
        Fractions::new(0.6, 0.2, 0.1, 0.1)
    }
}

impl Fractions {
    /// Tolerance on `|s + i + c + a − 1|` accepted by [`Fractions::validate`].
    pub const SIMPLEX_TOL: f64 = 1e-9;

    pub const fn new(s: f64, i: f64, c: f64, a: f64) -> Self {
        Fractions { s, i, c, a }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.i, self.c, self.a]
    }

    /// Reads the first four entries of `x`.
    pub fn from_slice(x: &[f64]) -> Self {
        Fractions::new(x[0], x[1], x[2], x[3])
    }

    pub fn sum(&self) -> f64 {
        self.s + self.i + self.c + self.a
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s", self.s), ("i", self.i), ("c", self.c), ("a", self.a)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidState(format!("fraction {name} = {v} outside [0, 1]")));
            }
        }
        if (self.sum() - 1.0).abs() > Self::SIMPLEX_TOL {
            return Err(Error::InvalidState(format!("fractions sum to {}, expected 1", self.sum())));
        }
        Ok(())
    }
}

/// Compartment head counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteState {
    pub s: f64,
    pub i: f64,
    pub c: f64,
    pub a: f64,
}

impl AbsoluteState {
    pub const fn new(s: f64, i: f64, c: f64, a: f64) -> Self {
        AbsoluteState { s, i, c, a }
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.c + self.a
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.i, self.c, self.a]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        AbsoluteState::new(x[0], x[1], x[2], x[3])
    }

    pub fn fractions(&self) -> Result<Fractions> {
        let n = self.total();
        if !(n > 0.0) {
            return Err(Error::DegeneratePopulation(n));
        }
        Ok(Fractions::new(self.s / n, self.i / n, self.c / n, self.a / n))
    }
}

/// Costates `(λ1, λ2, λ3, λ4)` paired with `(s, i, c, a)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjointState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl AdjointState {
    pub const fn new(lambda1: f64, lambda2: f64, lambda3: f64, lambda4: f64) -> Self {
        AdjointState {
            lambda1,
            lambda2,
            lambda3,
            lambda4,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        AdjointState::new(x[0], x[1], x[2], x[3])
    }
}

/// Admissible prevention effort `0 ≤ u ≤ u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    u_max: f64,
}

impl ControlBounds {
    /// `u_max` must lie in `[0, 1)`; zero gives the degenerate no-control problem.
    pub fn new(u_max: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&u_max) {
            return Err(Error::InvalidSettings(format!("u_max must lie in [0, 1), got {u_max}")));
        }
        Ok(ControlBounds { u_max })
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.max(0.0).min(self.u_max)
    }
}

/// Which costate equations to integrate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjointMode {
    /// `λ' = −∂H/∂x` of the Hamiltonian.
    #[default]
    Derived,
    /// Printed costate equations with `+d·s` in the `λ4` row.
    #[serde(alias = "paper-verbatim")]
    Verbatim,
}

impl AdjointMode {
    pub fn name(self) -> &'static str {
        match self {
            AdjointMode::Derived => "derived",
            AdjointMode::Verbatim => "verbatim",
        }
    }
}

impl std::str::FromStr for AdjointMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(AdjointMode::Derived),
            "verbatim" | "paper-verbatim" => Ok(AdjointMode::Verbatim),
            other => Err(Error::Config(format!("unknown adjoint mode `{other}`"))),
        }
    }
}

// Array kernels shared by the public functions, the vector fields and the sweep.

#[inline]
pub(crate) fn controlled_kernel(p: &ModelParams, x: &[f64], u: f64, dx: &mut [f64]) {
    let (s, i, c, a) = (x[0], x[1], x[2], x[3]);
    let infection = (1.0 - u) * p.beta * p.weighted_infectives(i, c, a) * s;
    let death = p.d * a;
    dx[0] = p.b * (1.0 - s) - infection + death * s;
    dx[1] = infection - (p.rho + p.phi + p.b - death) * i + p.alpha * a + p.omega * c;
    dx[2] = p.phi * i - (p.omega + p.b - death) * c;
    dx[3] = p.rho * i - (p.alpha + p.b + p.d - death) * a;
}

#[inline]
pub(crate) fn adjoint_kernel(p: &ModelParams, x: &[f64], lam: &[f64], u: f64, mode: AdjointMode, dl: &mut [f64]) {
    let (s, i, c, a) = (x[0], x[1], x[2], x[3]);
    let (l1, l2, l3, l4) = (lam[0], lam[1], lam[2], lam[3]);
    let keep = 1.0 - u;
    let death = p.d * a;

    let force = keep * p.beta * p.weighted_infectives(i, c, a);
    dl[0] = -1.0 + l1 * (p.b + force - death) - l2 * force;

    let per_i = keep * p.beta * s;
    dl[1] = 1.0 + l1 * per_i - l2 * (per_i - (p.rho + p.phi + p.b) + death) - l3 * p.phi - l4 * p.rho;

    let per_c = keep * p.beta * p.eta_c * s;
    dl[2] = l1 * per_c - l2 * (per_c + p.omega) + l3 * (p.omega + p.b - death);

    let per_a = keep * p.beta * p.eta_a * s;
    let death_s = match mode {
        AdjointMode::Derived => -p.d * s,
        AdjointMode::Verbatim => p.d * s,
    };
    dl[3] = l1 * (per_a + death_s) - l2 * (per_a + p.alpha + p.d * i) - l3 * p.d * c
        + l4 * (p.alpha + p.b + p.d - 2.0 * death);
}

/// Unclamped maximizer of the Hamiltonian in `u`.
#[inline]
pub(crate) fn raw_control(p: &ModelParams, x: &[f64], lam: &[f64]) -> f64 {
    0.5 * p.beta * p.weighted_infectives(x[1], x[2], x[3]) * x[0] * (lam[0] - lam[1])
}

#[inline]
pub(crate) fn hamiltonian_kernel(p: &ModelParams, x: &[f64], lam: &[f64], u: f64) -> f64 {
    let mut dx = [0.0; 4];
    controlled_kernel(p, x, u, &mut dx);
    x[0] - x[1] - u * u + lam.iter().zip(&dx).map(|(l, f)| l * f).sum::<f64>()
}

/// `λ = β/N · (I + η_C·C + η_A·A)`.
pub fn force_of_infection(p: &ModelParams, x: &AbsoluteState) -> Result<f64> {
    let n = x.total();
    if !(n > 0.0) {
        return Err(Error::DegeneratePopulation(n));
    }
    Ok(p.beta / n * p.weighted_infectives(x.i, x.c, x.a))
}

/// Time derivative of the absolute (head-count) model.
pub fn rhs_absolute(p: &ModelParams, x: &AbsoluteState) -> Result<AbsoluteState> {
    let lambda = force_of_infection(p, x)?;
    let n = x.total();
    Ok(AbsoluteState {
        s: p.b * n - lambda * x.s - p.mu * x.s,
        i: lambda * x.s - (p.rho + p.phi + p.mu) * x.i + p.alpha * x.a + p.omega * x.c,
        c: p.phi * x.i - (p.omega + p.mu) * x.c,
        a: p.rho * x.i - (p.alpha + p.mu + p.d) * x.a,
    })
}

fn finite(x: &Fractions) -> Result<()> {
    if x.to_array().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("non-finite fractions {x:?}")))
    }
}

/// Time derivative of the normalized (fraction) model.
pub fn rhs_normalized(p: &ModelParams, x: &Fractions) -> Result<Fractions> {
    finite(x)?;
    let mut dx = [0.0; 4];
    controlled_kernel(p, &x.to_array(), 0.0, &mut dx);
    Ok(Fractions::from_slice(&dx))
}

/// Time derivative of the normalized model under prevention effort `u`.
pub fn rhs_controlled(p: &ModelParams, x: &Fractions, u: f64) -> Result<Fractions> {
    finite(x)?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::ControlOutOfRange(u));
    }
    let mut dx = [0.0; 4];
    controlled_kernel(p, &x.to_array(), u, &mut dx);
    Ok(Fractions::from_slice(&dx))
}

/// Integrand of the objective, `s − i − u²`.
pub fn running_cost(x: &Fractions, u: f64) -> f64 {
    x.s - x.i - u * u
}

/// Composite trapezoidal rule for node values on `grid`.
pub fn trapezoid(grid: &TimeGrid, values: &[f64]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    let h = grid.step();
    Ok(values.windows(2).map(|w| h * (w[0] + w[1]) / 2.0).sum())
}

/// `J = ∫ (s − i − u²) dt` by the trapezoidal rule on the trajectory's grid.
pub fn objective(traj: &Trajectory, u: &[f64]) -> Result<f64> {
    if u.len() != traj.len() {
        return Err(Error::GridMismatch(format!(
            "control has {} nodes, trajectory has {}",
            u.len(),
            traj.len()
        )));
    }
    if traj.dim() < 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: traj.dim(),
        });
    }
    let costs: Vec<f64> = traj
        .states()
        .zip(u)
        .map(|(x, &u)| running_cost(&Fractions::from_slice(x), u))
        .collect();
    trapezoid(traj.grid(), &costs)
}

/// `H = s − i − u² + Λ·f(x, u)`.
pub fn hamiltonian(p: &ModelParams, x: &Fractions, lam: &AdjointState, u: f64) -> f64 {
    hamiltonian_kernel(p, &x.to_array(), &lam.to_array(), u)
}

/// Costate derivative `λ'`.
pub fn adjoint_rhs(p: &ModelParams, x: &Fractions, lam: &AdjointState, u: f64, mode: AdjointMode) -> AdjointState {
    let mut dl = [0.0; 4];
    adjoint_kernel(p, &x.to_array(), &lam.to_array(), u, mode, &mut dl);
    AdjointState::from_slice(&dl)
}

/// `u* = min(max(0, β(i + η_C c + η_A a)·s·(λ1 − λ2)/2), u_max)`.
pub fn optimal_control_law(p: &ModelParams, x: &Fractions, lam: &AdjointState, bounds: &ControlBounds) -> f64 {
    bounds.clamp(raw_control(p, &x.to_array(), &lam.to_array()))
}

/// Normalized model as a [`VectorField`] on `(s, i, c, a)`.
#[derive(Debug, Clone, Copy)]
pub struct NormalizedField {
    pub params: ModelParams,
}

impl VectorField for NormalizedField {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        controlled_kernel(&self.params, x, 0.0, dx);
    }
}

/// Normalized model under a constant control.
#[derive(Debug, Clone, Copy)]
pub struct ControlledField {
    pub params: ModelParams,
    pub u: f64,
}

impl VectorField for ControlledField {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        controlled_kernel(&self.params, x, self.u, dx);
    }
}

/// Absolute model as a [`VectorField`] on `(S, I, C, A)`; yields NaN when `N = 0`.
#[derive(Debug, Clone, Copy)]
pub struct AbsoluteField {
    pub params: ModelParams,
}

impl VectorField for AbsoluteField {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        match rhs_absolute(&self.params, &AbsoluteState::from_slice(x)) {
            Ok(r) => dx.copy_from_slice(&r.to_array()),
            Err(_) => dx.fill(f64::NAN),
        }
    }
}
