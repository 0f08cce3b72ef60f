//! Configuration, subcommands and file artifacts behind the `sica` binary.
//!
//! Every subcommand takes a resolved [`RunConfig`], writes a CSV and a JSON
//! [`RunManifest`] next to it, and returns an [`Outcome`] whose `report` is
//! the text meant for standard output. A manifest can be passed back as a
//! config file to repeat the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_with_published, convergence_order_against, maximality_gap, norm_table_from, order_band,
    order_reference, reference_terminal, simplex_drift, stationarity_residual, NormTable, OrderReport,
    ReferenceProfile, Setup, VARIABLES,
};
use crate::error::{Error, Result};
use crate::integrators::{AdaptiveSettings, FixedMethod, Method, StepControl, TimeGrid, Trajectory};
use crate::model::{objective, AdjointMode, ControlBounds, Fractions, ModelParams};
use crate::sweep::{solve, SicaProblem, SweepResult, SweepSettings};

pub const TOOL: &str = "sica";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default number of steps for `simulate`, `compare` and `orders`.
pub const SIMULATE_STEPS: usize = 100;
/// Default number of steps for `optimize`.
pub const OPTIMIZE_STEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub u_max: f64,
    pub relaxation: f64,
    pub delta_error: f64,
    pub max_iters: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            u_max: 0.5,
            relaxation: 0.5,
            delta_error: 1e-3,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Primary CSV path; each subcommand has its own default file name.
    pub csv: Option<PathBuf>,
    /// Also write gnuplot scripts next to the CSV.
    pub plot: bool,
}

/// Run configuration. Every field is optional in JSON and defaults to the
/// baseline scenario; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    pub initial: Fractions,
    /// Final time `T` in years.
    pub horizon: f64,
    /// Number of steps `M`; `None` picks the subcommand default.
    pub steps: Option<usize>,
    /// Integrator for `simulate` when not given on the command line.
    pub method: Option<Method>,
    pub control: ControlConfig,
    pub adjoint_mode: AdjointMode,
    /// DP45 settings for `simulate --method dp45`.
    pub adaptive: AdaptiveSettings,
    /// DP45 profile that plays the reference in `compare`.
    pub reference: ReferenceProfile,
    /// Step counts of the `orders` study.
    pub refinements: Vec<usize>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::default(),
            initial: Fractions::default(),
            horizon: 20.0,
            steps: None,
            method: None,
            control: ControlConfig::default(),
            adjoint_mode: AdjointMode::Derived,
            adaptive: AdaptiveSettings::default(),
            reference: ReferenceProfile::OctaveDefault,
            refinements: vec![100, 200, 400, 800],
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config document, or the `config` block of a manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let body = match value {
            serde_json::Value::Object(ref map) if map.get("tool").and_then(|t| t.as_str()) == Some(TOOL) => {
                map.get("config")
                    .cloned()
                    .ok_or_else(|| Error::Config("manifest has no `config` block".into()))?
            }
            other => other,
        };
        let cfg: RunConfig = serde_json::from_value(body).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.initial.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.steps == Some(0) {
            return Err(Error::InvalidGrid("number of steps M must be at least 1".into()));
        }
        ControlBounds::new(self.control.u_max)?;
        self.adaptive.validate()?;
        if self.refinements.len() < 3 || self.refinements.contains(&0) {
            return Err(Error::InvalidSettings(
                "refinements need at least 3 positive step counts".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self, default_steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.horizon, self.steps.unwrap_or(default_steps))
    }

    fn setup(&self, default_steps: usize) -> Result<Setup> {
        Ok(Setup {
            params: self.params,
            initial: self.initial,
            grid: self.grid(default_steps)?,
        })
    }

    fn csv_path(&self, default_name: &str) -> PathBuf {
        self.output.csv.clone().unwrap_or_else(|| PathBuf::from(default_name))
    }

    /// The config with subcommand defaults filled in, as recorded in manifests.
    fn resolved(&self, default_steps: usize, default_csv: &str) -> RunConfig {
        let mut cfg = self.clone();
        cfg.steps = Some(self.steps.unwrap_or(default_steps));
        cfg.output.csv = Some(self.csv_path(default_csv));
        cfg
    }
}

/// How a run's trajectory values were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorInfo {
    pub method: String,
    pub step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveSettings>,
    pub sampling: String,
}

impl IntegratorInfo {
    fn new(method: Method, grid: &TimeGrid, adaptive: &AdaptiveSettings) -> Self {
        match method {
            Method::Dp45 => IntegratorInfo {
                method: method.name().into(),
                step: grid.step(),
                adaptive: Some(*adaptive),
                sampling: sampling_note(adaptive.control).into(),
            },
            _ => IntegratorInfo {
                method: method.name().into(),
                step: grid.step(),
                adaptive: None,
                sampling: "fixed step on every grid node".into(),
            },
        }
    }
}

fn sampling_note(control: StepControl) -> &'static str {
    match control {
        StepControl::Standard => "adaptive steps clipped to land on every sample node",
        StepControl::OctaveCompat => "quartic Hermite dense output at sample nodes",
    }
}

/// Measured quantities of a run; absent entries do not apply to the subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplex_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_uncontrolled: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub margins: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub margin_history: Vec<f64>,
    /// `None` with `stationarity_applicable = false` when no control node is interior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity_applicable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maximality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxation_residual: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub norm_tables: Vec<NormTable>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<OrderSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub method: FixedMethod,
    pub slope: f64,
    pub variable_slopes: [f64; 4],
    pub band: [f64; 2],
    pub pass: bool,
}

impl From<&OrderReport> for OrderSummary {
    fn from(r: &OrderReport) -> Self {
        let band = order_band(r.method);
        OrderSummary {
            method: r.method,
            slope: r.slope,
            variable_slopes: r.variable_slopes,
            band: [*band.start(), *band.end()],
            pass: r.within_band(),
        }
    }
}

/// Everything needed to repeat a run, plus what it measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub integrator: IntegratorInfo,
    pub diagnostics: Diagnostics,
    /// Files written by the run, as given in the config.
    pub outputs: Vec<PathBuf>,
    /// `SOURCE_DATE_EPOCH` when set; wall-clock time is never recorded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_date_epoch: Option<String>,
}

impl RunManifest {
    fn new(command: &str, config: RunConfig, integrator: IntegratorInfo) -> Self {
        RunManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config,
            integrator,
            diagnostics: Diagnostics::default(),
            outputs: Vec::new(),
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        text.push('\n');
        write_file(path, &text)
    }
}

/// Files and text produced by a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub extra: Vec<PathBuf>,
    pub report: String,
}

/// Manifest path belonging to a CSV: `out.csv` → `out.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn sibling(csv: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("sica");
    csv.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

/// Companion CSV holding the uncontrolled trajectory of an `optimize` run.
pub fn uncontrolled_path(csv: &Path) -> PathBuf {
    sibling(csv, "uncontrolled", "csv")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip scientific form, padded to at least 10 significant digits.
pub fn format_float(v: f64) -> String {
    let short = format!("{v:e}");
    let mantissa = short.split('e').next().unwrap_or("");
    let digits = mantissa.chars().filter(char::is_ascii_digit).count();
    if digits >= 10 || !v.is_finite() {
        short
    } else {
        format!("{v:.9e}")
    }
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&format_float(v));
    }
    out.push('\n');
}

pub const STATE_HEADER: &str = "t,s,i,c,a";
pub const OPTIMAL_HEADER: &str = "t,s,i,c,a,u,lambda1,lambda2,lambda3,lambda4";

/// `t,s,i,c,a` rows for every node.
pub fn state_csv(traj: &Trajectory) -> String {
    let mut out = format!("{STATE_HEADER}\n");
    for (k, x) in traj.states().enumerate() {
        csv_row(&mut out, std::iter::once(traj.grid().node(k)).chain(x.iter().copied()));
    }
    out
}

/// `t,s,i,c,a,u,lambda1..4` rows for every node of a sweep result.
pub fn optimal_csv(result: &SweepResult) -> String {
    let grid = result.state.grid();
    let mut out = format!("{OPTIMAL_HEADER}\n");
    for k in 0..grid.len() {
        let row = std::iter::once(grid.node(k))
            .chain(result.state.state(k).iter().copied())
            .chain(std::iter::once(result.control[k]))
            .chain(result.adjoint.state(k).iter().copied());
        csv_row(&mut out, row);
    }
    out
}

/// `simulate`: one trajectory of the normalized model.
pub fn cmd_simulate(config: &RunConfig, method: Method) -> Result<Outcome> {
    config.validate()?;
    let default_csv = format!("sica_{}.csv", method.name());
    let mut resolved = config.resolved(SIMULATE_STEPS, &default_csv);
    resolved.method = Some(method);
    let setup = resolved.setup(SIMULATE_STEPS)?;
    let traj = setup.simulate(method, &resolved.adaptive)?;

    let csv = resolved.csv_path(&default_csv);
    write_file(&csv, &state_csv(&traj))?;
    let mut manifest = RunManifest::new(
        "simulate",
        resolved.clone(),
        IntegratorInfo::new(method, &setup.grid, &resolved.adaptive),
    );
    let drift = simplex_drift(&traj);
    manifest.diagnostics.simplex_drift = Some(drift);
    manifest.outputs.push(csv.clone());

    let mut extra = Vec::new();
    if resolved.output.plot {
        extra.push(emit_plot_script(&csv, PlotKind::States)?);
    }
    manifest.outputs.extend(extra.iter().cloned());
    let manifest_file = manifest_path(&csv);
    manifest.write(&manifest_file)?;

    let last = traj.last();
    let report = format!(
        "simulate method={} nodes={} terminal=({}, {}, {}, {}) simplex_drift={:e}\nwrote {}\n",
        method,
        traj.len(),
        format_float(last[0]),
        format_float(last[1]),
        format_float(last[2]),
        format_float(last[3]),
        drift,
        csv.display()
    );
    Ok(Outcome {
        csv,
        manifest: manifest_file,
        extra,
        report,
    })
}

/// `optimize`: forward-backward sweep for the prevention control.
///
/// On non-convergence the CSV and manifest of the last iterate are still
/// written before the error is returned.
pub fn cmd_optimize(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let default_csv = "sica_optimal.csv";
    let resolved = config.resolved(OPTIMIZE_STEPS, default_csv);
    let setup = resolved.setup(OPTIMIZE_STEPS)?;
    let bounds = ControlBounds::new(resolved.control.u_max)?;
    let problem = SicaProblem::new(resolved.params, resolved.initial, bounds, resolved.adjoint_mode)?;
    let settings = SweepSettings {
        grid: setup.grid,
        delta_error: resolved.control.delta_error,
        relaxation: resolved.control.relaxation,
        max_iterations: resolved.control.max_iters,
        initial_control: None,
    };
    settings.validate()?;

    let (result, failure) = match solve(&problem, &settings) {
        Ok(r) => (r, None),
        Err(Error::NotConverged {
            iterations,
            margin,
            result,
        }) => (
            *result.clone(),
            Some(Error::NotConverged {
                iterations,
                margin,
                result,
            }),
        ),
        Err(e) => return Err(e),
    };

    let uncontrolled = setup.simulate(Method::Rk4, &resolved.adaptive)?;
    let j0 = objective(&uncontrolled, &vec![0.0; setup.grid.len()])?;

    let csv = resolved.csv_path(default_csv);
    let companion = uncontrolled_path(&csv);
    write_file(&csv, &optimal_csv(&result))?;
    write_file(&companion, &state_csv(&uncontrolled))?;

    let mut manifest = RunManifest::new(
        "optimize",
        resolved.clone(),
        IntegratorInfo {
            method: "forward-backward sweep (rk4)".into(),
            step: setup.grid.step(),
            adaptive: None,
            sampling: "stage controls and states at step ends, midpoint stages use node means".into(),
        },
    );
    let stationarity = stationarity_residual(&result, &resolved.params, &bounds);
    let relaxation_residual = result
        .control
        .iter()
        .zip(&result.relaxed_control)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    manifest.diagnostics = Diagnostics {
        simplex_drift: Some(simplex_drift(&result.state)),
        iterations: Some(result.iterations),
        converged: Some(result.converged),
        objective: Some(result.objective),
        objective_uncontrolled: Some(j0),
        margin: Some(result.margin),
        margins: result.margins.clone(),
        margin_history: result.margin_history.clone(),
        stationarity_residual: stationarity,
        stationarity_applicable: Some(stationarity.is_some()),
        maximality_gap: Some(maximality_gap(&result, &resolved.params, &bounds, 51)),
        relaxation_residual: Some(relaxation_residual),
        ..Default::default()
    };
    manifest.outputs = vec![csv.clone(), companion.clone()];

    let mut extra = vec![companion];
    if resolved.output.plot {
        extra.push(emit_plot_script(&csv, PlotKind::StatesVsUncontrolled)?);
        extra.push(emit_plot_script(&csv, PlotKind::Control)?);
        manifest.outputs.extend(extra[1..].iter().cloned());
    }
    let manifest_file = manifest_path(&csv);
    manifest.write(&manifest_file)?;

    if let Some(err) = failure {
        return Err(err);
    }
    let report = format!(
        "optimize adjoint={} converged=true iterations={} J(u*)={} J(0)={} margin={:e}\nwrote {}\n",
        resolved.adjoint_mode.name(),
        result.iterations,
        format_float(result.objective),
        format_float(j0),
        result.margin,
        csv.display()
    );
    Ok(Outcome {
        csv,
        manifest: manifest_file,
        extra,
        report,
    })
}

/// `compare`: norm tables of Euler, RK2 and RK4 against the DP45 reference,
/// next to the published values.
pub fn cmd_compare(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let default_csv = "sica_compare.csv";
    let resolved = config.resolved(SIMULATE_STEPS, default_csv);
    let setup = resolved.setup(SIMULATE_STEPS)?;
    let reference_settings = resolved.reference.settings();
    let reference = setup.simulate(Method::Dp45, &reference_settings)?;

    let mut tables = Vec::with_capacity(3);
    for m in FixedMethod::ALL {
        let candidate = setup.simulate(m.into(), &reference_settings)?;
        tables.push(norm_table_from(m.into(), &candidate, &reference, reference_settings)?);
    }

    let mut csv_text = String::from("method,variable,norm,computed,published,relative_deviation,within_band\n");
    let mut report = format!(
        "Norms of the difference between DP45 ({} reference) and each fixed-step method, M = {}\n",
        resolved.reference,
        setup.grid.steps()
    );
    for table in &tables {
        let entries = compare_with_published(table).expect("fixed-step table");
        let _ = writeln!(report, "\n{}", table.method.name().to_uppercase());
        let _ = writeln!(
            report,
            "{:<4} {:<4} {:>14} {:>14} {:>10}  band",
            "var", "norm", "computed", "published", "rel.dev"
        );
        for e in &entries {
            let _ = writeln!(
                csv_text,
                "{},{},{},{},{},{},{}",
                table.method,
                e.variable,
                e.norm,
                format_float(e.computed),
                format_float(e.published),
                format_float(e.relative_deviation),
                e.within_band
            );
            let _ = writeln!(
                report,
                "{:<4} {:<4} {:>14.7} {:>14.7} {:>+9.2}%  {}",
                e.variable,
                e.norm,
                e.computed,
                e.published,
                100.0 * e.relative_deviation,
                if e.within_band { "ok" } else { "OUT" }
            );
        }
    }

    let csv = resolved.csv_path(default_csv);
    write_file(&csv, &csv_text)?;
    let mut manifest = RunManifest::new(
        "compare",
        resolved.clone(),
        IntegratorInfo::new(Method::Dp45, &setup.grid, &reference_settings),
    );
    manifest.diagnostics.norm_tables = tables;
    manifest.outputs.push(csv.clone());
    let manifest_file = manifest_path(&csv);
    manifest.write(&manifest_file)?;
    let _ = writeln!(report, "\nwrote {}", csv.display());
    Ok(Outcome {
        csv,
        manifest: manifest_file,
        extra: Vec::new(),
        report,
    })
}

/// `orders`: empirical convergence slopes of the fixed-step methods.
pub fn cmd_orders(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let default_csv = "sica_orders.csv";
    let resolved = config.resolved(SIMULATE_STEPS, default_csv);
    let setup = resolved.setup(SIMULATE_STEPS)?;
    let reference_settings = order_reference();
    let exact = reference_terminal(&setup, &reference_settings)?;

    let mut csv_text = String::from("method,steps,h,err_s,err_i,err_c,err_a,err_max\n");
    let mut report = format!(
        "Terminal-error slopes against DP45 (reltol {:e}, abstol {:e}), M = {:?}\n",
        reference_settings.reltol, reference_settings.abstol, resolved.refinements
    );
    let mut summaries = Vec::with_capacity(3);
    for m in FixedMethod::ALL {
        let r = convergence_order_against(m, &setup, &resolved.refinements, &exact)?;
        for (idx, &steps) in r.refinements.iter().enumerate() {
            let _ = write!(csv_text, "{m},{steps},");
            csv_row(
                &mut csv_text,
                std::iter::once(r.steps[idx])
                    .chain(r.errors[idx].iter().copied())
                    .chain(std::iter::once(r.max_errors[idx])),
            );
        }
        let summary = OrderSummary::from(&r);
        let _ = writeln!(
            report,
            "{:<6} slope {:.4}  band [{}, {}]  {}   per variable {}",
            m.name(),
            summary.slope,
            summary.band[0],
            summary.band[1],
            if summary.pass { "PASS" } else { "FAIL" },
            VARIABLES
                .iter()
                .zip(summary.variable_slopes)
                .map(|(v, s)| format!("{v}={s:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        summaries.push(summary);
    }

    let csv = resolved.csv_path(default_csv);
    write_file(&csv, &csv_text)?;
    let mut manifest = RunManifest::new(
        "orders",
        resolved.clone(),
        IntegratorInfo::new(Method::Dp45, &setup.grid, &reference_settings),
    );
    manifest.diagnostics.orders = summaries;
    manifest.outputs.push(csv.clone());
    let manifest_file = manifest_path(&csv);
    manifest.write(&manifest_file)?;
    let _ = writeln!(report, "wrote {}", csv.display());
    Ok(Outcome {
        csv,
        manifest: manifest_file,
        extra: Vec::new(),
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// `s, i, c, a` against `t`.
    States,
    /// Controlled states against the uncontrolled companion CSV.
    StatesVsUncontrolled,
    /// `u` against `t`.
    Control,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::States => "states",
            PlotKind::StatesVsUncontrolled => "states-vs-uncontrolled",
            PlotKind::Control => "control",
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            PlotKind::States => "states",
            PlotKind::StatesVsUncontrolled => "compare",
            PlotKind::Control => "control",
        }
    }
}

fn gp_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn read_header(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

fn expect_header(path: &Path, accepted: &[&str]) -> Result<String> {
    let header = read_header(path)?;
    if accepted.contains(&header.as_str()) {
        Ok(header)
    } else {
        Err(Error::Format {
            path: path.into(),
            message: format!("unexpected CSV header `{header}`"),
        })
    }
}

/// Writes a gnuplot script rendering `kind` from `csv` and returns its path.
///
/// The script refers to data files by name and is meant to be run from the
/// directory holding them; it writes a PNG of the same stem.
pub fn emit_plot_script(csv: &Path, kind: PlotKind) -> Result<PathBuf> {
    let name = csv
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Format {
            path: csv.into(),
            message: "CSV path has no file name".into(),
        })?
        .to_string();
    let script_path = sibling(csv, kind.suffix(), "gp");
    let png = script_path
        .with_extension("png")
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("plot.png")
        .to_string();

    let mut gp = String::new();
    let _ = writeln!(gp, "# {} of {}", kind.name(), name);
    gp.push_str("set datafile separator ','\n");
    gp.push_str("set terminal pngcairo size 1000,700\n");
    let _ = writeln!(gp, "set output {}", gp_quote(&png));
    gp.push_str("set xlabel 't (years)'\n");
    gp.push_str("set grid\n");

    match kind {
        PlotKind::States => {
            expect_header(csv, &[STATE_HEADER, OPTIMAL_HEADER])?;
            gp.push_str("set ylabel 'fraction of population'\n");
            gp.push_str("set key outside right\n");
            let data = gp_quote(&name);
            let curves: Vec<String> = VARIABLES
                .iter()
                .enumerate()
                .map(|(j, v)| format!("{data} using 1:{} skip 1 with lines lw 2 title '{v}'", j + 2))
                .collect();
            let _ = writeln!(gp, "plot {}", curves.join(", \\\n     "));
        }
        PlotKind::StatesVsUncontrolled => {
            expect_header(csv, &[OPTIMAL_HEADER])?;
            let companion = uncontrolled_path(csv);
            expect_header(&companion, &[STATE_HEADER])?;
            let comp_name = companion.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let (data, free) = (gp_quote(&name), gp_quote(comp_name));
            gp.push_str("set multiplot layout 2,2\n");
            for (j, v) in VARIABLES.iter().enumerate() {
                let col = j + 2;
                let _ = writeln!(gp, "set ylabel '{v}'");
                let _ = writeln!(
                    gp,
                    "plot {data} using 1:{col} skip 1 with lines lw 2 title '{v} with control', \\\n     \
                     {free} using 1:{col} skip 1 with lines lw 2 dt 2 title '{v} without control'"
                );
            }
            gp.push_str("unset multiplot\n");
        }
        PlotKind::Control => {
            expect_header(csv, &[OPTIMAL_HEADER])?;
            gp.push_str("set ylabel 'u'\n");
            gp.push_str("set key off\n");
            let _ = writeln!(gp, "plot {} using 1:6 skip 1 with lines lw 2", gp_quote(&name));
        }
    }
    write_file(&script_path, &gp)?;
    Ok(script_path)
}

/// Single-line, machine-parsable rendering of an error for standard error.
pub fn diagnostic_line(err: &Error) -> String {
    let message = err.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error kind={} code={} message=\"{}\"", err.kind(), err.exit_code(), message)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_keeps_ten_digits_and_round_trips() {
        assert_eq!(format_float(0.5), "5.000000000e-1");
        assert_eq!(format_float(0.0), "0.000000000e0");
        assert_eq!(format_float(20.0), "2.000000000e1");
        let third = 1.0 / 3.0;
        assert_eq!(format_float(third).parse::<f64>().unwrap(), third);
        assert_eq!(format_float(-1.0 / 69.54).parse::<f64>().unwrap(), -1.0 / 69.54);
        for v in [1e-300, 123456.789, -2.5e-7, f64::MAX] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert!(digits >= 10, "{s}");
        }
    }

    #[test]
    fn config_defaults_and_rejection() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.params.mu, 1.0 / 69.54);
        assert_eq!(cfg.params.b, 2.1 * (1.0 / 69.54));
        assert_eq!(cfg.control, ControlConfig::default());
        assert_eq!(cfg.initial, Fractions::default());

        assert!(matches!(RunConfig::from_json(r#"{"horizn": 20}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"control": {"umax": 0.5}}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("[1, 2"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"steps": 0}"#), Err(Error::InvalidGrid(_))));
        assert!(RunConfig::from_json(r#"{"control": {"u_max": 1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"refinements": [100, 200]}"#).is_err());

        let cfg = RunConfig::from_json(r#"{"adjoint_mode": "paper-verbatim", "control": {"u_max": 0.3}}"#).unwrap();
        assert_eq!(cfg.adjoint_mode, AdjointMode::Verbatim);
        assert_eq!(cfg.control.u_max, 0.3);
        assert_eq!(cfg.control.delta_error, 1e-3);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            steps: Some(250),
            method: Some(Method::Rk2),
            reference: ReferenceProfile::Tight,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn paths() {
        let csv = Path::new("out/run.csv");
        assert_eq!(manifest_path(csv), Path::new("out/run.manifest.json"));
        assert_eq!(uncontrolled_path(csv), Path::new("out/run_uncontrolled.csv"));
        assert_eq!(sibling(csv, "control", "gp"), Path::new("out/run_control.gp"));
    }

    #[test]
    fn diagnostic_line_is_single_line_and_quoted() {
        let line = diagnostic_line(&Error::Config("bad \"key\"\nnext".into()));
        assert!(!line.contains('\n'));
        assert!(line.starts_with("error kind=invalid-config code=2 message=\""));
        assert!(line.contains("\\\"key\\\""));
    }

    #[test]
    fn gnuplot_quotes_are_doubled() {
        assert_eq!(gp_quote("it's.csv"), "'it''s.csv'");
    }
}
