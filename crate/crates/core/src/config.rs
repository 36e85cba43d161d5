//! Experiment configuration: JSON schema, defaults and load-time validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bump_initial_data, BumpPerturbation, DampingProfile, InitialData, RadialGrid, MIN_NODES};
use crate::heat::recommended_r_max;
use crate::wave::MAX_CFL;

pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_HEAT_DT: f64 = 0.05;
pub const DEFAULT_RECORD_EVERY: f64 = 1.0;

/// Every check name a config may request.
pub const CHECK_NAMES: &[&str] = &[
    "weight",
    "cor2",
    "thm1",
    "energy_ea",
    "energy_e1",
    "heat_decay",
    "hardy",
    "monotonicity",
    "appfps",
    "support",
    "duhamel",
    "isometry",
    "psi0",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    pub alpha: f64,
    #[serde(default = "one")]
    pub a0: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub perturbation: Option<BumpPerturbation>,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub duhamel: DuhamelConfig,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r0: f64,
    pub r_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub center: f64,
    pub width: f64,
    pub amp_u0: f64,
    pub amp_u1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Wave step; `cfl · dr` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    /// Times at which full field profiles are written.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// Spacing of the energy records.
    #[serde(default = "default_record_every")]
    pub record_every: f64,
    /// Requested heat step; rounded to a whole multiple of the wave step.
    #[serde(default = "default_heat_dt")]
    pub heat_dt: f64,
    /// Rate-fit window; `[max(1, T/5), T]` when absent.
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    /// Horizon of the `heat` command; `T` when absent.
    #[serde(default, rename = "heat_T")]
    pub heat_t_final: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub cor2: f64,
    /// Required excess of the `u - v` decay slope over the `u` slope.
    pub thm1_gap: f64,
    pub energy_ea: f64,
    pub energy_e1: f64,
    pub heat_decay: f64,
    pub support: f64,
    pub inequality_rel: f64,
    pub duhamel: f64,
    pub isometry: f64,
    /// Accepted range of the `ψ₀` residual ratio per grid doubling.
    pub psi0_ratio: (f64, f64),
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cor2: 0.08,
            thm1_gap: 0.45,
            energy_ea: 0.15,
            energy_e1: 0.2,
            heat_decay: 0.06,
            support: 1e-12,
            inequality_rel: 1e-8,
            duhamel: 0.05,
            isometry: 1e-6,
            psi0_ratio: (3.5, 4.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DuhamelConfig {
    /// Reconstruction time; `T` when absent.
    pub t: Option<f64>,
    pub ds: f64,
    pub heat_dt: f64,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        Self {
            t: None,
            ds: 0.05,
            heat_dt: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    pub isometry_n: usize,
    pub psi0_dim: usize,
    pub psi0_r_max: f64,
    pub psi0_n: Vec<usize>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            isometry_n: 4096,
            psi0_dim: 3,
            psi0_r_max: 20.0,
            psi0_n: vec![201, 401, 801],
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

fn default_record_every() -> f64 {
    DEFAULT_RECORD_EVERY
}

fn default_heat_dt() -> f64 {
    DEFAULT_HEAT_DT
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Re-labels a module error with the config path it came from.
fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidParameter { field, reason } => invalid(&format!("{path}.{field}"), reason),
        other => invalid(path, other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.grid.r0, self.grid.r_max, self.grid.n, self.dim).map_err(at("grid"))
    }

    pub fn damping(&self) -> Result<DampingProfile> {
        DampingProfile::new(self.alpha, self.a0, self.perturbation).map_err(|e| match e {
            Error::InvalidParameter { field, reason } => invalid(&field, reason),
            other => other,
        })
    }

    pub fn initial_data(&self, grid: &RadialGrid) -> Result<InitialData> {
        let d = &self.data;
        bump_initial_data(grid, d.center, d.width, d.amp_u0, d.amp_u1).map_err(at("data"))
    }

    /// `R0`, the radius outside which the data vanish.
    pub fn support_radius(&self) -> f64 {
        self.data.center + self.data.width
    }

    /// Wave step as requested: `run.dt`, or `cfl · dr`.
    pub fn wave_dt(&self, grid: &RadialGrid) -> f64 {
        self.run.dt.unwrap_or(self.run.cfl * grid.dr())
    }

    pub fn heat_horizon(&self) -> f64 {
        self.run.heat_t_final.unwrap_or(self.run.t_final)
    }

    /// Fit window for a run of length `horizon`.
    pub fn fit_window(&self, horizon: f64) -> (f64, f64) {
        self.run.fit_window.unwrap_or(((0.2 * horizon).max(1.0), horizon))
    }

    /// Requested checks, or every check when the list is empty.
    pub fn wants(&self, name: &str) -> bool {
        self.checks.is_empty() || self.checks.iter().any(|c| c == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(invalid("N", format!("dimension must be at least 2, got {}", self.dim)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.eps > 0.0 && self.eps < 0.25) {
            return Err(invalid("eps", format!("must lie in (0, 1/4), got {}", self.eps)));
        }
        self.damping()?;
        if self.grid.n < MIN_NODES {
            return Err(invalid("grid.n", format!("need at least {MIN_NODES} nodes")));
        }
        let grid = self.grid()?;
        self.initial_data(&grid)?;
        let run = &self.run;
        if !(run.t_final.is_finite() && run.t_final > 0.0) {
            return Err(invalid("run.T", "must be positive"));
        }
        if let Some(dt) = run.dt {
            if !(dt > 0.0) {
                return Err(invalid("run.dt", "must be positive"));
            }
        } else if !(run.cfl > 0.0 && run.cfl <= MAX_CFL) {
            return Err(invalid("run.cfl", format!("must lie in (0, {MAX_CFL}]")));
        }
        let dt = self.wave_dt(&grid);
        if dt > MAX_CFL * grid.dr() {
            return Err(invalid(
                "run.dt",
                format!("dt/dr = {} exceeds the stability limit {MAX_CFL}", dt / grid.dr()),
            ));
        }
        let r0_support = self.support_radius();
        let needed = r0_support + run.t_final + 4.0 * grid.dr();
        if grid.r_max() < needed {
            return Err(invalid(
                "grid.r_max",
                format!(
                    "finite-speed truncation rule: r_max must be at least R0 + T + 4 dr = {needed} (R0 = {r0_support}, T = {})",
                    run.t_final
                ),
            ));
        }
        if let Some(t) = run.sample_times.iter().find(|t| !(**t >= 0.0 && **t <= run.t_final)) {
            return Err(invalid("run.sample_times", format!("{t} outside [0, T]")));
        }
        if !(run.record_every > 0.0 && run.record_every <= run.t_final) {
            return Err(invalid("run.record_every", "must lie in (0, T]"));
        }
        if !(run.heat_dt > 0.0) {
            return Err(invalid("run.heat_dt", "must be positive"));
        }
        if let Some(th) = run.heat_t_final {
            if !(th.is_finite() && th > 0.0) {
                return Err(invalid("run.heat_T", "must be positive"));
            }
        }
        let (lo, hi) = self.fit_window(run.t_final);
        if !(lo >= 1.0 && hi > lo && hi <= run.t_final.max(self.heat_horizon())) {
            return Err(invalid("run.fit_window", format!("need 1 <= t_lo < t_hi <= T, got ({lo}, {hi})")));
        }
        for (i, c) in self.checks.iter().enumerate() {
            if !CHECK_NAMES.contains(&c.as_str()) {
                return Err(invalid(
                    &format!("checks[{i}]"),
                    format!("unknown check `{c}`; known: {}", CHECK_NAMES.join(", ")),
                ));
            }
        }
        let du = &self.duhamel;
        if !(du.ds > 0.0 && du.heat_dt > 0.0 && du.heat_dt <= 0.5 * du.ds) {
            return Err(invalid("duhamel", "need ds > 0 and 0 < heat_dt <= ds/2"));
        }
        if let Some(t) = du.t {
            if !(t >= 0.0 && t <= run.t_final) {
                return Err(invalid("duhamel.t", "must lie in [0, T]"));
            }
        }
        let tc = &self.transform;
        if tc.isometry_n < MIN_NODES || tc.psi0_n.iter().any(|n| *n < MIN_NODES) {
            return Err(invalid("transform", format!("grids need at least {MIN_NODES} nodes")));
        }
        if tc.psi0_dim < 3 {
            return Err(invalid("transform.psi0_dim", "the stationary profile is trivial in the plane"));
        }
        if !(tc.psi0_r_max > 1.0) {
            return Err(invalid("transform.psi0_r_max", "must exceed 1"));
        }
        Ok(())
    }

    /// Outer radius the heat flow needs over `[0, horizon]`.
    pub fn heat_r_max_needed(&self, horizon: f64) -> f64 {
        recommended_r_max(self.alpha, horizon, self.support_radius())
    }

    /// Rules that only bind for some commands.
    pub fn validate_for(&self, command: Command) -> Result<()> {
        let horizon = match command {
            Command::Heat => self.heat_horizon(),
            Command::Compare | Command::Duhamel => self.run.t_final,
            _ => return Ok(()),
        };
        let needed = self.heat_r_max_needed(horizon);
        if self.grid.r_max < needed {
            return Err(invalid(
                "grid.r_max",
                format!("heat flow over [0, {horizon}] needs r_max >= 5 T^(1/(2+alpha)) + R0 = {needed}"),
            ));
        }
        if command == Command::Heat {
            if let Some((_, hi)) = self.run.fit_window {
                if hi > horizon {
                    return Err(invalid("run.fit_window", "extends past the heat horizon"));
                }
            }
        }
        Ok(())
    }
}

/// Pipelines the orchestrator can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Weight,
    Wave,
    Heat,
    Compare,
    TransformCheck,
    Duhamel,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Weight => "weight",
            Command::Wave => "wave",
            Command::Heat => "heat",
            Command::Compare => "compare",
            Command::TransformCheck => "transform-check",
            Command::Duhamel => "duhamel",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Command::Weight,
            Command::Wave,
            Command::Heat,
            Command::Compare,
            Command::TransformCheck,
            Command::Duhamel,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::Parse(format!("unknown command `{s}`")))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}
