//! Leapfrog solver for the radial damped wave equation
//! `u_tt - (u_rr + (N-1)/r u_r) + a(r) u_t = 0`, Dirichlet at `r0`.
//!
//! The damping term is centered in time and solved pointwise, so the step
//! size is limited by the wave speed alone even though `a` grows without
//! bound. The outer boundary is held at zero; runs are capped so the support
//! never reaches it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DampingProfile, Field, InitialData, RadialGrid};
use crate::weight::radial_laplacian_stride;

pub const MAX_CFL: f64 = 0.9;

/// Centered `f'' + (N-1)/r f'` at interior nodes, zero at both ends.
pub fn radial_laplacian(f: &Field) -> Field {
    Field::from_vec(*f.grid(), radial_laplacian_stride(f.values(), f.grid(), 1))
}

fn laplacian_into(f: &[f64], grid: &RadialGrid, out: &mut [f64]) {
    let n = f.len();
    let h = grid.dr();
    let inv_h2 = 1.0 / (h * h);
    let k = (grid.dim() - 1) as f64 / (2.0 * h);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        let r = grid.node(i);
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv_h2 + k / r * (f[i + 1] - f[i - 1]);
    }
}

/// Two time levels of the leapfrog scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub u_now: Field,
    pub u_prev: Field,
    pub t: f64,
    pub dt: f64,
}

impl WaveState {
    /// State at `t = 0` with the second-order Taylor start
    /// `u^{-1} = u0 - dt u1 + dt²/2 (Δ_h u0 - a u1)`.
    pub fn start(data: &InitialData, p: &DampingProfile, dt: f64) -> Result<Self> {
        data.u0.same_grid(&data.u1)?;
        let grid = *data.u0.grid();
        let lap = radial_laplacian(&data.u0);
        let mut prev: Vec<f64> = grid
            .nodes()
            .enumerate()
            .map(|(i, r)| {
                let (u0, u1) = (data.u0.values()[i], data.u1.values()[i]);
                u0 - dt * u1 + 0.5 * dt * dt * (lap.values()[i] - p.eval(r) * u1)
            })
            .collect();
        prev[0] = 0.0;
        let n = prev.len();
        prev[n - 1] = 0.0;
        Ok(Self {
            u_now: data.u0.clone(),
            u_prev: Field::from_vec(grid, prev),
            t: 0.0,
            dt,
        })
    }
}

fn check_cfl(grid: &RadialGrid, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let cfl = dt / grid.dr();
    if cfl > MAX_CFL {
        return Err(Error::param(
            "dt",
            format!("dt/dr = {cfl:.4} exceeds {MAX_CFL}"),
        ));
    }
    Ok(())
}

/// Precomputed per-node coefficients for one grid, damping and step.
struct Stepper {
    grid: RadialGrid,
    dt: f64,
    damping: Vec<f64>,
    inv_plus: Vec<f64>,
    minus: Vec<f64>,
    lap: Vec<f64>,
}

impl Stepper {
    fn new(grid: RadialGrid, p: &DampingProfile, dt: f64) -> Result<Self> {
        check_cfl(&grid, dt)?;
        let damping: Vec<f64> = grid.nodes().map(|r| p.eval(r)).collect();
        let inv_plus = damping.iter().map(|a| 1.0 / (1.0 + 0.5 * a * dt)).collect();
        let minus = damping.iter().map(|a| 1.0 - 0.5 * a * dt).collect();
        Ok(Self {
            grid,
            dt,
            damping,
            inv_plus,
            minus,
            lap: vec![0.0; grid.len()],
        })
    }

    /// `(u⁺ - 2u + u⁻)/dt² = Δ_h u - a (u⁺ - u⁻)/(2dt)` solved for `u⁺`.
    fn advance(&mut self, prev: &[f64], now: &[f64], next: &mut [f64]) {
        laplacian_into(now, &self.grid, &mut self.lap);
        let dt2 = self.dt * self.dt;
        let n = now.len();
        for i in 1..n - 1 {
            next[i] = (2.0 * now[i] - self.minus[i] * prev[i] + dt2 * self.lap[i]) * self.inv_plus[i];
        }
        next[0] = 0.0;
        next[n - 1] = 0.0;
    }
}

fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

/// One leapfrog step.
pub fn step_wave(s: &WaveState, p: &DampingProfile, dt: f64) -> Result<WaveState> {
    s.u_now.same_grid(&s.u_prev)?;
    let grid = *s.u_now.grid();
    let mut stepper = Stepper::new(grid, p, dt)?;
    let mut next = vec![0.0; grid.len()];
    stepper.advance(s.u_prev.values(), s.u_now.values(), &mut next);
    if let Some(i) = first_non_finite(&next) {
        return Err(Error::NonFinite {
            context: format!("wave step, node {i}"),
            t: s.t + dt,
        });
    }
    Ok(WaveState {
        u_prev: s.u_now.clone(),
        u_now: Field::from_vec(grid, next),
        t: s.t + dt,
        dt,
    })
}

/// Time stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveRunConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub sample_times: Vec<f64>,
}

impl WaveRunConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self, grid: &RadialGrid, support_radius: f64) -> Result<()> {
        check_cfl(grid, self.dt)?;
        if !(self.t_final >= 0.0) {
            return Err(Error::param("T", "must be nonnegative"));
        }
        let limit = grid.r_max() - support_radius - 4.0 * grid.dr();
        if self.t_final > limit {
            return Err(Error::param(
                "T",
                format!(
                    "T = {} would let the cone R0 + t reach r_max; need T <= r_max - R0 - 4 dr = {limit}",
                    self.t_final
                ),
            ));
        }
        if let Some(t) = self
            .sample_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_final + 0.5 * self.dt))
        {
            return Err(Error::param("sample_times", format!("{t} outside [0, T]")));
        }
        Ok(())
    }
}

/// `u`, `u_t`, `u_tt` at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSnapshot {
    pub step: usize,
    pub t: f64,
    pub u: Field,
    pub u_t: Field,
    pub u_tt: Field,
}

/// Three consecutive levels around step `step` (time `t`), handed to
/// observers once `u_next` is known.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub grid: &'a RadialGrid,
    pub u_prev: &'a [f64],
    pub u_now: &'a [f64],
    pub u_next: &'a [f64],
}

impl StepView<'_> {
    pub fn u_t(&self) -> Vec<f64> {
        self.u_next
            .iter()
            .zip(self.u_prev)
            .map(|(a, b)| (a - b) / (2.0 * self.dt))
            .collect()
    }
}

/// Runs the scheme to `t_final`, calling `observer` at every step
/// `0 ..= steps` and returning snapshots at the requested sample times.
///
/// `u_t` is the centered difference (exactly `u1` at `t = 0`) and
/// `u_tt = Δ_h u - a u_t`.
pub fn solve_wave<F>(
    cfg: &WaveRunConfig,
    data: &InitialData,
    p: &DampingProfile,
    mut observer: F,
) -> Result<Vec<WaveSnapshot>>
where
    F: FnMut(&StepView<'_>) -> Result<()>,
{
    let grid = *data.u0.grid();
    cfg.validate(&grid, data.support_radius)?;
    let dt = cfg.dt;
    let steps = cfg.steps();
    let mut wanted: Vec<usize> = cfg
        .sample_times
        .iter()
        .map(|t| ((t / dt).round() as usize).min(steps))
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut wanted = wanted.into_iter().peekable();

    let start = WaveState::start(data, p, dt)?;
    let mut stepper = Stepper::new(grid, p, dt)?;
    let mut prev = start.u_prev.into_values();
    let mut now = start.u_now.into_values();
    let mut next = vec![0.0; grid.len()];
    let mut out = Vec::new();

    for k in 0..=steps {
        stepper.advance(&prev, &now, &mut next);
        let t = k as f64 * dt;
        if let Some(i) = first_non_finite(&next) {
            return Err(Error::NonFinite {
                context: format!("wave step {k}, node {i}"),
                t: t + dt,
            });
        }
        let view = StepView {
            step: k,
            t,
            dt,
            grid: &grid,
            u_prev: &prev,
            u_now: &now,
            u_next: &next,
        };
        observer(&view)?;
        if wanted.peek() == Some(&k) {
            wanted.next();
            let u_t = if k == 0 {
                data.u1.values().to_vec()
            } else {
                view.u_t()
            };
            let mut lap = vec![0.0; grid.len()];
            laplacian_into(&now, &grid, &mut lap);
            let u_tt = lap
                .iter()
                .zip(&u_t)
                .zip(&stepper.damping)
                .map(|((l, v), a)| l - a * v)
                .collect();
            out.push(WaveSnapshot {
                step: k,
                t,
                u: Field::from_vec(grid, now.clone()),
                u_t: Field::from_vec(grid, u_t),
                u_tt: Field::from_vec(grid, u_tt),
            });
        }
        std::mem::swap(&mut prev, &mut now);
        std::mem::swap(&mut now, &mut next);
    }
    Ok(out)
}

/// Largest `|u|` over nodes with `r > R0 + t + 2 dr`.
pub fn support_leak(u: &[f64], grid: &RadialGrid, support_radius: f64, t: f64) -> f64 {
    let edge = support_radius + t + 2.0 * grid.dr();
    grid.nodes()
        .zip(u)
        .filter(|(r, _)| *r > edge)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
}

/// True iff the state vanishes (below `tol`) outside `B(0, R0 + t)` up to a
/// two-node band.
pub fn check_support(s: &WaveState, support_radius: f64, tol: f64) -> bool {
    support_leak(s.u_now.values(), s.u_now.grid(), support_radius, s.t) < tol
}
