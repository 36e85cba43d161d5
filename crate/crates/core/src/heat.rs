//! Crank–Nicolson solver for `v_t + L v = 0`, `L = -a(r)^{-1} Δ`, and the
//! Duhamel reconstruction of the damped wave from heat-flow data.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DampingProfile, Field, InitialData, RadialGrid};
use crate::wave::{radial_laplacian, WaveSnapshot};

/// `v0 = u0 + a^{-1} u1`.
pub fn heat_initial_from_wave(data: &InitialData, p: &DampingProfile) -> Result<Field> {
    data.u0.same_grid(&data.u1)?;
    let grid = *data.u0.grid();
    let v = grid
        .nodes()
        .zip(data.u0.values().iter().zip(data.u1.values()))
        .map(|(r, (u0, u1))| u0 + u1 / p.eval(r))
        .collect();
    Ok(Field::from_vec(grid, v))
}

/// `-a^{-1} Δ_h f`, zero at both ends.
pub fn apply_generator(f: &Field, p: &DampingProfile) -> Field {
    let lap = radial_laplacian(f);
    let grid = *f.grid();
    let v = grid
        .nodes()
        .zip(lap.values())
        .map(|(r, l)| -l / p.eval(r))
        .collect();
    Field::from_vec(grid, v)
}

/// Solves a tridiagonal system in place: `lower[i] x[i-1] + diag[i] x[i] +
/// upper[i] x[i+1] = rhs[i]`. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = rhs.len();
    if lower.len() != n || diag.len() != n || upper.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: diag.len(),
        });
    }
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::SearchFailed("zero pivot in tridiagonal solve".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 {
            return Err(Error::SearchFailed("zero pivot in tridiagonal solve".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// Interior rows of `L_h`: `(L v)_i = lo_i v_{i-1} + di_i v_i + up_i v_{i+1}`.
struct Generator {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

impl Generator {
    fn new(grid: &RadialGrid, p: &DampingProfile) -> Result<Self> {
        let h = grid.dr();
        let k = (grid.dim() - 1) as f64;
        if !(k * h < 2.0 * grid.r0()) {
            return Err(Error::param(
                "n",
                format!(
                    "(N-1) dr = {} must be below 2 r0 = {} for a monotone heat scheme",
                    k * h,
                    2.0 * grid.r0()
                ),
            ));
        }
        let m = grid.len() - 2;
        let (mut lo, mut di, mut up) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for j in 0..m {
            let r = grid.node(j + 1);
            let ia = 1.0 / p.eval(r);
            lo[j] = -ia * (1.0 / (h * h) - k / (2.0 * h * r));
            di[j] = ia * 2.0 / (h * h);
            up[j] = -ia * (1.0 / (h * h) + k / (2.0 * h * r));
        }
        Ok(Self { lo, di, up })
    }

    fn apply_interior(&self, v: &[f64], out: &mut [f64]) {
        let m = self.di.len();
        for j in 0..m {
            let (l, c, u) = (v[j], v[j + 1], v[j + 2]);
            out[j] = self.lo[j] * l + self.di[j] * c + self.up[j] * u;
        }
    }
}

/// One-step propagator `(I + θ τ L)^{-1} (I - (1-θ) τ L)` for fixed `τ`.
struct ThetaStep {
    theta: f64,
    tau: f64,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl ThetaStep {
    fn new(gen: &Generator, tau: f64, theta: f64) -> Self {
        let s = theta * tau;
        Self {
            theta,
            tau,
            lower: gen.lo.iter().map(|x| s * x).collect(),
            diag: gen.di.iter().map(|x| 1.0 + s * x).collect(),
            upper: gen.up.iter().map(|x| s * x).collect(),
        }
    }

    fn apply(&self, gen: &Generator, v: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        let n = v.len();
        scratch.resize(n - 2, 0.0);
        let explicit = (1.0 - self.theta) * self.tau;
        if explicit != 0.0 {
            gen.apply_interior(v, scratch);
            for j in 0..n - 2 {
                scratch[j] = v[j + 1] - explicit * scratch[j];
            }
        } else {
            scratch.copy_from_slice(&v[1..n - 1]);
        }
        solve_tridiagonal(&self.lower, &self.diag, &self.upper, scratch)?;
        v[1..n - 1].copy_from_slice(scratch);
        v[0] = 0.0;
        v[n - 1] = 0.0;
        Ok(())
    }
}

/// Discrete heat semigroup `e^{-τL}` for `τ` a multiple of `dt`.
///
/// Each application may start with two backward-Euler half steps
/// (Rannacher start), which damps the stiff modes CN leaves undamped.
pub struct Semigroup {
    grid: RadialGrid,
    dt: f64,
    gen: Generator,
    cn: ThetaStep,
    be_half: ThetaStep,
    rannacher: bool,
}

impl Semigroup {
    pub fn new(grid: RadialGrid, p: &DampingProfile, dt: f64, rannacher: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        let gen = Generator::new(&grid, p)?;
        let cn = ThetaStep::new(&gen, dt, 0.5);
        let be_half = ThetaStep::new(&gen, 0.5 * dt, 1.0);
        Ok(Self {
            grid,
            dt,
            gen,
            cn,
            be_half,
            rannacher,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Number of steps making up `tau`; errors unless `tau` is a multiple of `dt`.
    pub fn steps_for(&self, tau: f64) -> Result<usize> {
        let k = (tau / self.dt).round();
        if !(tau >= 0.0) || (k * self.dt - tau).abs() > 1e-8 * self.dt.max(tau) {
            return Err(Error::param(
                "dt",
                format!("time span {tau} is not a multiple of the heat step {}", self.dt),
            ));
        }
        Ok(k as usize)
    }

    /// Advances `v` by `steps` steps in place.
    pub fn advance(&self, v: &mut [f64], steps: usize) -> Result<()> {
        self.grid.check_len(v.len())?;
        let mut scratch = Vec::with_capacity(v.len());
        for k in 0..steps {
            if k == 0 && self.rannacher {
                self.be_half.apply(&self.gen, v, &mut scratch)?;
                self.be_half.apply(&self.gen, v, &mut scratch)?;
            } else {
                self.cn.apply(&self.gen, v, &mut scratch)?;
            }
        }
        Ok(())
    }

    /// `e^{-τL} f`.
    pub fn apply(&self, f: &Field, tau: f64) -> Result<Field> {
        let steps = self.steps_for(tau)?;
        let mut v = f.values().to_vec();
        self.advance(&mut v, steps)?;
        Ok(Field::from_vec(self.grid, v))
    }

    /// `L_h f`.
    pub fn generator(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        let mut out = vec![0.0; n];
        self.gen.apply_interior(f, &mut out[1..n - 1]);
        out
    }
}

/// One heat state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatState {
    pub v: Field,
    pub t: f64,
}

/// One Crank–Nicolson step.
pub fn step_heat(s: &HeatState, p: &DampingProfile, dt: f64) -> Result<HeatState> {
    let sg = Semigroup::new(*s.v.grid(), p, dt, false)?;
    let mut v = s.v.values().to_vec();
    sg.advance(&mut v, 1)?;
    Ok(HeatState {
        v: Field::from_vec(*s.v.grid(), v),
        t: s.t + dt,
    })
}

/// Heat flow time stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatRunConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub sample_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatTrajectory {
    pub snapshots: Vec<HeatState>,
    /// Set when `|v|` at the last interior node exceeded `1e-10 max|v|`.
    pub tail_warning: bool,
    pub max_tail_ratio: f64,
}

pub const TAIL_THRESHOLD: f64 = 1e-10;

/// Smallest outer radius the heat flow needs for horizon `T`.
pub fn recommended_r_max(alpha: f64, t_final: f64, support_radius: f64) -> f64 {
    5.0 * t_final.powf(1.0 / (2.0 + alpha)) + support_radius
}

/// Crank–Nicolson with a Rannacher start; `observer` sees every step.
pub fn evolve_heat_with<F>(
    v0: &Field,
    p: &DampingProfile,
    cfg: &HeatRunConfig,
    mut observer: F,
) -> Result<HeatTrajectory>
where
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let grid = *v0.grid();
    let sg = Semigroup::new(grid, p, cfg.dt, false)?;
    let start = Semigroup::new(grid, p, cfg.dt, true)?;
    if !(cfg.t_final >= 0.0) {
        return Err(Error::param("T", "must be nonnegative"));
    }
    let steps = (cfg.t_final / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut wanted: Vec<usize> = cfg
        .sample_times
        .iter()
        .map(|t| ((t / cfg.dt).round().max(0.0) as usize).min(steps))
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut wanted = wanted.into_iter().peekable();

    let n = grid.len();
    let mut v = v0.values().to_vec();
    let mut out = Vec::new();
    let mut max_tail_ratio = 0.0f64;
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if k > 0 {
            if k == 1 {
                start.advance(&mut v, 1)?;
            } else {
                sg.advance(&mut v, 1)?;
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("heat step {k}, node {i}"),
                    t,
                });
            }
        }
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if peak > 0.0 {
            max_tail_ratio = max_tail_ratio.max(v[n - 2].abs() / peak);
        }
        observer(t, &v)?;
        if wanted.peek() == Some(&k) {
            wanted.next();
            out.push(HeatState {
                v: Field::from_vec(grid, v.clone()),
                t,
            });
        }
    }
    let tail_warning = max_tail_ratio > TAIL_THRESHOLD;
    if tail_warning {
        warn!(
            "heat flow reached the outer boundary: tail ratio {max_tail_ratio:.3e} exceeds {TAIL_THRESHOLD:e}; increase r_max"
        );
    }
    Ok(HeatTrajectory {
        snapshots: out,
        tail_warning,
        max_tail_ratio,
    })
}

pub fn evolve_heat(v0: &Field, p: &DampingProfile, cfg: &HeatRunConfig) -> Result<HeatTrajectory> {
    evolve_heat_with(v0, p, cfg, |_, _| Ok(()))
}

/// Times at which [`duhamel_reconstruct`] reads wave snapshots: the
/// midpoints of `[0, t]` with spacing `ds`, plus `t/2` and `0`.
pub fn duhamel_sample_times(t: f64, ds: f64) -> Result<Vec<f64>> {
    let m = half_panels(t, ds)?;
    let mut times = vec![0.0, 0.5 * t];
    times.extend((0..2 * m).map(|j| (j as f64 + 0.5) * ds));
    times.sort_by(f64::total_cmp);
    Ok(times)
}

fn half_panels(t: f64, ds: f64) -> Result<usize> {
    if !(ds > 0.0) || !(t >= 0.0) {
        return Err(Error::param("ds", "need ds > 0 and t >= 0"));
    }
    let m = (0.5 * t / ds).round();
    if (m * ds - 0.5 * t).abs() > 1e-9 * ds.max(t) {
        return Err(Error::param("ds", format!("t/2 = {} is not a multiple of ds = {ds}", 0.5 * t)));
    }
    Ok(m as usize)
}

fn find_snapshot(series: &[WaveSnapshot], t: f64, tol: f64) -> Result<&WaveSnapshot> {
    series
        .iter()
        .find(|s| (s.t - t).abs() <= tol)
        .ok_or(Error::InsufficientSnapshots { t })
}

/// Right-hand side of the Duhamel identity evaluated at time `t`:
///
/// `e^{-tL}[u0 + a^{-1}u1] - ∫_{t/2}^t e^{-(t-s)L}[a^{-1}u_tt(s)] ds
///  - e^{-tL/2}[a^{-1}u_t(t/2)] + ∫_0^{t/2} L e^{-(t-s)L}[a^{-1}u_t(s)] ds`
///
/// with midpoint quadrature of spacing `ds`. Sums over midpoints are
/// accumulated Horner style, one `e^{-ds L}` per panel, so `ds` must be a
/// multiple of the semigroup step.
pub fn duhamel_reconstruct(
    series: &[WaveSnapshot],
    data: &InitialData,
    p: &DampingProfile,
    sg: &Semigroup,
    t: f64,
    ds: f64,
) -> Result<Field> {
    let grid = *sg.grid();
    if data.u0.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    let m = half_panels(t, ds)?;
    let tol = 1e-6 * ds.min(sg.dt());
    let inv_a: Vec<f64> = grid.nodes().map(|r| 1.0 / p.eval(r)).collect();
    let scaled = |f: &Field| -> Vec<f64> { f.values().iter().zip(&inv_a).map(|(v, ia)| v * ia).collect() };

    let (panel, half_panel) = if m > 0 {
        (sg.steps_for(ds)?, sg.steps_for(0.5 * ds)?)
    } else {
        (0, 0)
    };
    let half_t = sg.steps_for(0.5 * t)?;
    let n = grid.len();

    // Σ_j e^{-(M-j-1/2) ds L} g_j for midpoints s_j = offset + (j + 1/2) ds
    let horner = |offset: f64, pick: &dyn Fn(&WaveSnapshot) -> Vec<f64>| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; n];
        for j in 0..m {
            if j > 0 {
                sg.advance(&mut acc, panel)?;
            }
            let s = offset + (j as f64 + 0.5) * ds;
            let g = pick(find_snapshot(series, s, tol)?);
            acc.iter_mut().zip(&g).for_each(|(a, x)| *a += ds * x);
        }
        if m > 0 {
            sg.advance(&mut acc, half_panel)?;
        }
        Ok(acc)
    };

    let late = horner(0.5 * t, &|s| scaled(&s.u_tt))?;
    let mut early = horner(0.0, &|s| scaled(&s.u_t))?;

    let first = heat_initial_from_wave(data, p)?;
    let mid = find_snapshot(series, 0.5 * t, tol)?;
    let mut w = first.into_values();
    sg.advance(&mut w, half_t)?;
    w.iter_mut().zip(scaled(&mid.u_t)).for_each(|(a, b)| *a -= b);
    sg.advance(&mut w, half_t)?;

    sg.advance(&mut early, half_t)?;
    let l_early = sg.generator(&early);

    let out = (0..n).map(|i| w[i] - late[i] + l_early[i]).collect();
    Ok(Field::from_vec(grid, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{bump_initial_data, weighted_l2_norm, WeightKind};
    use proptest::prelude::*;

    fn setup(n: usize) -> (RadialGrid, DampingProfile, InitialData) {
        let grid = RadialGrid::new(1.0, 16.0, n, 2).unwrap();
        let p = DampingProfile::power(1.0, 1.0).unwrap();
        let data = bump_initial_data(&grid, 3.0, 1.0, 1.0, 1.0).unwrap();
        (grid, p, data)
    }

    fn dmu_inner(f: &[f64], g: &[f64], grid: &RadialGrid, p: &DampingProfile) -> f64 {
        let q = grid.quadrature_weights();
        grid.nodes()
            .enumerate()
            .map(|(i, r)| q[i] * p.eval(r) * f[i] * g[i])
            .sum()
    }

    #[test]
    fn initial_data_examples() {
        let (grid, p, data) = setup(301);
        let only_u0 = InitialData {
            u1: Field::zeros(grid),
            ..data.clone()
        };
        assert_eq!(heat_initial_from_wave(&only_u0, &p).unwrap(), only_u0.u0);
        let only_u1 = InitialData {
            u0: Field::zeros(grid),
            ..data.clone()
        };
        let v0 = heat_initial_from_wave(&only_u1, &p).unwrap();
        for (i, r) in grid.nodes().enumerate() {
            assert!((v0.values()[i] - data.u1.values()[i] / r).abs() < 1e-15);
            if r >= data.support_radius {
                assert_eq!(v0.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn thomas_matches_dense_product() {
        let lower = [0.0, -1.0, 0.5, 0.2];
        let diag = [4.0, 3.0, 5.0, 2.0];
        let upper = [1.0, 0.5, -1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                }
                if i < 3 {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs).unwrap();
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_examples() {
        let (grid, p, _) = setup(301);
        assert_eq!(apply_generator(&Field::zeros(grid), &p).max_abs(), 0.0);
        let g3 = RadialGrid::new(1.0, 4.0, 301, 3).unwrap();
        let f = Field::from_fn(g3, |r| 1.0 / r);
        assert!(apply_generator(&f, &p).max_abs() < 1e-9);
    }

    #[test]
    fn generator_symmetric_and_nonnegative() {
        let grid = RadialGrid::new(1.0, 8.0, 7001, 2).unwrap();
        let p = DampingProfile::power(1.0, 1.0).unwrap();
        let f = bump_initial_data(&grid, 3.0, 1.5, 1.0, 0.0).unwrap().u0;
        let g = bump_initial_data(&grid, 4.0, 2.0, 1.0, 0.0).unwrap().u0;
        let lf = apply_generator(&f, &p);
        let lg = apply_generator(&g, &p);
        let a = dmu_inner(lf.values(), g.values(), &grid, &p);
        let b = dmu_inner(f.values(), lg.values(), &grid, &p);
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        assert!(dmu_inner(lf.values(), f.values(), &grid, &p) > 0.0);
    }

    #[test]
    fn zero_trajectory() {
        let (grid, p, _) = setup(301);
        let cfg = HeatRunConfig {
            dt: 0.01,
            t_final: 1.0,
            sample_times: vec![0.5, 1.0],
        };
        let tr = evolve_heat(&Field::zeros(grid), &p, &cfg).unwrap();
        assert!(tr.snapshots.iter().all(|s| s.v.max_abs() == 0.0));
        assert!(!tr.tail_warning);
        let s = step_heat(&HeatState { v: Field::zeros(grid), t: 0.0 }, &p, 0.1).unwrap();
        assert_eq!(s.v.max_abs(), 0.0);
    }

    #[test]
    fn rejects_non_monotone_grid() {
        let grid = RadialGrid::new(0.01, 5.0, 101, 3).unwrap();
        let p = DampingProfile::power(1.0, 1.0).unwrap();
        assert!(Semigroup::new(grid, &p, 0.1, false).is_err());
    }

    #[test]
    fn contraction_and_positivity() {
        let (grid, p, data) = setup(601);
        let v0 = heat_initial_from_wave(&data, &p).unwrap();
        let peak = v0.max_abs();
        let mut last = weighted_l2_norm(&v0, &p, WeightKind::Dmu);
        let cfg = HeatRunConfig {
            dt: 0.05,
            t_final: 20.0,
            sample_times: vec![],
        };
        evolve_heat_with(&v0, &p, &cfg, |_, v| {
            let norm = weighted_l2_norm(&Field::from_vec(grid, v.to_vec()), &p, WeightKind::Dmu);
            assert!(norm <= last * (1.0 + 1e-12), "{norm} > {last}");
            last = norm;
            assert!(v.iter().all(|x| *x >= -1e-6 * peak));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn tail_monitor_fires_on_short_domain() {
        let grid = RadialGrid::new(1.0, 5.0, 201, 2).unwrap();
        let p = DampingProfile::power(1.0, 1.0).unwrap();
        let v0 = bump_initial_data(&grid, 3.0, 1.0, 1.0, 0.0).unwrap().u0;
        let cfg = HeatRunConfig {
            dt: 0.05,
            t_final: 20.0,
            sample_times: vec![20.0],
        };
        let tr = evolve_heat(&v0, &p, &cfg).unwrap();
        assert!(tr.tail_warning);
        assert!(recommended_r_max(1.0, 500.0, 4.0) > 40.0);
    }

    #[test]
    fn second_order_in_time() {
        let (grid, p, data) = setup(301);
        let v0 = heat_initial_from_wave(&data, &p).unwrap();
        let run = |dt: f64| {
            let cfg = HeatRunConfig {
                dt,
                t_final: 2.0,
                sample_times: vec![2.0],
            };
            evolve_heat(&v0, &p, &cfg).unwrap().snapshots[0].v.clone()
        };
        let v: Vec<Field> = [0.04, 0.02, 0.01].into_iter().map(run).collect();
        let d = |a: &Field, b: &Field| a.zip_map(b, |x, y| x - y).unwrap().max_abs();
        let ratio = d(&v[0], &v[1]) / d(&v[1], &v[2]);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        let _ = grid;
    }

    #[test]
    fn semigroup_rejects_fractional_span() {
        let (grid, p, _) = setup(301);
        let sg = Semigroup::new(grid, &p, 0.1, false).unwrap();
        assert!(sg.apply(&Field::zeros(grid), 0.25).is_err());
        assert_eq!(sg.steps_for(0.3).unwrap(), 3);
    }

    #[test]
    fn duhamel_at_zero_returns_u0() {
        let (grid, p, data) = setup(301);
        let series = vec![WaveSnapshot {
            step: 0,
            t: 0.0,
            u: data.u0.clone(),
            u_t: data.u1.clone(),
            u_tt: Field::zeros(grid),
        }];
        let sg = Semigroup::new(grid, &p, 0.01, false).unwrap();
        let u = duhamel_reconstruct(&series, &data, &p, &sg, 0.0, 0.05).unwrap();
        let err = u.zip_map(&data.u0, |a, b| a - b).unwrap().max_abs();
        assert!(err < 1e-15, "{err}");
    }

    #[test]
    fn duhamel_with_zero_data_is_zero() {
        let (grid, p, _) = setup(301);
        let zero = bump_initial_data(&grid, 3.0, 1.0, 0.0, 0.0).unwrap();
        let times = duhamel_sample_times(1.0, 0.1).unwrap();
        let series: Vec<WaveSnapshot> = times
            .iter()
            .enumerate()
            .map(|(k, t)| WaveSnapshot {
                step: k,
                t: *t,
                u: Field::zeros(grid),
                u_t: Field::zeros(grid),
                u_tt: Field::zeros(grid),
            })
            .collect();
        let sg = Semigroup::new(grid, &p, 0.05, false).unwrap();
        let u = duhamel_reconstruct(&series, &zero, &p, &sg, 1.0, 0.1).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert!(matches!(
            duhamel_reconstruct(&series[..3], &zero, &p, &sg, 1.0, 0.1),
            Err(Error::InsufficientSnapshots { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn cn_step_contracts_dmu_norm(
            center in 2.5f64..10.0,
            width in 0.3f64..1.4,
            dt in 0.001f64..1.0,
        ) {
            let (grid, p, _) = setup(301);
            let v = bump_initial_data(&grid, center, width, 1.0, 0.0).unwrap().u0;
            let before = weighted_l2_norm(&v, &p, WeightKind::Dmu);
            let s = step_heat(&HeatState { v, t: 0.0 }, &p, dt).unwrap();
            let after = weighted_l2_norm(&s.v, &p, WeightKind::Dmu);
            prop_assert!(after <= before * (1.0 + 1e-12));
        }
    }
}
