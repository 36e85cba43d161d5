//! Auxiliary function `A_ε` with `(1-ε)a ≤ ΔA_ε ≤ (1+ε)a`, its growth and
//! gradient bounds, and the time-dependent weight
//! `Φ_ε = exp(A_ε / ((h+2ε)(1+t)))`.
//!
//! `A_ε` is the explicit profile `a0 <r>^(2+α) / ((N+α)(2+α))`, whose
//! Laplacian `b1` matches `a` at leading order, corrected by the Newton
//! potential of the remainder `η_ε (a - b1)` and shifted by a constant `λ_ε`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bracket, write_columns, DampingProfile, Field, RadialGrid};

/// Width of the cutoff transition `R_ε ≤ r ≤ R_ε + 1`.
pub const CUTOFF_WIDTH: f64 = 1.0;

const LAMBDA_DOUBLINGS: usize = 200;

/// `h = (2+α)/(N+α)`.
pub fn h_constant(dim: usize, alpha: f64) -> f64 {
    (2.0 + alpha) / (dim as f64 + alpha)
}

/// `b1 = Δ(a0 <r>^(2+α) / ((N+α)(2+α))) = a0 <r>^α - a0 α/(N+α) <r>^(α-2)`.
pub fn b1_value(p: &DampingProfile, dim: usize, r: f64) -> f64 {
    let b = bracket(r);
    let n = dim as f64;
    p.a0 * b.powf(p.alpha) - p.a0 * p.alpha / (n + p.alpha) * b.powf(p.alpha - 2.0)
}

pub fn build_b1(p: &DampingProfile, grid: &RadialGrid) -> Field {
    Field::from_fn(*grid, |r| b1_value(p, grid.dim(), r))
}

fn leading_profile(p: &DampingProfile, dim: usize, r: f64) -> (f64, f64) {
    let n = dim as f64;
    let b = bracket(r);
    let value = p.a0 / ((n + p.alpha) * (2.0 + p.alpha)) * b.powf(2.0 + p.alpha);
    let slope = p.a0 / (n + p.alpha) * b.powf(p.alpha) * r;
    (value, slope)
}

fn smooth_step_down(x: f64) -> f64 {
    let f = |z: f64| if z > 0.0 { (-1.0 / z).exp() } else { 0.0 };
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let (up, down) = (f(1.0 - x), f(x));
        up / (up + down)
    }
}

/// Smooth cutoff: 1 on `[r0, R_ε]`, 0 from `R_ε + 1` on, monotone between.
pub fn build_cutoff(r_eps: f64, grid: &RadialGrid) -> Result<Field> {
    if !(r_eps < grid.r_max() - 2.0 * grid.dr()) {
        return Err(Error::param(
            "R_eps",
            format!(
                "{r_eps} leaves no room below r_max - 2 dr = {}",
                grid.r_max() - 2.0 * grid.dr()
            ),
        ));
    }
    Ok(Field::from_fn(*grid, |r| {
        smooth_step_down((r - r_eps) / CUTOFF_WIDTH)
    }))
}

/// Fourth-order cumulative integral `∫_{r0}^{r_i} g`.
fn cumulative_forward(g: &[f64], h: f64) -> Vec<f64> {
    let n = g.len();
    let mut out = vec![0.0; n];
    for i in 0..n - 1 {
        let panel = if i == 0 {
            9.0 * g[0] + 19.0 * g[1] - 5.0 * g[2] + g[3]
        } else if i == n - 2 {
            g[n - 4] - 5.0 * g[n - 3] + 19.0 * g[n - 2] + 9.0 * g[n - 1]
        } else {
            -g[i - 1] + 13.0 * g[i] + 13.0 * g[i + 1] - g[i + 2]
        };
        out[i + 1] = out[i] + panel * h / 24.0;
    }
    out
}

/// `∫_{r_i}^{r_max} g`.
fn cumulative_backward(g: &[f64], h: f64) -> Vec<f64> {
    let fwd = cumulative_forward(g, h);
    let total = fwd[fwd.len() - 1];
    fwd.iter().map(|c| total - c).collect()
}

/// Newton potential of a radial source and its radial derivative.
///
/// The source is taken to vanish inside the obstacle; the potential on the
/// exterior then solves `-ΔP = source`.
pub(crate) fn newton_potential_with_gradient(source: &Field) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = source.grid();
    let f = source.values();
    let n = grid.len();
    if n < 4 {
        return Err(Error::param("n", "need at least four nodes"));
    }
    if f[n - 1] != 0.0 {
        return Err(Error::NotCompactlySupported { value: f[n - 1] });
    }
    let dim = grid.dim();
    let h = grid.dr();
    let pw = (dim - 1) as i32;
    let moment: Vec<f64> = grid.nodes().zip(f).map(|(r, v)| v * r.powi(pw)).collect();
    let mass = cumulative_forward(&moment, h);

    let mut pot = vec![0.0; n];
    if dim == 2 {
        let outer: Vec<f64> = grid.nodes().zip(f).map(|(r, v)| v * r * r.ln()).collect();
        let tail = cumulative_backward(&outer, h);
        for i in 0..n {
            pot[i] = -(grid.node(i).ln() * mass[i] + tail[i]);
        }
    } else {
        let outer: Vec<f64> = grid.nodes().zip(f).map(|(r, v)| v * r).collect();
        let tail = cumulative_backward(&outer, h);
        let c = 1.0 / (dim as f64 - 2.0);
        for i in 0..n {
            pot[i] = c * (grid.node(i).powi(2 - dim as i32) * mass[i] + tail[i]);
        }
    }
    let grad = (0..n)
        .map(|i| -grid.node(i).powi(1 - dim as i32) * mass[i])
        .collect();
    Ok((pot, grad))
}

/// Newton potential `𝒩 * source` of a compactly supported radial source.
pub fn newton_potential_radial(source: &Field) -> Result<Field> {
    let (pot, _) = newton_potential_with_gradient(source)?;
    Ok(Field::from_vec(*source.grid(), pot))
}

/// Measured properties of a candidate `A_ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub epsilon: f64,
    /// `(2+α)/(N+α)`
    pub h: f64,
    /// min / max of `Δ_h A / a` over interior nodes.
    pub ellip_min: f64,
    pub ellip_max: f64,
    /// Richardson estimate of the discretization error in `Δ_h A / a`.
    pub ellip_tol: f64,
    pub ellip_pass: bool,
    /// `A1ε`, `A2ε`: min / max of `A / <r>^(2+α)`.
    pub growth_lower: f64,
    pub growth_upper: f64,
    pub min_value: f64,
    pub grad_ratio_sup: f64,
    pub grad_ratio_pass: bool,
    /// Range of `|A'|^2 / (a A)` over `r >= r_max / 10`.
    pub tail_ratio_min: f64,
    pub tail_ratio_max: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.ellip_pass && self.grad_ratio_pass && self.min_value > 0.0 && self.growth_lower > 0.0
    }
}

/// Centered `f'' + (N-1)/r f'` with stencil spacing `step · dr`; zero where
/// the stencil leaves the grid.
pub(crate) fn radial_laplacian_stride(f: &[f64], grid: &RadialGrid, step: usize) -> Vec<f64> {
    let n = f.len();
    let h = grid.dr() * step as f64;
    let k = (grid.dim() - 1) as f64;
    let mut out = vec![0.0; n];
    for i in step..n.saturating_sub(step) {
        let r = grid.node(i);
        let (l, c, u) = (f[i - step], f[i], f[i + step]);
        out[i] = (u - 2.0 * c + l) / (h * h) + k / r * (u - l) / (2.0 * h);
    }
    out
}

/// Checks the elliptic, growth and gradient bounds for samples of `A` and `A'`.
pub fn verify_samples(
    a_eps: &Field,
    da_eps: &Field,
    p: &DampingProfile,
    epsilon: f64,
) -> Result<VerificationReport> {
    a_eps.same_grid(da_eps)?;
    let grid = *a_eps.grid();
    let n = grid.len();
    let av = a_eps.values();
    let dav = da_eps.values();
    let damp: Vec<f64> = grid.nodes().map(|r| p.eval(r)).collect();
    let h = h_constant(grid.dim(), p.alpha);

    let lap = radial_laplacian_stride(av, &grid, 1);
    let lap2 = radial_laplacian_stride(av, &grid, 2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 1..n - 1 {
        let q = lap[i] / damp[i];
        lo = lo.min(q);
        hi = hi.max(q);
    }
    let mut tol = 0.0f64;
    for i in 2..n.saturating_sub(2) {
        tol = tol.max(((lap2[i] - lap[i]) / 3.0 / damp[i]).abs());
    }
    // factor 2 covers the Richardson estimate being itself approximate
    let ellip_tol = 2.0 * tol + 1e-9;
    let ellip_pass = lo >= 1.0 - epsilon - ellip_tol && hi <= 1.0 + epsilon + ellip_tol;

    let (mut g_lo, mut g_hi, mut min_value) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut sup = f64::NEG_INFINITY;
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let tail_start = grid.r_max() / 10.0;
    for (i, r) in grid.nodes().enumerate() {
        let g = av[i] / bracket(r).powf(2.0 + p.alpha);
        g_lo = g_lo.min(g);
        g_hi = g_hi.max(g);
        min_value = min_value.min(av[i]);
        let ratio = dav[i] * dav[i] / (damp[i] * av[i]);
        sup = sup.max(ratio);
        if r >= tail_start {
            t_lo = t_lo.min(ratio);
            t_hi = t_hi.max(ratio);
        }
    }
    Ok(VerificationReport {
        epsilon,
        h,
        ellip_min: lo,
        ellip_max: hi,
        ellip_tol,
        ellip_pass,
        growth_lower: g_lo,
        growth_upper: g_hi,
        min_value,
        grad_ratio_sup: sup,
        grad_ratio_pass: min_value > 0.0 && sup <= h + epsilon,
        tail_ratio_min: t_lo,
        tail_ratio_max: t_hi,
    })
}

/// Assembled `A_ε` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryWeight {
    pub epsilon: f64,
    pub r_eps: f64,
    pub lambda_eps: f64,
    /// Samples of `A_ε`.
    pub a_eps: Field,
    /// Samples of the radial derivative `A_ε'`.
    pub da_eps: Field,
    pub report: VerificationReport,
}

pub fn verify_elliptic_bounds(w: &AuxiliaryWeight, p: &DampingProfile) -> Result<VerificationReport> {
    verify_samples(&w.a_eps, &w.da_eps, p, w.epsilon)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(Error::param("eps", format!("must lie in (0, 1/3), got {eps}")));
    }
    Ok(())
}

/// Smallest node radius beyond which `|a - b1| / a ≤ ε` at every node.
pub fn select_r_eps(p: &DampingProfile, grid: &RadialGrid, eps: f64) -> Result<f64> {
    let mut first_ok = None;
    for i in (0..grid.len()).rev() {
        let r = grid.node(i);
        let a = p.eval(r);
        if (a - b1_value(p, grid.dim(), r)).abs() / a <= eps {
            first_ok = Some(i);
        } else {
            break;
        }
    }
    let i = first_ok.ok_or_else(|| {
        Error::SearchFailed(format!(
            "|a - b1|/a never drops below eps = {eps} on [{}, {}]",
            grid.r0(),
            grid.r_max()
        ))
    })?;
    let r_eps = grid.node(i);
    if r_eps + CUTOFF_WIDTH > grid.r_max() - 2.0 * grid.dr() {
        return Err(Error::SearchFailed(format!(
            "grid too short: R_eps = {r_eps} needs r_max > {}",
            r_eps + CUTOFF_WIDTH + 2.0 * grid.dr()
        )));
    }
    Ok(r_eps)
}

/// `A` without the additive constant, and `A'`.
fn unshifted_profile(
    p: &DampingProfile,
    grid: &RadialGrid,
    r_eps: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cutoff = build_cutoff(r_eps, grid)?;
    let dim = grid.dim();
    let source = Field::from_vec(
        *grid,
        grid.nodes()
            .zip(cutoff.values())
            .map(|(r, eta)| eta * (p.eval(r) - b1_value(p, dim, r)))
            .collect(),
    );
    let (pot, grad) = newton_potential_with_gradient(&source)?;
    let mut value = Vec::with_capacity(grid.len());
    let mut slope = Vec::with_capacity(grid.len());
    for (i, r) in grid.nodes().enumerate() {
        let (l, dl) = leading_profile(p, dim, r);
        value.push(l - pot[i]);
        slope.push(dl - grad[i]);
    }
    Ok((value, slope))
}

/// Builds `A_ε` with explicitly given `R_ε` and `λ_ε`; used for refinement
/// studies where both must be held fixed across grids.
pub fn assemble_with(
    p: &DampingProfile,
    grid: &RadialGrid,
    eps: f64,
    r_eps: f64,
    lambda_eps: f64,
) -> Result<AuxiliaryWeight> {
    check_epsilon(eps)?;
    let (value, slope) = unshifted_profile(p, grid, r_eps)?;
    let a_eps = Field::from_vec(*grid, value.iter().map(|v| v + lambda_eps).collect());
    let da_eps = Field::from_vec(*grid, slope);
    let report = verify_samples(&a_eps, &da_eps, p, eps)?;
    Ok(AuxiliaryWeight {
        epsilon: eps,
        r_eps,
        lambda_eps,
        a_eps,
        da_eps,
        report,
    })
}

/// Builds `A_ε`: picks `R_ε` by threshold, then the smallest `λ_ε` in the
/// sequence `0, u, 2u, 4u, …` giving `A > 0` and `sup |A'|²/(aA) ≤ h + ε`.
pub fn assemble_a_eps(p: &DampingProfile, grid: &RadialGrid, eps: f64) -> Result<AuxiliaryWeight> {
    check_epsilon(eps)?;
    let r_eps = select_r_eps(p, grid, eps)?;
    let (value, slope) = unshifted_profile(p, grid, r_eps)?;
    let damp: Vec<f64> = grid.nodes().map(|r| p.eval(r)).collect();
    let h = h_constant(grid.dim(), p.alpha);
    let accepts = |lambda: f64| {
        value.iter().zip(&slope).zip(&damp).all(|((v, s), a)| {
            let shifted = v + lambda;
            shifted > 0.0 && s * s / (a * shifted) <= h + eps
        })
    };
    let unit = 1e-6 * (1.0 + value[0].abs());
    let mut lambda = 0.0;
    let mut found = accepts(lambda);
    let mut step = unit;
    for _ in 0..LAMBDA_DOUBLINGS {
        if found {
            break;
        }
        lambda = step;
        found = accepts(lambda);
        step *= 2.0;
    }
    if !found {
        return Err(Error::SearchFailed(format!(
            "no lambda up to {lambda:e} makes A positive with gradient ratio <= h + eps"
        )));
    }
    let a_eps = Field::from_vec(*grid, value.iter().map(|v| v + lambda).collect());
    let da_eps = Field::from_vec(*grid, slope);
    let report = verify_samples(&a_eps, &da_eps, p, eps)?;
    Ok(AuxiliaryWeight {
        epsilon: eps,
        r_eps,
        lambda_eps: lambda,
        a_eps,
        da_eps,
        report,
    })
}

impl AuxiliaryWeight {
    pub fn grid(&self) -> &RadialGrid {
        self.a_eps.grid()
    }

    /// `1/(h + 2ε)`.
    pub fn exponent_scale(&self, alpha: f64) -> f64 {
        1.0 / (h_constant(self.grid().dim(), alpha) + 2.0 * self.epsilon)
    }

    /// Discrete Laplacian `Δ_h A` (zero at the two boundary nodes).
    pub fn laplacian(&self) -> Vec<f64> {
        radial_laplacian_stride(self.a_eps.values(), self.grid(), 1)
    }

    /// CSV with columns `r, A, A', Δ_h A / a`.
    pub fn write_csv(&self, path: &Path, p: &DampingProfile) -> Result<()> {
        let grid = *self.grid();
        let lap = self.laplacian();
        let ratio = Field::from_vec(
            grid,
            grid.nodes().zip(&lap).map(|(r, l)| l / p.eval(r)).collect(),
        );
        write_columns(
            path,
            &["r", "A", "dA", "lapA_over_a"],
            &[&self.a_eps, &self.da_eps, &ratio],
        )
    }
}

/// `Φ_ε(·, t)` and its derivatives.
///
/// `phi` and its derivatives overflow to `+inf` wherever
/// `A/((h+2ε)(1+t))` exceeds about 709; `log_phi` is always finite and is
/// what the energy integrals use.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    pub t: f64,
    /// `1/(h+2ε)`
    pub scale: f64,
    pub log_phi: Field,
    pub phi: Field,
    pub dphi_dt: Field,
    pub dphi_dr: Field,
    /// `ΔΦ` assembled from `Δ_h A` and `A'`.
    pub lap_phi: Field,
}

pub fn phi_weight(w: &AuxiliaryWeight, alpha: f64, t: f64) -> Result<WeightSnapshot> {
    if !(t >= 0.0) {
        return Err(Error::param("t", format!("must be nonnegative, got {t}")));
    }
    let grid = *w.grid();
    let c = w.exponent_scale(alpha);
    let tau = 1.0 + t;
    let lap = w.laplacian();
    let n = grid.len();
    let mut log_phi = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    let mut dphi_dt = Vec::with_capacity(n);
    let mut dphi_dr = Vec::with_capacity(n);
    let mut lap_phi = Vec::with_capacity(n);
    for i in 0..n {
        let a = w.a_eps.values()[i];
        let da = w.da_eps.values()[i];
        let lp = c * a / tau;
        let f = lp.exp();
        log_phi.push(lp);
        phi.push(f);
        dphi_dt.push(-c * a / (tau * tau) * f);
        let g = c * da / tau;
        dphi_dr.push(g * f);
        lap_phi.push((c * lap[i] / tau + g * g) * f);
    }
    Ok(WeightSnapshot {
        t,
        scale: c,
        log_phi: Field::from_vec(grid, log_phi),
        phi: Field::from_vec(grid, phi),
        dphi_dt: Field::from_vec(grid, dphi_dt),
        dphi_dr: Field::from_vec(grid, dphi_dr),
        lap_phi: Field::from_vec(grid, lap_phi),
    })
}
