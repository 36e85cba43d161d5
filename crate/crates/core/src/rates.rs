//! Power-law fits of decay data and the predicted exponents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weight::h_constant;

pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// RMS of the residuals in `log v`.
    pub residual_rms: f64,
}

/// Least-squares fit of `log v = c + slope · log t` over `t ∈ [t_lo, t_hi]`.
pub fn fit_decay_slope(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo >= 1.0 && hi > lo) {
        return Err(Error::param(
            "window",
            format!("need 1 <= t_lo < t_hi, got ({lo}, {hi})"),
        ));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .copied()
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::param(
            "window",
            format!("{} points in window, need at least {MIN_FIT_POINTS}", pts.len()),
        ));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::param("series", format!("value {v} at t = {t} is not positive")));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(DecayFit {
        slope,
        stderr: (ssr / (n - 2.0) / sxx).sqrt(),
        intercept,
        window,
        n_points: pts.len(),
        residual_rms: (ssr / n).sqrt(),
    })
}

/// Predicted decay exponents (as positive numbers: `v ~ t^{-exp}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub dim: usize,
    pub alpha: f64,
    /// `‖√a u‖`: `(N+α)/(2(2+α))`
    pub cor2_exp: f64,
    /// `‖√a (u - v)‖`: `cor2_exp + (1+α)/(2+α)`
    pub thm1_exp: f64,
    /// `E_a(t; u)`: `(N+α)/(2+α)`
    pub propmain_ea_exp: f64,
    /// `E_1(t; u)`: `(N+α)/(2+α) + 1`
    pub propmain_e1_exp: f64,
    /// `‖v‖_{L²(dμ)}` for `L¹` data in the plane.
    pub heat_l1_exp: Option<f64>,
    pub lambda0: f64,
    pub p_alpha: Option<f64>,
    /// In the plane the rate of `‖√a u‖` carries no loss.
    pub delta_zero_allowed: bool,
}

pub fn rate_table(dim: usize, alpha: f64, eps: f64) -> Result<RateTable> {
    if dim < 2 {
        return Err(Error::param("N", "dimension must be at least 2"));
    }
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", "must be positive"));
    }
    let n = dim as f64;
    let h = h_constant(dim, alpha);
    let cor2 = (n + alpha) / (2.0 * (2.0 + alpha));
    let ea = (n + alpha) / (2.0 + alpha);
    Ok(RateTable {
        dim,
        alpha,
        cor2_exp: cor2,
        thm1_exp: cor2 + (1.0 + alpha) / (2.0 + alpha),
        propmain_ea_exp: ea,
        propmain_e1_exp: ea + 1.0,
        heat_l1_exp: (dim == 2).then_some(0.5),
        lambda0: (1.0 - eps) * (1.0 - 4.0 * eps) / ((1.0 + eps) * (h + 2.0 * eps)),
        p_alpha: (dim >= 3).then(|| 2.0 * n * (2.0 + alpha) / (alpha * (n - 2.0))),
        delta_zero_allowed: dim == 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TwoSided,
    AtLeastAsFast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub quantity: String,
    pub fitted_slope: f64,
    pub stderr: f64,
    pub target: f64,
    pub tol: f64,
    pub direction: Direction,
    pub pass: bool,
    /// Distance to the failure boundary; negative when failing.
    pub margin: f64,
}

/// Compares a fitted slope against the decay exponent `target`.
pub fn verdict(quantity: &str, fit: &DecayFit, target: f64, tol: f64, direction: Direction) -> Verdict {
    let margin = match direction {
        Direction::TwoSided => tol - (fit.slope + target).abs(),
        Direction::AtLeastAsFast => (-target + tol) - fit.slope,
    };
    Verdict {
        quantity: quantity.to_string(),
        fitted_slope: fit.slope,
        stderr: fit.stderr,
        target,
        tol,
        direction,
        pass: margin >= 0.0,
        margin,
    }
}
