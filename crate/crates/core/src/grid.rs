//! Radial grids on exterior intervals, damping profiles, nodal fields and
//! radial quadrature.
//!
//! Everything in the crate is radially symmetric: a function on the exterior
//! domain `{|x| > r0}` of `R^N` is stored by its values on a uniform mesh of
//! `[r0, r_max]`, and volume integrals carry the factor `ω_N r^(N-1)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest node count accepted by [`RadialGrid::new`].
pub const MIN_NODES: usize = 5;

/// Japanese bracket `<r> = (1 + r^2)^(1/2)`.
#[inline]
pub fn bracket(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

/// Surface measure of the unit sphere in `R^dim`.
pub fn sphere_area(dim: usize) -> f64 {
    // ω_1 = 2, ω_2 = 2π, ω_{d} = 2π ω_{d-2} / (d - 2)
    let (mut d, mut w) = if dim.is_multiple_of(2) { (2, 2.0 * PI) } else { (1, 2.0) };
    while d < dim {
        d += 2;
        w *= 2.0 * PI / (d - 2) as f64;
    }
    w
}

/// Uniform mesh of `[r0, r_max]` carrying the spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r0: f64,
    r_max: f64,
    n: usize,
    dr: f64,
    dim: usize,
}

impl RadialGrid {
    pub fn new(r0: f64, r_max: f64, n: usize, dim: usize) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::param("r0", format!("must be positive, got {r0}")));
        }
        if !(r_max.is_finite() && r_max > r0) {
            return Err(Error::param(
                "r_max",
                format!("must exceed r0 = {r0}, got {r_max}"),
            ));
        }
        if n < MIN_NODES {
            return Err(Error::param(
                "n",
                format!("need at least {MIN_NODES} nodes, got {n}"),
            ));
        }
        if dim < 2 {
            return Err(Error::param("dim", format!("must be >= 2, got {dim}")));
        }
        let dr = (r_max - r0) / (n - 1) as f64;
        Ok(Self {
            r0,
            r_max,
            n,
            dr,
            dim,
        })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.r_max
        } else {
            self.r0 + i as f64 * self.dr
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Same interval and dimension with `2(n-1)+1` nodes.
    pub fn refined(&self) -> Self {
        Self::new(self.r0, self.r_max, 2 * (self.n - 1) + 1, self.dim)
            .expect("refinement of a valid grid is valid")
    }

    /// Index of the last node with `r <= radius` (clamped to the grid).
    pub fn last_index_within(&self, radius: f64) -> usize {
        if radius <= self.r0 {
            return 0;
        }
        let k = ((radius - self.r0) / self.dr + 1e-9).floor();
        (k as usize).min(self.n - 1)
    }

    /// Weights `q_i` with `Σ q_i f_i ≈ ∫ f ω_N r^(N-1) dr`.
    ///
    /// Composite Simpson over an even number of panels; with an odd panel
    /// count the last panel is integrated by the trapezoid rule.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.n;
        let h = self.dr;
        let mut w = vec![0.0; n];
        let simpson_end = if (n - 1).is_multiple_of(2) { n - 1 } else { n - 2 };
        for p in (0..simpson_end).step_by(2) {
            w[p] += h / 3.0;
            w[p + 1] += 4.0 * h / 3.0;
            w[p + 2] += h / 3.0;
        }
        if simpson_end < n - 1 {
            w[n - 2] += h / 2.0;
            w[n - 1] += h / 2.0;
        }
        let area = sphere_area(self.dim);
        let power = (self.dim - 1) as i32;
        for (i, wi) in w.iter_mut().enumerate() {
            *wi *= area * self.node(i).powi(power);
        }
        w
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found,
            });
        }
        Ok(())
    }
}

/// `height · exp(1 - 1/(1 - s^2))` with `s = (r - center)/width`; peak value
/// `height` at the center, zero for `|s| >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpPerturbation {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl BumpPerturbation {
    pub fn eval(&self, r: f64) -> f64 {
        self.height * (1.0f64).exp() * unit_bump((r - self.center) / self.width)
    }
}

/// `exp(-1/(1 - s^2))` on `|s| < 1`, zero elsewhere.
#[inline]
pub fn unit_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Damping `a(r) = a0 r^alpha + perturbation(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingProfile {
    pub alpha: f64,
    pub a0: f64,
    #[serde(default)]
    pub perturbation: Option<BumpPerturbation>,
}

impl DampingProfile {
    pub fn power(alpha: f64, a0: f64) -> Result<Self> {
        Self::new(alpha, a0, None)
    }

    pub fn new(alpha: f64, a0: f64, perturbation: Option<BumpPerturbation>) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(Error::param("a0", format!("must be positive, got {a0}")));
        }
        if let Some(b) = perturbation {
            if !(b.width > 0.0 && b.center.is_finite() && b.height.is_finite()) {
                return Err(Error::param(
                    "perturbation",
                    "needs positive width and finite center/height",
                ));
            }
            if b.height < 0.0 {
                return Err(Error::param(
                    "perturbation.height",
                    "negative bumps can make the damping vanish",
                ));
            }
        }
        Ok(Self {
            alpha,
            a0,
            perturbation,
        })
    }

    /// `a(r)` without domain checks.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let base = self.a0 * r.powf(self.alpha);
        match &self.perturbation {
            Some(b) => base + b.eval(r),
            None => base,
        }
    }

    /// Nodal samples of `a` on `grid`.
    pub fn sample(&self, grid: &RadialGrid) -> Field {
        Field::from_fn(*grid, |r| self.eval(r))
    }

    /// `(a1, a2)` = (min, max) of `<r>^(-alpha) a(r)` over the grid nodes.
    pub fn bounds(&self, grid: &RadialGrid) -> (f64, f64) {
        grid.nodes()
            .map(|r| self.eval(r) / bracket(r).powf(self.alpha))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m), hi.max(m))
            })
    }
}

/// `a(r)` for `r` inside the exterior domain described by `grid`.
pub fn damping_eval(p: &DampingProfile, grid: &RadialGrid, r: f64) -> Result<f64> {
    if !(r >= grid.r0()) {
        return Err(Error::param(
            "r",
            format!("{r} lies inside the obstacle r < {}", grid.r0()),
        ));
    }
    let a = p.eval(r);
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", format!("damping not positive at r = {r}")));
    }
    Ok(a)
}

/// Real values at the nodes of a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("field node {i}"),
                t: f64::NAN,
            });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec(grid: RadialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field::from_vec(self.grid, values))
    }

    pub(crate) fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Two-column CSV `r,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_columns(path, &["r", "value"], &[self])
    }
}

/// Writes `r` followed by one column per field, `%.12e` formatted.
pub fn write_columns(path: &Path, headers: &[&str], fields: &[&Field]) -> Result<()> {
    let grid = match fields.first() {
        Some(f) => *f.grid(),
        None => return Err(Error::param("fields", "nothing to write")),
    };
    for f in fields {
        if *f.grid() != grid {
            return Err(Error::GridMismatch);
        }
    }
    if headers.len() != fields.len() + 1 {
        return Err(Error::param("headers", "need one header per column"));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", headers.join(","))?;
    for i in 0..grid.len() {
        write!(out, "{}", fmt_sci(grid.node(i)))?;
        for f in fields {
            write!(out, ",{}", fmt_sci(f.values[i]))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// C-style `%.12e`.
pub fn fmt_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Compactly supported initial data `(u0, u1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: Field,
    pub u1: Field,
    /// Every node with `r >= support_radius` carries zero data.
    pub support_radius: f64,
}

/// Smooth bump data `amp · exp(-1/(1 - s^2))`, `s = (r - center)/width`.
pub fn bump_initial_data(
    grid: &RadialGrid,
    center: f64,
    width: f64,
    amp_u0: f64,
    amp_u1: f64,
) -> Result<InitialData> {
    if !(width > 0.0) {
        return Err(Error::param("width", "must be positive"));
    }
    if !(center - width > grid.r0()) {
        return Err(Error::param(
            "center",
            format!(
                "bump [{}, {}] touches the obstacle at r0 = {}",
                center - width,
                center + width,
                grid.r0()
            ),
        ));
    }
    if !(center + width < grid.r_max()) {
        return Err(Error::param(
            "center",
            format!(
                "bump [{}, {}] reaches r_max = {}",
                center - width,
                center + width,
                grid.r_max()
            ),
        ));
    }
    let shape = Field::from_fn(*grid, |r| unit_bump((r - center) / width));
    let scale = |amp: f64| Field::from_vec(*grid, shape.values.iter().map(|s| amp * s).collect());
    Ok(InitialData {
        u0: scale(amp_u0),
        u1: scale(amp_u1),
        support_radius: center + width,
    })
}

/// Measure used by [`weighted_l2_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `dx`
    Lebesgue,
    /// `dμ = a dx`
    Dmu,
    /// `‖√a f‖_{L²(dx)}`, with `√a` applied to the samples before squaring.
    DmuSqrtAOutside,
}

pub fn weighted_l2_norm(f: &Field, p: &DampingProfile, kind: WeightKind) -> f64 {
    let grid = f.grid();
    let q = grid.quadrature_weights();
    let sum: f64 = match kind {
        WeightKind::Lebesgue => q.iter().zip(&f.values).map(|(w, v)| w * v * v).sum(),
        WeightKind::Dmu => q
            .iter()
            .zip(grid.nodes().zip(&f.values))
            .map(|(w, (r, v))| w * p.eval(r) * v * v)
            .sum(),
        WeightKind::DmuSqrtAOutside => q
            .iter()
            .zip(grid.nodes().zip(&f.values))
            .map(|(w, (r, v))| {
                let g = p.eval(r).sqrt() * v;
                w * g * g
            })
            .sum(),
    };
    sum.max(0.0).sqrt()
}

/// `∫ samples · weight · ω_N r^(N-1) dr`.
pub fn quadrature(samples: &Field, weight: &Field) -> Result<f64> {
    samples.same_grid(weight)?;
    let q = samples.grid().quadrature_weights();
    Ok(q
        .iter()
        .zip(samples.values.iter().zip(&weight.values))
        .map(|(w, (s, g))| w * s * g)
        .sum())
}

/// Centered first derivative, second-order one-sided at the ends.
pub fn gradient(f: &[f64], dr: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) / (2.0 * dr);
    }
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dr);
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dr);
    g
}
