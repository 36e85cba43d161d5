//! The change of variables `Ψ(x) = |x|^{α/2} x`, the isometry `J` and the
//! transformed generator `B = J^{-1} L J`, all restricted to radial functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{unit_bump, weighted_l2_norm, DampingProfile, Field, RadialGrid, WeightKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub alpha: f64,
    pub dim: usize,
    /// Exponent `(N-2)α/4` in `J`.
    pub beta: f64,
    /// Coefficient `(N-2)²α(4+α)/16` of the Hardy potential in `B`.
    pub hardy_coeff: f64,
}

impl TransformParams {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", "must be nonnegative"));
        }
        if dim < 2 {
            return Err(Error::param("N", "dimension must be at least 2"));
        }
        let k = (dim - 2) as f64;
        Ok(Self {
            alpha,
            dim,
            beta: k * alpha / 4.0,
            hardy_coeff: k * k * alpha * (4.0 + alpha) / 16.0,
        })
    }

    /// `1 + α/2`, the radial exponent of `Ψ`.
    pub fn kappa(&self) -> f64 {
        1.0 + 0.5 * self.alpha
    }

    fn j_scale(&self) -> f64 {
        self.kappa().sqrt()
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::param("r", format!("radius must be positive, got {r}")))
    }
}

/// `|Ψ(x)| = r^{1+α/2}`.
pub fn psi_map(r: f64, alpha: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(r.powf(1.0 + 0.5 * alpha))
}

/// `|Ψ^{-1}(y)| = ρ^{2/(2+α)}`.
pub fn psi_inverse(rho: f64, alpha: f64) -> Result<f64> {
    check_radius(rho)?;
    Ok(rho.powf(1.0 / (1.0 + 0.5 * alpha)))
}

/// `det DΨ = (2+α)/2 · r^{Nα/2}`.
pub fn jacobian_det(r: f64, alpha: f64, dim: usize) -> f64 {
    (1.0 + 0.5 * alpha) * r.powf(dim as f64 * alpha / 2.0)
}

/// Uniform grid on `[Ψ(r0), Ψ(r_max)]` with the same node count.
pub fn image_grid(grid: &RadialGrid, alpha: f64) -> Result<RadialGrid> {
    RadialGrid::new(
        psi_map(grid.r0(), alpha)?,
        psi_map(grid.r_max(), alpha)?,
        grid.len(),
        grid.dim(),
    )
}

/// `Jv(x) = √((2+α)/2) r^β v(Ψ(x))`, where `v_on_image[i] = v(Ψ(r_i))`.
pub fn j_transform(v_on_image: &[f64], grid: &RadialGrid, tp: &TransformParams) -> Result<Field> {
    grid.check_len(v_on_image.len())?;
    if grid.dim() != tp.dim {
        return Err(Error::GridMismatch);
    }
    let c = tp.j_scale();
    let out = grid
        .nodes()
        .zip(v_on_image)
        .map(|(r, v)| c * r.powf(tp.beta) * v)
        .collect();
    Field::new(*grid, out)
}

/// `J^{-1} f` sampled at the image points `Ψ(r_i)`.
pub fn j_inverse(f: &Field, tp: &TransformParams) -> Result<Vec<f64>> {
    if f.grid().dim() != tp.dim {
        return Err(Error::GridMismatch);
    }
    let c = tp.j_scale();
    Ok(f.grid()
        .nodes()
        .zip(f.values())
        .map(|(r, v)| v / (c * r.powf(tp.beta)))
        .collect())
}

/// `m̃(y) = m(Ψ^{-1}(y))` with `m(x) = |x|^{-α} a(x)`, on a grid of image radii.
pub fn m_tilde(p: &DampingProfile, image: &RadialGrid) -> Result<Field> {
    let mut out = Vec::with_capacity(image.len());
    for rho in image.nodes() {
        let r = psi_inverse(rho, p.alpha)?;
        out.push(r.powf(-p.alpha) * p.eval(r));
    }
    Field::new(*image, out)
}

/// `Bv = m̃^{-1} (-κ² (v'' + (N-1)/ρ v') - H v/ρ²)` by centered differences,
/// zero at both ends.
pub fn apply_b_radial(v: &Field, tp: &TransformParams, m_tilde: &Field) -> Result<Field> {
    v.same_grid(m_tilde)?;
    let grid = v.grid();
    if grid.dim() != tp.dim {
        return Err(Error::GridMismatch);
    }
    let h = grid.dr();
    let k = (tp.dim - 1) as f64;
    let kappa2 = tp.kappa() * tp.kappa();
    let f = v.values();
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let rho = grid.node(i);
        let lap = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h) + k / rho * (f[i + 1] - f[i - 1]) / (2.0 * h);
        out[i] = (-kappa2 * lap - tp.hardy_coeff * f[i] / (rho * rho)) / m_tilde.values()[i];
    }
    Ok(Field::from_vec(*grid, out))
}

/// `ψ₀(ρ) = ρ^{-β/κ} (1 - ρ^{(2-N)/κ})`, the image under `J^{-1}` (up to a
/// constant) of the harmonic function `1 - |x|^{2-N}`. Vanishes at `ρ = 1`.
pub fn psi0(rho: f64, tp: &TransformParams) -> f64 {
    let kappa = tp.kappa();
    rho.powf(-tp.beta / kappa) * (1.0 - rho.powf((2.0 - tp.dim as f64) / kappa))
}

/// `‖Bψ₀‖ / ‖ψ₀‖` in `L²(dν)` over the interior of `image`; requires `r0 = 1`.
pub fn psi0_residual(image: &RadialGrid, tp: &TransformParams, p: &DampingProfile) -> Result<f64> {
    if (image.r0() - 1.0).abs() > 1e-12 {
        return Err(Error::param("r0", "the stationary solution vanishes on the unit sphere"));
    }
    let v = Field::from_fn(*image, |rho| psi0(rho, tp));
    let m = m_tilde(p, image)?;
    let mut bv = apply_b_radial(&v, tp, &m)?;
    // the outer node carries no boundary condition for ψ₀
    let n = bv.len();
    bv.values_mut()[n - 1] = 0.0;
    let q = image.quadrature_weights();
    let norm = |f: &Field| -> f64 {
        f.values()
            .iter()
            .zip(m.values())
            .zip(&q)
            .map(|((x, mt), w)| w * mt * x * x)
            .sum::<f64>()
            .sqrt()
    };
    Ok(norm(&bv) / norm(&v))
}

/// Relative gap between `‖Jv‖_{L²(dμ)}` and `‖v‖_{L²(dν)}` for a bump
/// centered in the image interval.
pub fn isometry_defect(p: &DampingProfile, grid: &RadialGrid, tp: &TransformParams) -> Result<f64> {
    if (p.alpha - tp.alpha).abs() > 1e-15 {
        return Err(Error::param("alpha", "damping and transform disagree"));
    }
    let image = image_grid(grid, tp.alpha)?;
    let (lo, hi) = (image.r0(), image.r_max());
    let v = |rho: f64| unit_bump((rho - 0.5 * (lo + hi)) / (0.45 * (hi - lo)));
    let mut on_image = Vec::with_capacity(grid.len());
    for r in grid.nodes() {
        on_image.push(v(psi_map(r, tp.alpha)?));
    }
    let jv = j_transform(&on_image, grid, tp)?;
    let lhs = weighted_l2_norm(&jv, p, WeightKind::Dmu);
    let m = m_tilde(p, &image)?;
    let q = image.quadrature_weights();
    let rhs: f64 = image
        .nodes()
        .enumerate()
        .map(|(i, rho)| q[i] * m.values()[i] * v(rho).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((lhs - rhs).abs() / rhs)
}
