//! Orlicz energy densities `phi`, regularized Euclidean lengths, the energy
//! `E_phi[u] = int phi(|grad u|)`, and pointwise convexity/monotonicity tools.

use crate::error::{FlowError, Result};
use crate::fem::{element_gradients, FeFunction};
use crate::mesh::Mesh;
use crate::scalar::{dot, norm, scale, sub, Real, Vec2};

/// Smoothing of the Euclidean length near the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regularization {
    /// `|a|_eps = (|a|^2 + eps^2)^{1/2}`.
    Standard,
    /// Quadratic core of radius `eps`, exact power outside.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityKind {
    PDirichletStandard,
    PDirichletTruncated,
    PrandtlEyring,
}

/// Radial energy density with `phi(0) = 0`.
pub trait OrliczDensity<T: Real> {
    fn phi(&self, r: T) -> T;
    fn dphi(&self, r: T) -> T;
    /// `phi'(r) / r`, extended to `r = 0` by its limit where that is finite.
    fn weight(&self, r: T) -> Result<T>;
}

/// The densities shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density<T> {
    pub kind: DensityKind,
    /// Exponent in `[1, 2)`; ignored for Prandtl-Eyring.
    pub p: T,
    pub eps: T,
}

impl<T: Real> Density<T> {
    /// `phi(r) = (1/p)|r|_eps^p - (1/p)|0|_eps^p`.
    pub fn p_dirichlet(reg: Regularization, p: T, eps: T) -> Result<Self> {
        if !(p >= T::one() && p < T::lit(2.0)) {
            return Err(FlowError::InvalidParameter(format!("exponent p must lie in [1, 2), got {p}")));
        }
        if !(eps >= T::zero()) || !eps.is_finite() {
            return Err(FlowError::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
        }
        let kind = match reg {
            Regularization::Standard => DensityKind::PDirichletStandard,
            Regularization::Truncated => DensityKind::PDirichletTruncated,
        };
        Ok(Density { kind, p, eps })
    }

    /// `phi(r) = r ln(e + r)`.
    pub fn prandtl_eyring() -> Self {
        Density { kind: DensityKind::PrandtlEyring, p: T::one(), eps: T::zero() }
    }

    /// Regularized total variation density `|r|_eps - eps`.
    pub fn total_variation(eps: T) -> Result<Self> {
        Self::p_dirichlet(Regularization::Standard, T::one(), eps)
    }

    pub fn regularization(&self) -> Option<Regularization> {
        match self.kind {
            DensityKind::PDirichletStandard => Some(Regularization::Standard),
            DensityKind::PDirichletTruncated => Some(Regularization::Truncated),
            DensityKind::PrandtlEyring => None,
        }
    }
}

impl<T: Real> OrliczDensity<T> for Density<T> {
    fn phi(&self, r: T) -> T {
        let (p, eps) = (self.p, self.eps);
        match self.kind {
            DensityKind::PDirichletStandard => {
                if eps == T::zero() {
                    r.powf(p) / p
                } else {
                    let s = r / eps;
                    eps.powf(p) / p * ((p / T::lit(2.0)) * (s * s).ln_1p()).exp_m1()
                }
            }
            DensityKind::PDirichletTruncated => truncated_pow(r, eps, p) / p,
            DensityKind::PrandtlEyring => r * (T::E() + r).ln(),
        }
    }

    fn dphi(&self, r: T) -> T {
        let (p, eps) = (self.p, self.eps);
        match self.kind {
            DensityKind::PDirichletStandard => {
                if r == T::zero() {
                    if eps == T::zero() && p == T::one() {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    r * (r * r + eps * eps).powf((p - T::lit(2.0)) / T::lit(2.0))
                }
            }
            DensityKind::PDirichletTruncated => {
                if r == T::zero() {
                    T::zero()
                } else {
                    r * eps.max(r).powf(p - T::lit(2.0))
                }
            }
            DensityKind::PrandtlEyring => (T::E() + r).ln() + r / (T::E() + r),
        }
    }

    fn weight(&self, r: T) -> Result<T> {
        let (p, eps) = (self.p, self.eps);
        match self.kind {
            DensityKind::PDirichletStandard => {
                if r == T::zero() && eps == T::zero() {
                    return Err(FlowError::SingularWeight);
                }
                Ok((r * r + eps * eps).powf((p - T::lit(2.0)) / T::lit(2.0)))
            }
            DensityKind::PDirichletTruncated => {
                let m = eps.max(r);
                if m == T::zero() {
                    return Err(FlowError::SingularWeight);
                }
                Ok(m.powf(p - T::lit(2.0)))
            }
            DensityKind::PrandtlEyring => {
                if r == T::zero() {
                    return Err(FlowError::SingularWeight);
                }
                Ok(self.dphi(r) / r)
            }
        }
    }
}

fn truncated_pow<T: Real>(r: T, eps: T, p: T) -> T {
    let half_p = p / T::lit(2.0);
    if r >= eps {
        r.powf(p) + (half_p - T::one()) * eps.powf(p)
    } else {
        half_p * eps.powf(p - T::lit(2.0)) * r * r
    }
}

/// Standard kind: `|a|_eps`. Truncated kind: `|a|_eps^p`.
pub fn reg_length<T: Real>(a: Vec2<T>, eps: T, reg: Regularization, p: T) -> T {
    let r = norm(a);
    match reg {
        Regularization::Standard => r.hypot(eps),
        Regularization::Truncated => truncated_pow(r, eps, p),
    }
}

/// `| |a|_eps^p - |a|^p | / eps^p`.
pub fn approx_mod_gap<T: Real>(a: Vec2<T>, eps: T, p: T, reg: Regularization) -> T {
    let r = norm(a);
    match reg {
        Regularization::Standard => {
            // (r^2 + eps^2)^{p/2} - r^p, evaluated without cancellation.
            let diff = if r == T::zero() {
                eps.powf(p)
            } else {
                let q = eps / r;
                r.powf(p) * ((p / T::lit(2.0)) * (q * q).ln_1p()).exp_m1()
            };
            diff.abs() / eps.powf(p)
        }
        Regularization::Truncated => (truncated_pow(r, eps, p) - r.powf(p)).abs() / eps.powf(p),
    }
}

/// `E_phi[u] = sum_T |T| phi(|grad u_T|)`.
pub fn energy<T: Real, D: OrliczDensity<T> + ?Sized>(mesh: &Mesh<T>, u: &FeFunction<T>, d: &D) -> Result<T> {
    let grads = element_gradients(mesh, u)?;
    Ok(energy_of_gradients(mesh, &grads, d))
}

pub(crate) fn energy_of_gradients<T: Real, D: OrliczDensity<T> + ?Sized>(
    mesh: &Mesh<T>,
    grads: &[Vec2<T>],
    d: &D,
) -> T {
    grads.iter().zip(mesh.geometries()).map(|(g, geo)| geo.area * d.phi(norm(*g))).sum()
}

/// Left minus right side of the pointwise stability inequality
/// `w(|a|) b.(b-a) >= phi(|b|) - phi(|a|) + w(|a|)/2 |b-a|^2`, with `w = phi'(r)/r`.
pub fn orlicz_gap<T: Real, D: OrliczDensity<T> + ?Sized>(a: Vec2<T>, b: Vec2<T>, d: &D) -> Result<T> {
    let w = d.weight(norm(a))?;
    let diff = sub(b, a);
    let half = T::lit(0.5);
    Ok(w * dot(b, diff) - (d.phi(norm(b)) - d.phi(norm(a)) + half * w * dot(diff, diff)))
}

/// `A(a) = (phi'(|a|)/|a|) a`, with `A(0) = 0`.
pub fn a_operator<T: Real, D: OrliczDensity<T> + ?Sized>(a: Vec2<T>, d: &D) -> Result<Vec2<T>> {
    let r = norm(a);
    if r == T::zero() {
        return Ok([T::zero(); 2]);
    }
    Ok(scale(d.weight(r)?, a))
}

/// Shifted density `phi_alpha(s) = int_0^s phi'(alpha + t) / (alpha + t) t dt`,
/// integrated adaptively to absolute tolerance `1e-12`.
pub fn phi_shifted<T: Real, D: OrliczDensity<T> + ?Sized>(alpha: T, s: T, d: &D) -> Result<T> {
    if !(alpha >= T::zero() && s >= T::zero()) {
        return Err(FlowError::InvalidParameter(format!("phi_shifted needs alpha, s >= 0 (got {alpha}, {s})")));
    }
    if s == T::zero() {
        return Ok(T::zero());
    }
    let integrand = |t: T| -> Result<T> {
        if alpha == T::zero() {
            Ok(d.dphi(t))
        } else {
            Ok(d.weight(alpha + t)? * t)
        }
    };
    adaptive_simpson(&integrand, T::zero(), s, T::lit(1e-12))
}

fn adaptive_simpson<T: Real, F: Fn(T) -> Result<T>>(f: &F, a: T, b: T, tol: T) -> Result<T> {
    let (fa, fb) = (f(a)?, f(b)?);
    let m = (a + b) * T::lit(0.5);
    let fm = f(m)?;
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, F: Fn(T) -> Result<T>>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> Result<T> {
    let m = (a + b) * T::lit(0.5);
    let (lm, rm) = ((a + m) * T::lit(0.5), (m + b) * T::lit(0.5));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / T::lit(6.0) * (fa + T::lit(4.0) * flm + fm);
    let right = (b - m) / T::lit(6.0) * (fm + T::lit(4.0) * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return Ok(left + right + delta / T::lit(15.0));
    }
    let half_tol = tol * T::lit(0.5);
    Ok(simpson_step(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?)
}

/// Left minus right side of the monotonicity identity of the regularized
/// 1-Laplacian, `(a/|a|_e - b/|b|_e).(a-b) = |(a,e)/|a|_e - (b,e)/|b|_e|^2 (|a|_e + |b|_e)/2`.
pub fn fv_identity_gap<T: Real>(a: Vec2<T>, b: Vec2<T>, eps: T) -> T {
    let la = norm(a).hypot(eps);
    let lb = norm(b).hypot(eps);
    let lhs = dot(sub(scale(T::one() / la, a), scale(T::one() / lb, b)), sub(a, b));
    let lifted = [a[0] / la - b[0] / lb, a[1] / la - b[1] / lb, eps / la - eps / lb];
    let sq: T = lifted.iter().map(|&x| x * x).sum();
    lhs - sq * (la + lb) * T::lit(0.5)
}

/// Sampled checks of the structural conditions on a density.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T> {
    pub phi_at_zero: T,
    /// Secant test on `{0} ∪ grid`.
    pub convex: bool,
    pub derivative_finite: bool,
    pub weight_positive: bool,
    pub weight_nonincreasing: bool,
    /// Range of the sampled ratio `phi''(s) s / phi'(s)`.
    pub c3_ratio_min: T,
    pub c3_ratio_max: T,
    /// Whether the sampled ratio stays within caller-supplied bounds.
    pub c3_within_bounds: Option<bool>,
    /// Relative accuracy assumed for the finite-difference `phi''`.
    pub fd_relative_tolerance: T,
}

impl<T: Real> ConditionReport<T> {
    /// Convex, `C^1` and normalized.
    pub fn c1(&self) -> bool {
        self.convex && self.derivative_finite && self.phi_at_zero.abs() <= T::epsilon()
    }

    /// Weight positive and nonincreasing on the grid.
    pub fn c2(&self) -> bool {
        self.weight_positive && self.weight_nonincreasing
    }
}

pub fn check_conditions<T: Real, D: OrliczDensity<T> + ?Sized>(
    d: &D,
    grid: &[T],
    c3_bounds: Option<(T, T)>,
) -> Result<ConditionReport<T>> {
    if grid.is_empty() || grid.iter().any(|&r| !(r > T::zero())) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FlowError::InvalidParameter("grid must be nonempty, positive and strictly increasing".into()));
    }
    let rel = T::lit(1e-10);
    let mut points = vec![T::zero()];
    points.extend_from_slice(grid);
    let phis: Vec<T> = points.iter().map(|&r| d.phi(r)).collect();
    let convex = points.windows(3).zip(phis.windows(3)).all(|(r, f)| {
        let chord = ((r[2] - r[1]) * f[0] + (r[1] - r[0]) * f[2]) / (r[2] - r[0]);
        f[1] <= chord + rel * (f[1].abs() + chord.abs()) + T::min_positive_value()
    });
    let derivative_finite = grid.iter().all(|&r| d.dphi(r).is_finite());

    let weights: Vec<Option<T>> = grid.iter().map(|&r| d.weight(r).ok()).collect();
    let weight_positive = weights.iter().all(|w| matches!(w, Some(w) if *w > T::zero() && w.is_finite()));
    let weight_nonincreasing = weight_positive
        && weights.windows(2).all(|w| {
            let (a, b) = (w[0].unwrap(), w[1].unwrap());
            b <= a * (T::one() + rel)
        });

    let fd_step = T::lit(1e-6);
    let mut c3_ratio_min = T::infinity();
    let mut c3_ratio_max = T::neg_infinity();
    for &s in grid {
        let h = fd_step * s;
        let second = (d.dphi(s + h) - d.dphi(s - h)) / (h + h);
        let ratio = second * s / d.dphi(s);
        c3_ratio_min = c3_ratio_min.min(ratio);
        c3_ratio_max = c3_ratio_max.max(ratio);
    }
    let fd_relative_tolerance = T::lit(1e-5);
    let c3_within_bounds = c3_bounds.map(|(lo, hi)| {
        c3_ratio_min >= lo * (T::one() - fd_relative_tolerance) && c3_ratio_max <= hi * (T::one() + fd_relative_tolerance)
    });
    Ok(ConditionReport {
        phi_at_zero: phis[0],
        convex,
        derivative_finite,
        weight_positive,
        weight_nonincreasing,
        c3_ratio_min,
        c3_ratio_max,
        c3_within_bounds,
        fd_relative_tolerance,
    })
}

/// `n` log-spaced points between `lo` and `hi`.
pub fn log_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let (a, b) = (lo.ln(), hi.ln());
    let steps = T::from_usize_lossy(n.max(2) - 1);
    (0..n).map(|i| (a + (b - a) * T::from_usize_lossy(i) / steps).exp()).collect()
}
