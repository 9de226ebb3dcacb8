//! Closed-form total variation flows used as error oracles: the decreasing
//! disk `(1 - t d)^+ chi_{B_1}` and the decreasing cone with initial datum
//! `max{1 - |x|, 0}`, together with their calibrating flux fields `p` with
//! `du/dt = div p` and `|p| <= 1`.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExactKind {
    Disk,
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactSolution {
    pub kind: ExactKind,
    pub dim: usize,
}

fn radius<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

impl ExactSolution {
    pub fn disk() -> Self {
        ExactSolution { kind: ExactKind::Disk, dim: 2 }
    }

    pub fn cone() -> Self {
        ExactSolution { kind: ExactKind::Cone, dim: 2 }
    }

    pub fn with_dim(kind: ExactKind, dim: usize) -> Self {
        assert!(dim >= 2, "dimension must be at least 2");
        ExactSolution { kind, dim }
    }

    fn d<T: Real>(&self) -> T {
        T::from_usize_lossy(self.dim)
    }

    /// Disk: `1/d`. Cone: `(d+1)/(4 d^2)`, capped by `1/(4(d-1))` so the
    /// outer radius stays real.
    pub fn extinction_time<T: Real>(&self) -> T {
        let d = self.d::<T>();
        match self.kind {
            ExactKind::Disk => T::one() / d,
            ExactKind::Cone => {
                let four = T::lit(4.0);
                ((d + T::one()) / (four * d * d)).min(T::one() / (four * (d - T::one())))
            }
        }
    }

    /// Inner plateau radius `s(t) = sqrt((d+1) t)` of the cone.
    pub fn cone_plateau_radius<T: Real>(&self, t: T) -> T {
        ((self.d::<T>() + T::one()) * t).sqrt()
    }

    /// Outer support radius `r(t) = (1 + sqrt(1 - 4 t (d-1))) / 2` of the cone.
    pub fn cone_support_radius<T: Real>(&self, t: T) -> T {
        let arg = T::one() - T::lit(4.0) * t * (self.d::<T>() - T::one());
        (T::one() + arg.max(T::zero()).sqrt()) * T::lit(0.5)
    }

    /// Initial datum, i.e. `eval(0, x)`.
    pub fn initial<T: Real>(&self, x: &[T]) -> T {
        self.eval(T::zero(), x)
    }

    pub fn eval<T: Real>(&self, t: T, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        let rho = radius(x);
        let d = self.d::<T>();
        match self.kind {
            ExactKind::Disk => {
                if rho <= T::one() {
                    (T::one() - t * d).max(T::zero())
                } else {
                    T::zero()
                }
            }
            ExactKind::Cone => {
                if t <= T::zero() {
                    return (T::one() - rho).max(T::zero());
                }
                if t >= self.extinction_time() {
                    return T::zero();
                }
                let s = self.cone_plateau_radius(t);
                let r = self.cone_support_radius(t);
                let dm1 = d - T::one();
                if rho <= s {
                    T::one() - s - t * dm1 / s
                } else if rho <= r {
                    T::one() - rho - t * dm1 / rho
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Calibrating flux `p(t, x)`.
    pub fn flux<T: Real>(&self, t: T, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        let rho = radius(x);
        let d = self.d::<T>();
        let scaled = |c: T| x.iter().map(|&v| -c * v).collect::<Vec<T>>();
        if t > self.extinction_time() || rho == T::zero() {
            return vec![T::zero(); self.dim];
        }
        match self.kind {
            ExactKind::Disk => {
                if rho <= T::one() {
                    scaled(T::one())
                } else {
                    scaled(T::one() / rho.powf(d))
                }
            }
            ExactKind::Cone => {
                let s = self.cone_plateau_radius(t);
                let r = self.cone_support_radius(t);
                if rho <= s {
                    scaled(T::one() / s)
                } else if rho <= r {
                    scaled(T::one() / rho)
                } else {
                    scaled(r.powf(d - T::one()) / rho.powf(d))
                }
            }
        }
    }

    /// Finite-difference comparison of `du/dt` with `div p` on `samples`.
    /// Space derivatives use centered differences of width `grid`; the time
    /// derivative uses a centered difference of width `grid / 100`.
    pub fn verify_flux_consistency<T: Real>(&self, t: T, grid: T, samples: &[Vec<T>]) -> FluxReport<T> {
        let dt = grid * T::lit(1e-2);
        let two = T::lit(2.0);
        let mut report = FluxReport { samples: 0, max_discrepancy: T::zero(), max_flux_norm: T::zero() };
        for x in samples {
            let du_dt = (self.eval(t + dt, x) - self.eval(t - dt, x)) / (two * dt);
            let mut div = T::zero();
            let mut probe = x.clone();
            for k in 0..self.dim {
                probe[k] = x[k] + grid;
                let plus = self.flux(t, &probe)[k];
                probe[k] = x[k] - grid;
                let minus = self.flux(t, &probe)[k];
                probe[k] = x[k];
                div += (plus - minus) / (two * grid);
            }
            report.samples += 1;
            report.max_discrepancy = report.max_discrepancy.max((du_dt - div).abs());
            report.max_flux_norm = report.max_flux_norm.max(radius(&self.flux(t, x)));
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxReport<T> {
    pub samples: usize,
    pub max_discrepancy: T,
    pub max_flux_norm: T,
}

/// Deterministic 2D sample points on an annulus `r_min <= |x| <= r_max`
/// (polar grid with `n_r` radii and `n_theta` angles).
pub fn annulus_samples<T: Real>(r_min: T, r_max: T, n_r: usize, n_theta: usize) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(n_r * n_theta);
    let denom = T::from_usize_lossy(n_r.max(2) - 1);
    for i in 0..n_r {
        let r = if n_r == 1 { r_min } else { r_min + (r_max - r_min) * T::from_usize_lossy(i) / denom };
        for j in 0..n_theta {
            // Offset the angle so that no sample sits on a coordinate axis.
            let th = T::TAU() * (T::from_usize_lossy(j) + T::lit(0.37)) / T::from_usize_lossy(n_theta);
            out.push(vec![r * th.cos(), r * th.sin()]);
        }
    }
    out
}
