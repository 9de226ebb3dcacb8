//! Backward difference quotients `d_t c^k = (c^k - c^{k-1}) / tau`.

use crate::scalar::Real;

#[inline]
pub fn backward_difference<T: Real>(current: T, previous: T, tau: T) -> T {
    (current - previous) / tau
}

/// Element-wise backward difference of two equally long sequences.
pub fn backward_difference_slice<T: Real>(current: &[T], previous: &[T], tau: T) -> Vec<T> {
    current.iter().zip(previous).map(|(&c, &p)| backward_difference(c, p, tau)).collect()
}

/// Defect of `c^k d_t c^k = 1/2 d_t |c^k|^2 + tau/2 |d_t c^k|^2`; zero up to rounding.
pub fn product_rule_defect<T: Real>(current: T, previous: T, tau: T) -> T {
    let half = T::lit(0.5);
    let dt = backward_difference(current, previous, tau);
    let dt_sq = backward_difference(current * current, previous * previous, tau);
    current * dt - half * dt_sq - half * tau * dt * dt
}
