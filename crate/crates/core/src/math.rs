// f64 transcendental functions are not in `core`; route everything through libm.
pub(crate) use libm::{atan2, cos, fabs as abs, hypot, sin, sqrt};

#[inline]
pub(crate) fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}
