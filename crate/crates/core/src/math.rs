//! Thin wrappers over `libm` so the rest of the crate reads like std code.

pub(crate) use libm::{acos, atan2, cos, exp, fabs as abs, floor, log, pow, sin, sqrt, tgamma};

pub(crate) const PI: f64 = core::f64::consts::PI;
pub(crate) const TAU: f64 = core::f64::consts::TAU;

/// Integer power by repeated squaring (bit-stable, unlike `pow`).
#[inline]
pub(crate) fn powi(mut x: f64, n: i32) -> f64 {
    let mut e = n.unsigned_abs();
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= x;
        }
        x *= x;
        e >>= 1;
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub(crate) fn normalize(a: &mut [f64]) -> f64 {
    let len = norm(a);
    if len > 0.0 {
        a.iter_mut().for_each(|x| *x /= len);
    }
    len
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Surface measure of the unit sphere `S^{n-1}` in `R^n`.
pub(crate) fn sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * pow(PI, half) / tgamma(half)
}

pub(crate) fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Median of a scratch slice (reordered in place). Empty input gives NaN.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}
