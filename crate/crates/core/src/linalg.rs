//! Tiny dense helpers for the handful of small systems the crate solves.

use alloc::vec;
use alloc::vec::Vec;

/// Solves the `m x m` system `a x = b` in place by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular.
pub(crate) fn solve(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if crate::math::abs(a[r * m + col]) > crate::math::abs(a[piv * m + col]) {
                piv = r;
            }
        }
        if crate::math::abs(a[piv * m + col]) < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            b.swap(col, piv);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let mut s = b[r];
        for c in r + 1..m {
            s -= a[r * m + c] * x[c];
        }
        x[r] = s / a[r * m + r];
    }
    Some(x)
}

/// Inverse and determinant of a small symmetric positive-definite matrix.
pub(crate) fn inverse(a: &[f64], m: usize) -> Option<(Vec<f64>, f64)> {
    let mut inv = vec![0.0; m * m];
    for col in 0..m {
        let mut e = vec![0.0; m];
        e[col] = 1.0;
        let x = solve(a.to_vec(), e, m)?;
        for r in 0..m {
            inv[r * m + col] = x[r];
        }
    }
    Some((inv, determinant(a, m)))
}

pub(crate) fn determinant(a: &[f64], m: usize) -> f64 {
    let mut a = a.to_vec();
    let mut det = 1.0;
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if crate::math::abs(a[r * m + col]) > crate::math::abs(a[piv * m + col]) {
                piv = r;
            }
        }
        let p = a[piv * m + col];
        if p == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            det = -det;
        }
        det *= p;
        for r in col + 1..m {
            let f = a[r * m + col] / p;
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
        }
    }
    det
}

/// A unit vector spanning the null space of the `(n-1) x n` row matrix `rows`
/// (row-major), or `None` when the rows are dependent.
pub(crate) fn null_vector(rows: &[f64], n: usize) -> Option<Vec<f64>> {
    // Cofactor expansion: component i is (-1)^i det of rows with column i removed.
    let m = n - 1;
    let mut v = vec![0.0; n];
    for i in 0..n {
        let mut minor = Vec::with_capacity(m * m);
        for r in 0..m {
            for c in 0..n {
                if c != i {
                    minor.push(rows[r * n + c]);
                }
            }
        }
        let d = determinant(&minor, m);
        v[i] = if i % 2 == 0 { d } else { -d };
    }
    let len = crate::math::normalize(&mut v);
    (len > 1e-12).then_some(v)
}
