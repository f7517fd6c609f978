//! One-dimensional rules and interpolation on `[-1, 1]`, plus golden-section
//! search.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, cos, PI};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(count >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let n = count as f64;
    for i in 0..count.div_ceil(2) {
        let mut x = cos(PI * (i as f64 + 0.75) / (n + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(count, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if abs(dx) < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(count, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[count - 1 - i] = x;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    if count % 2 == 1 {
        nodes[count / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(degree: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if degree == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=degree {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = degree as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Lobatto–Legendre nodes and weights for polynomial degree `degree`
/// (`degree + 1` nodes, endpoints included), nodes ascending.
pub fn gauss_lobatto(degree: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(degree >= 1, "Lobatto rule needs degree >= 1");
    let n = degree;
    let np = n + 1;
    let mut x: Vec<f64> = (0..np).map(|i| cos(PI * i as f64 / n as f64)).collect();
    let mut p = vec![0.0; np * np];
    for _ in 0..200 {
        let old = x.clone();
        for i in 0..np {
            p[i * np] = 1.0;
            p[i * np + 1] = x[i];
            for k in 2..=n {
                let kf = k as f64;
                p[i * np + k] =
                    ((2.0 * kf - 1.0) * x[i] * p[i * np + k - 1] - (kf - 1.0) * p[i * np + k - 2]) / kf;
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..np {
            x[i] = old[i] - (x[i] * p[i * np + n] - p[i * np + n - 1]) / (np as f64 * p[i * np + n]);
            err = err.max(abs(x[i] - old[i]));
        }
        if err < 1e-16 {
            break;
        }
    }
    let nf = n as f64;
    let mut w: Vec<f64> = (0..np).map(|i| 2.0 / (nf * (nf + 1.0) * p[i * np + n] * p[i * np + n])).collect();
    x.reverse();
    w.reverse();
    x[0] = -1.0;
    x[n] = 1.0;
    (x, w)
}

/// Lagrange interpolation on a fixed node set via barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(nodes: Vec<f64>) -> Self {
        let bary = nodes
            .iter()
            .enumerate()
            .map(|(k, &xk)| {
                let prod: f64 = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != k)
                    .map(|(_, &xm)| xk - xm)
                    .product();
                1.0 / prod
            })
            .collect();
        Self { nodes, bary }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Basis values `l_k(x)` and derivatives `l_k'(x)`; `x` may lie outside
    /// the node interval, in which case the polynomial is extrapolated.
    pub fn eval(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        let q = self.nodes.len();
        if let Some(j) = self.nodes.iter().position(|&xn| abs(x - xn) < 1e-14) {
            // Differentiation-matrix row j.
            let mut diag = 0.0;
            for k in 0..q {
                values[k] = if k == j { 1.0 } else { 0.0 };
                if k != j {
                    let d = (self.bary[k] / self.bary[j]) / (self.nodes[j] - self.nodes[k]);
                    derivs[k] = d;
                    diag -= d;
                }
            }
            derivs[j] = diag;
            return;
        }
        let mut denom = 0.0;
        for k in 0..q {
            values[k] = self.bary[k] / (x - self.nodes[k]);
            denom += values[k];
        }
        let inv_sum: f64 = self.nodes.iter().map(|&xn| 1.0 / (x - xn)).sum();
        for k in 0..q {
            values[k] /= denom;
            derivs[k] = values[k] * (inv_sum - 1.0 / (x - self.nodes[k]));
        }
    }
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`; returns the
/// abscissa of the best point seen.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while abs(b - a) > tol && iterations < 400 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for count in 1..=12 {
            let (x, w) = gauss_legendre(count);
            for degree in 0..(2 * count) {
                let got: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * libm::pow(xi, degree as f64)).sum();
                let want = if degree % 2 == 1 { 0.0 } else { 2.0 / (degree as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "count {count} degree {degree}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn lobatto_has_endpoints_and_exactness() {
        for degree in 1..=10 {
            let (x, w) = gauss_lobatto(degree);
            assert_eq!(x.len(), degree + 1);
            assert_eq!(x[0], -1.0);
            assert_eq!(x[degree], 1.0);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for p in 0..(2 * degree) {
                let got: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * libm::pow(xi, p as f64)).sum();
                let want = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((got - want).abs() < 1e-12, "degree {degree} power {p}");
            }
        }
    }

    #[test]
    fn lagrange_reproduces_cubic_and_derivative() {
        let (nodes, _) = gauss_lobatto(5);
        let basis = LagrangeBasis::new(nodes.clone());
        let f = |x: f64| 2.0 * x * x * x - x + 0.5;
        let df = |x: f64| 6.0 * x * x - 1.0;
        let mut v = vec![0.0; 6];
        let mut d = vec![0.0; 6];
        for &x in &[-0.77, 0.0, 0.31, nodes[2], 1.2] {
            basis.eval(x, &mut v, &mut d);
            let fv: f64 = v.iter().zip(&nodes).map(|(l, &xn)| l * f(xn)).sum();
            let dv: f64 = d.iter().zip(&nodes).map(|(l, &xn)| l * f(xn)).sum();
            assert_relative_eq!(fv, f(x), epsilon = 1e-12);
            assert_relative_eq!(dv, df(x), epsilon = 1e-11);
        }
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let x = golden_section_min(|x| (x - 0.3) * (x - 0.3) + 1.0, -2.0, 5.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
    }
}
