//! Admissible weights `h` and statistical audits of their hypotheses.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{abs, norm, pow};
use crate::region::Region;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityFlags {
    pub claims_concave: bool,
    pub claims_homogeneous: bool,
    pub even_in_xn: bool,
}

/// A nonnegative weight on the closed cone.
///
/// `value` may return NaN outside its domain; callers treat that as
/// "unevaluable", never as zero.
pub trait Density: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn alpha(&self) -> f64;

    fn flags(&self) -> DensityFlags;

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        numeric_gradient(|p| self.value(p), x, out);
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn alpha(&self) -> f64 {
        (**self).alpha()
    }
    fn flags(&self) -> DensityFlags {
        (**self).flags()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
    fn has_analytic_gradient(&self) -> bool {
        (**self).has_analytic_gradient()
    }
}

impl<D: Density + ?Sized> Density for Box<D> {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn alpha(&self) -> f64 {
        (**self).alpha()
    }
    fn flags(&self) -> DensityFlags {
        (**self).flags()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
    fn has_analytic_gradient(&self) -> bool {
        (**self).has_analytic_gradient()
    }
}

/// Central differences with step `1e-6·(1 + |x|)`, falling back to a
/// one-sided difference when one neighbour is unevaluable.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], out: &mut [f64]) {
    let step = 1e-6 * (1.0 + norm(x));
    let f0 = f(x);
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + step;
        let fp = f(&p);
        p[i] = x[i] - step;
        let fm = f(&p);
        p[i] = x[i];
        out[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * step),
            (true, false) => (fp - f0) / step,
            (false, true) => (f0 - fm) / step,
            (false, false) => f64::NAN,
        };
    }
}

/// The densities addressable by string specs such as `monomial:0,1`,
/// `radial:1.5`, `const` and `reflect(monomial:0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinDensity {
    Constant,
    /// `Π x_i^{a_i}`.
    Monomial(Vec<f64>),
    /// `|x|^α`.
    Radial(f64),
    /// `h(x', |x_n|)`.
    Reflect(Box<BuiltinDensity>),
}

impl BuiltinDensity {
    pub fn monomial(exponents: Vec<f64>) -> Result<Self> {
        if let Some(a) = exponents.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::DensitySpec(format!("monomial exponents must be finite and >= 0, got {a}")));
        }
        if exponents.is_empty() {
            return Err(Error::DensitySpec("monomial needs at least one exponent".into()));
        }
        Ok(Self::Monomial(exponents))
    }

    pub fn radial(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::DensitySpec(format!("radial exponent must be finite and >= 0, got {alpha}")));
        }
        Ok(Self::Radial(alpha))
    }

    pub fn even_reflection(self) -> Self {
        match self {
            r @ Self::Reflect(_) => r,
            other => Self::Reflect(Box::new(other)),
        }
    }

    /// Dimension the density is tied to, if any.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Self::Monomial(a) => Some(a.len()),
            Self::Reflect(inner) => inner.dimension(),
            _ => None,
        }
    }
}

impl Density for BuiltinDensity {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Monomial(a) => {
                let mut v = 1.0;
                for (&xi, &ai) in x.iter().zip(a) {
                    if ai == 0.0 {
                        continue;
                    }
                    if xi < 0.0 {
                        return f64::NAN;
                    }
                    v *= pow(xi, ai);
                }
                v
            }
            Self::Radial(alpha) => {
                if *alpha == 0.0 {
                    1.0
                } else {
                    pow(norm(x), *alpha)
                }
            }
            Self::Reflect(inner) => with_reflected(x, |p| inner.value(p)),
        }
    }

    fn alpha(&self) -> f64 {
        match self {
            Self::Constant => 0.0,
            Self::Monomial(a) => a.iter().sum(),
            Self::Radial(alpha) => *alpha,
            Self::Reflect(inner) => inner.alpha(),
        }
    }

    fn flags(&self) -> DensityFlags {
        match self {
            Self::Constant => DensityFlags { claims_concave: true, claims_homogeneous: true, even_in_xn: false },
            Self::Monomial(a) => DensityFlags {
                claims_concave: a.iter().sum::<f64>() <= 1.0,
                claims_homogeneous: true,
                even_in_xn: false,
            },
            // |x|^α is convex for α ≥ 1 and not concave for any α > 0.
            Self::Radial(alpha) => {
                DensityFlags { claims_concave: *alpha == 0.0, claims_homogeneous: true, even_in_xn: false }
            }
            Self::Reflect(inner) => DensityFlags {
                claims_concave: false,
                claims_homogeneous: inner.flags().claims_homogeneous,
                even_in_xn: true,
            },
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Constant => out.iter_mut().for_each(|o| *o = 0.0),
            Self::Monomial(a) => {
                for i in 0..x.len() {
                    let ai = a.get(i).copied().unwrap_or(0.0);
                    if ai == 0.0 {
                        out[i] = 0.0;
                        continue;
                    }
                    let mut g = ai * pow(x[i], ai - 1.0);
                    for (j, (&xj, &aj)) in x.iter().zip(a).enumerate() {
                        if j != i && aj != 0.0 {
                            g *= if xj < 0.0 { f64::NAN } else { pow(xj, aj) };
                        }
                    }
                    out[i] = if x[i] < 0.0 { f64::NAN } else { g };
                }
            }
            Self::Radial(alpha) => {
                let r = norm(x);
                let c = if *alpha == 0.0 { 0.0 } else { alpha * pow(r, alpha - 2.0) };
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = c * xi;
                }
            }
            Self::Reflect(inner) => reflected_gradient(&**inner, x, out),
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        match self {
            Self::Reflect(inner) => inner.has_analytic_gradient(),
            _ => true,
        }
    }
}

fn with_reflected<R>(x: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
    let n = x.len();
    if x[n - 1] >= 0.0 {
        return f(x);
    }
    let mut p = x.to_vec();
    p[n - 1] = -p[n - 1];
    f(&p)
}

fn reflected_gradient<D: Density + ?Sized>(inner: &D, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let sign = if x[n - 1] > 0.0 {
        1.0
    } else if x[n - 1] < 0.0 {
        -1.0
    } else {
        0.0
    };
    with_reflected(x, |p| inner.gradient(p, out));
    out[n - 1] *= sign;
}

/// Even extension `h̃(x', x_n) = h(x', |x_n|)` of an arbitrary density.
#[derive(Debug, Clone)]
pub struct EvenReflection<D>(pub D);

impl<D: Density> Density for EvenReflection<D> {
    fn value(&self, x: &[f64]) -> f64 {
        with_reflected(x, |p| self.0.value(p))
    }
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }
    fn flags(&self) -> DensityFlags {
        DensityFlags { claims_concave: false, even_in_xn: true, ..self.0.flags() }
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        reflected_gradient(&self.0, x, out)
    }
    fn has_analytic_gradient(&self) -> bool {
        self.0.has_analytic_gradient()
    }
}

pub fn even_reflection<D: Density>(density: D) -> EvenReflection<D> {
    EvenReflection(density)
}

impl fmt::Display for BuiltinDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant => f.write_str("const"),
            Self::Monomial(a) => {
                f.write_str("monomial:")?;
                for (i, ai) in a.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{ai}")?;
                }
                Ok(())
            }
            Self::Radial(alpha) => write!(f, "radial:{alpha}"),
            Self::Reflect(inner) => write!(f, "reflect({inner})"),
        }
    }
}

fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::DensitySpec(format!("not a number: {s:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().map_err(|_| bad())?;
        let den: f64 = den.trim().parse().map_err(|_| bad())?;
        return Ok(num / den);
    }
    s.parse().map_err(|_| bad())
}

impl FromStr for BuiltinDensity {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "const" || spec == "constant" {
            return Ok(Self::Constant);
        }
        if let Some(rest) = spec.strip_prefix("reflect(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::DensitySpec(format!("unbalanced parentheses in {spec:?}")))?;
            return Ok(inner.parse::<Self>()?.even_reflection());
        }
        if let Some(rest) = spec.strip_prefix("monomial:") {
            let exps = rest.split(',').map(parse_real).collect::<Result<Vec<_>>>()?;
            return Self::monomial(exps);
        }
        if let Some(rest) = spec.strip_prefix("radial:") {
            return Self::radial(parse_real(rest)?);
        }
        Err(Error::DensitySpec(format!(
            "unknown density {spec:?}; expected const, monomial:a1,..,an, radial:alpha or reflect(...)"
        )))
    }
}

/// Outcome of one statistical hypothesis audit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisReport {
    /// Max of `|αh(x) − ∇h(x)·x| / (1 + |h(x)|)`.
    pub euler: HypothesisCheck,
    /// Min of `h((x+y)/2) − (h(x)+h(y))/2`.
    pub concavity: HypothesisCheck,
    /// Min over samples `a ∈ K` of `∇h(a)·a`.
    pub inward_gradient: HypothesisCheck,
    pub skipped: usize,
    pub total: usize,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.euler.passed && self.concavity.passed && self.inward_gradient.passed
    }
}

/// Audits Euler's identity, midpoint concavity and `inf_{a∈K} ∇h·a ≥ 0` on
/// seeded samples. Points where `h` or `∇h` is unevaluable are skipped; more
/// than 1% skipped is an error.
pub fn check_hypotheses<D: Density + ?Sized>(
    density: &D,
    k: &Region,
    samples: usize,
    seed: u64,
) -> Result<HypothesisReport> {
    let grid = k.grid();
    let n = grid.dimension();
    let alpha = density.alpha();
    let tol = if density.has_analytic_gradient() { 1e-8 } else { 1e-5 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qn = grid.qp_count();
    let radii_at_qp = grid.interpolate(k.radii());
    let mut grad = vec![0.0; n];
    let mut skipped = 0usize;
    let mut total = 0usize;

    let point_in_cone = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let j = rng.gen_range(0..qn);
        let r = 0.1 + 1.9 * rng.gen::<f64>();
        grid.qp_direction(j).iter().map(|w| r * w).collect()
    };

    let mut euler_max: f64 = 0.0;
    for _ in 0..samples {
        total += 1;
        let x = point_in_cone(&mut rng);
        let h = density.value(&x);
        density.gradient(&x, &mut grad);
        let gx: f64 = grad.iter().zip(&x).map(|(g, xi)| g * xi).sum();
        if !h.is_finite() || !gx.is_finite() {
            skipped += 1;
            continue;
        }
        euler_max = euler_max.max(abs(alpha * h - gx) / (1.0 + abs(h)));
    }

    let mut concave_min = f64::INFINITY;
    for _ in 0..samples {
        total += 1;
        let x = point_in_cone(&mut rng);
        let y = point_in_cone(&mut rng);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (hx, hy, hm) = (density.value(&x), density.value(&y), density.value(&mid));
        if !(hx.is_finite() && hy.is_finite() && hm.is_finite()) {
            skipped += 1;
            continue;
        }
        let scale = 1.0 + abs(hx) + abs(hy);
        concave_min = concave_min.min((hm - 0.5 * (hx + hy)) / scale);
    }

    let mut inward_min = f64::INFINITY;
    for _ in 0..samples {
        total += 1;
        let j = rng.gen_range(0..qn);
        let r = radii_at_qp[j] * pow(rng.gen::<f64>(), 1.0 / n as f64);
        let a: Vec<f64> = grid.qp_direction(j).iter().map(|w| r * w).collect();
        density.gradient(&a, &mut grad);
        let ga: f64 = grad.iter().zip(&a).map(|(g, ai)| g * ai).sum();
        if !ga.is_finite() {
            skipped += 1;
            continue;
        }
        inward_min = inward_min.min(ga);
    }

    if skipped * 100 > total {
        return Err(Error::TooManySkipped { skipped, total });
    }
    let check = |name: &str, value: f64, passed: bool| HypothesisCheck {
        name: name.to_string(),
        value,
        tolerance: tol,
        passed,
    };
    Ok(HypothesisReport {
        euler: check("euler_identity", euler_max, euler_max <= tol),
        concavity: check("midpoint_concavity", concave_min, concave_min >= -tol),
        inward_gradient: check("inward_gradient", inward_min, inward_min >= -tol),
        skipped,
        total,
    })
}

/// Samples `h(tx) / (t^α h(x))` misfit; used by property tests and audits.
pub fn homogeneity_residual<D: Density + ?Sized>(density: &D, x: &[f64], t: f64) -> f64 {
    let hx = density.value(x);
    let y: Vec<f64> = x.iter().map(|v| v * t).collect();
    let hy = density.value(&y);
    let want = pow(t, density.alpha()) * hx;
    abs(hy - want) / abs(want).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parse_and_display_round_trip() {
        for spec in ["const", "monomial:0,1", "radial:1.5", "reflect(monomial:0,1)", "monomial:0.5,0.5"] {
            let d: BuiltinDensity = spec.parse().unwrap();
            assert_eq!(d.to_string(), spec);
        }
        assert_eq!("monomial:1/2,1/2".parse::<BuiltinDensity>().unwrap(), BuiltinDensity::Monomial(vec![0.5, 0.5]));
        assert!("monomial:-1,0".parse::<BuiltinDensity>().is_err());
        assert!("radial:x".parse::<BuiltinDensity>().is_err());
        assert!("reflect(const".parse::<BuiltinDensity>().is_err());
        assert!("gaussian".parse::<BuiltinDensity>().is_err());
    }

    #[test]
    fn monomial_values_and_flags() {
        let y = BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap();
        assert_eq!(y.value(&[3.0, 2.0]), 2.0);
        assert_eq!(y.alpha(), 1.0);
        assert!(y.flags().claims_concave);
        let one = BuiltinDensity::monomial(vec![0.0, 0.0]).unwrap();
        assert_eq!(one.value(&[0.3, 0.7]), 1.0);
        assert_eq!(one.alpha(), 0.0);
        let sq = BuiltinDensity::monomial(vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(sq.value(&[1.0, 4.0]), 2.0);
        let mut g = [0.0; 2];
        sq.gradient(&[1.0, 4.0], &mut g);
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.25, epsilon = 1e-15);
        let mut fd = [0.0; 2];
        numeric_gradient(|p| sq.value(p), &[1.0, 4.0], &mut fd);
        assert_relative_eq!(fd[0], g[0], max_relative = 1e-6);
        assert_relative_eq!(fd[1], g[1], max_relative = 1e-6);
        assert!(!BuiltinDensity::monomial(vec![1.0, 0.5]).unwrap().flags().claims_concave);
    }

    #[test]
    fn radial_flags() {
        assert!(!BuiltinDensity::radial(2.0).unwrap().flags().claims_concave);
        assert!(!BuiltinDensity::radial(1.0).unwrap().flags().claims_concave);
        let c = BuiltinDensity::radial(0.0).unwrap();
        assert!(c.flags().claims_concave);
        assert_eq!(c.value(&[5.0, 1.0]), 1.0);
        assert_relative_eq!(BuiltinDensity::radial(1.0).unwrap().value(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn reflection_is_even() {
        let h = BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap().even_reflection();
        assert_eq!(h.value(&[1.0, -2.0]), 2.0);
        assert_eq!(h.value(&[0.4, 0.0]), 0.0);
        assert!(h.flags().even_in_xn);
        let mut g = [0.0; 2];
        h.gradient(&[1.0, -2.0], &mut g);
        assert_eq!(g, [0.0, -1.0]);
        let generic = even_reflection(BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = [rng.gen_range(0.0..3.0), rng.gen_range(-3.0..3.0)];
            assert_eq!(generic.value(&p), generic.value(&[p[0], -p[1]]));
            assert_eq!(h.value(&p), generic.value(&p));
        }
    }

    #[test]
    fn one_sided_difference_at_domain_edge() {
        let h = BuiltinDensity::monomial(vec![1.0, 0.0]).unwrap();
        let mut g = [0.0; 2];
        numeric_gradient(|p| h.value(p), &[0.0, 1.0], &mut g);
        assert_relative_eq!(g[0], 1.0, max_relative = 1e-9);
        assert!(g[1].abs() < 1e-12);
    }
}
