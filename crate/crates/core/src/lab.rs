//! Both sides of each weighted inequality, sharp constants and experiments.
//!
//! Every check evaluates its two sides on the region's own grid and again on
//! a grid with half as many elements; twice the larger change is the
//! reported tolerance, floored at [`CheckOptions::tol_floor`].

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cone::ConeDescriptor;
use crate::density::{check_hypotheses, BuiltinDensity, Density};
use crate::error::{Error, Result};
use crate::grid::{PatchGrid, QuadratureSpec};
use crate::math::{abs, cos, exp, log, pow, PI};
use crate::quadrature::golden_section_min;
use crate::region::Region;
use crate::report::InequalityReport;

pub const HYPOTHESIS_PROBE: &str = "hypothesis-violated probe";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub tol_floor: f64,
    pub hypothesis_samples: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { tol_floor: 1e-9, hypothesis_samples: 2000, seed: 0 }
    }
}

struct Sides {
    lhs: f64,
    rhs: f64,
    meta: Vec<(&'static str, f64)>,
}

fn evaluate<F>(name: &str, region: &Region, opts: &CheckOptions, eval: F) -> Result<InequalityReport>
where
    F: Fn(&Region) -> Result<Sides>,
{
    let fine = eval(region)?;
    let coarse = match region.grid().quadrature().coarsened() {
        Some(q) => {
            let grid = Arc::new(PatchGrid::build(region.cone(), &q)?);
            Some(eval(&region.resampled(grid)?)?)
        }
        None => None,
    };
    let estimate = coarse.as_ref().map_or(0.0, |c| 2.0 * abs(fine.lhs - c.lhs).max(abs(fine.rhs - c.rhs)));
    let mut report = InequalityReport::new(name, fine.lhs, fine.rhs, estimate.max(opts.tol_floor))
        .with_meta("error_estimate", estimate);
    for (k, v) in fine.meta {
        report = report.with_meta(k, v);
    }
    if coarse.is_none() {
        report = report.with_advisory("grid too coarse for an error estimate; tolerance is the floor");
    }
    Ok(report)
}

fn unit_sector(region: &Region) -> Region {
    Region::ball(region.grid_arc().clone(), 1.0)
}

/// Advisories for the inward-gradient hypothesis and `C ⊆ R^n_+`.
fn theorem1_advisories<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Vec<String> {
    let mut notes = Vec::new();
    match region.cone().validate_positive_orthant() {
        Ok(check) if !check.inside => {
            notes.push(check.advisory.unwrap_or_else(|| "cone is not contained in the positive orthant".into()))
        }
        Err(e) => notes.push(format!("cone check failed: {e}")),
        _ => {}
    }
    match check_hypotheses(density, &unit_sector(region), opts.hypothesis_samples, opts.seed) {
        Ok(h) if !h.inward_gradient.passed => {
            notes.push(format!("{HYPOTHESIS_PROBE}: min over K of grad h . a = {:e}", h.inward_gradient.value))
        }
        Err(e) => notes.push(format!("{HYPOTHESIS_PROBE}: {e}")),
        _ => {}
    }
    notes
}

fn theorem2_advisories<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Vec<String> {
    let mut notes = Vec::new();
    if !density.flags().claims_homogeneous {
        notes.push(format!("{HYPOTHESIS_PROBE}: density is not declared homogeneous"));
    }
    match check_hypotheses(density, &unit_sector(region), opts.hypothesis_samples, opts.seed) {
        Ok(h) => {
            if !h.concavity.passed {
                notes.push(format!("{HYPOTHESIS_PROBE}: midpoint concavity margin {:e}", h.concavity.value));
            }
            if !h.euler.passed {
                notes.push(format!("{HYPOTHESIS_PROBE}: Euler identity residual {:e}", h.euler.value));
            }
        }
        Err(e) => notes.push(format!("{HYPOTHESIS_PROBE}: {e}")),
    }
    notes
}

fn with_notes(mut report: InequalityReport, notes: Vec<String>) -> InequalityReport {
    report.advisories.extend(notes);
    report
}

/// `n ∫_E h ≤ Per_h(E)` after rescaling `E` so that `|E| = |K|`.
pub fn thm1_check<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = region.dimension() as f64;
    let report = evaluate("thm1", region, opts, |e| {
        let k_vol = unit_sector(e).volume();
        let scale = pow(k_vol / e.volume(), 1.0 / n);
        let e = e.scaled(scale)?;
        let mass = e.weighted_volume(density)?;
        Ok(Sides {
            lhs: n * mass,
            rhs: e.perimeter(density)?,
            meta: vec![("scale", scale), ("volume", e.volume()), ("volume_k", k_vol), ("mass", mass)],
        })
    })?;
    Ok(with_notes(report, theorem1_advisories(region, density, opts)))
}

/// `n ∫_K h + ∫_K ∇h·x = Per_h(K)`.
pub fn thm1_equality_identity<D: Density + ?Sized>(k: &Region, density: &D, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = k.dimension();
    evaluate("thm1_identity", k, opts, |k| {
        let nodes = k.grid().quadrature().radial_nodes();
        let mass = k.weighted_volume(density)?;
        let flux = k.integrate(
            |x| {
                let mut g = vec![0.0; n];
                density.gradient(x, &mut g);
                g.iter().zip(x).map(|(a, b)| a * b).sum()
            },
            nodes,
        )?;
        Ok(Sides {
            lhs: n as f64 * mass + flux,
            rhs: k.perimeter(density)?,
            meta: vec![("mass", mass), ("flux", flux)],
        })
    })
}

/// `(n+α−1) t^{1/n} ∫_E h + t^{−(n+α−1)/n} ∫_K h ≤ Per_h(E)` with `t = |K|/|E|`.
pub fn thm2_check<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = region.dimension() as f64;
    let alpha = density.alpha();
    let k1 = n + alpha - 1.0;
    let report = evaluate("thm2", region, opts, |e| {
        let k = unit_sector(e);
        let t = k.volume() / e.volume();
        let mass_e = e.weighted_volume(density)?;
        let mass_k = k.weighted_volume(density)?;
        Ok(Sides {
            lhs: k1 * pow(t, 1.0 / n) * mass_e + mass_k / pow(t, k1 / n),
            rhs: e.perimeter(density)?,
            meta: vec![("t", t), ("mass", mass_e), ("mass_k", mass_k)],
        })
    })?;
    Ok(with_notes(report, theorem2_advisories(region, density, opts)))
}

/// `∫_K h = Per_h(K)/(n+α)`; requires `α > 0`.
pub fn k_surface_identity<D: Density + ?Sized>(k: &Region, density: &D, opts: &CheckOptions) -> Result<InequalityReport> {
    let alpha = density.alpha();
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("identity needs alpha > 0, got {alpha}")));
    }
    let p = k.dimension() as f64 + alpha;
    evaluate("k_surface_identity", k, opts, |k| {
        Ok(Sides { lhs: k.weighted_volume(density)?, rhs: k.perimeter(density)? / p, meta: Vec::new() })
    })
}

/// `γ(t) = (k t^{1/n} + t^{−k/n})/(n+α)` with `k = n+α−1`.
pub fn coefficient_gamma(t: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let nf = n as f64;
    Ok(g_profile(nf + alpha - 1.0, pow(t, 1.0 / nf))? / (nf + alpha))
}

/// `g(a) = k a + a^{−k}`.
pub fn g_profile(k: f64, a: f64) -> Result<f64> {
    if !(k > 0.0 && a > 0.0) {
        return Err(Error::InvalidArgument(format!("g needs k, a > 0, got k = {k}, a = {a}")));
    }
    Ok(k * a + pow(a, -k))
}

fn mass_normalized<D: Density + ?Sized>(e: &Region, density: &D) -> Result<(Region, f64)> {
    let p = e.dimension() as f64 + density.alpha();
    let target = unit_sector(e).weighted_volume(density)?;
    let scale = pow(target / e.weighted_volume(density)?, 1.0 / p);
    Ok((e.scaled(scale)?, scale))
}

/// After rescaling to `∫_E h = ∫_K h`: the sharp form `γ(t) Per_h(K) ≤ Per_h(E)`
/// and the plain form `Per_h(K) ≤ Per_h(E)`.
pub fn cor_a1_check<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Result<[InequalityReport; 2]> {
    let n = region.dimension();
    let alpha = density.alpha();
    let sharp = evaluate("cor_a1_sharp", region, opts, |e| {
        let (e, scale) = mass_normalized(e, density)?;
        let k = unit_sector(&e);
        let t = k.volume() / e.volume();
        let gamma = coefficient_gamma(t, n, alpha)?;
        let per_k = k.perimeter(density)?;
        Ok(Sides {
            lhs: gamma * per_k,
            rhs: e.perimeter(density)?,
            meta: vec![("t", t), ("gamma", gamma), ("scale", scale), ("perimeter_k", per_k)],
        })
    })?;
    let weak = evaluate("cor_a1", region, opts, |e| {
        let (e, _) = mass_normalized(e, density)?;
        Ok(Sides { lhs: unit_sector(&e).perimeter(density)?, rhs: e.perimeter(density)?, meta: Vec::new() })
    })?;
    let notes = theorem2_advisories(region, density, opts);
    Ok([with_notes(sharp, notes.clone()), with_notes(weak, notes)])
}

/// `(γ(t) − 1) Per_h(K) ≤ Per_h(E) − Per_h(K)` on the mass-normalized region.
/// The metadata also carries the nonpositive `(1 − γ(t))` bound.
pub fn quantitative_deficit<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Result<InequalityReport> {
    let n = region.dimension();
    let alpha = density.alpha();
    let report = evaluate("quantitative", region, opts, |e| {
        let (e, _) = mass_normalized(e, density)?;
        let k = unit_sector(&e);
        let t = k.volume() / e.volume();
        let gamma = coefficient_gamma(t, n, alpha)?;
        let per_k = k.perimeter(density)?;
        Ok(Sides {
            lhs: (gamma - 1.0) * per_k,
            rhs: e.perimeter(density)? - per_k,
            meta: vec![("t", t), ("gamma", gamma), ("one_minus_gamma", 1.0 - gamma)],
        })
    })?;
    Ok(with_notes(report, theorem2_advisories(region, density, opts)))
}

/// Every applicable check, in a fixed order.
pub fn verify_all<D: Density + ?Sized>(region: &Region, density: &D, opts: &CheckOptions) -> Result<Vec<InequalityReport>> {
    let k = unit_sector(region);
    let mut out = vec![
        thm1_check(region, density, opts)?,
        thm1_equality_identity(&k, density, opts)?,
        thm2_check(region, density, opts)?,
    ];
    if density.alpha() > 0.0 {
        out.push(k_surface_identity(&k, density, opts)?);
    }
    out.extend(cor_a1_check(region, density, opts)?);
    out.push(quantitative_deficit(region, density, opts)?);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrosComparison {
    pub f: f64,
    pub fbar: f64,
    pub cros_exponent_bound: f64,
    pub improvement: bool,
}

/// Compares the two-term lower bound with the single power bound for mass
/// ratio `x` and volume ratio `y`.
pub fn cros_compare(x: f64, y: f64, n: usize, alpha: f64) -> Result<CrosComparison> {
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidArgument(format!("ratios must be positive, got x = {x}, y = {y}")));
    }
    let nf = n as f64;
    let p = nf + alpha;
    let denom = x + (p - 1.0) * pow(y, p / nf);
    let core = p * pow(y, (p - 1.0) / nf) / denom;
    let f = pow(x, -1.0 / p) - core;
    let fbar = x * core;
    let bound = pow(x, (p - 1.0) / p);
    // Strict improvement beyond rounding of the two closed forms.
    let improvement = bound - fbar > 1e-12 * bound;
    Ok(CrosComparison { f, fbar, cros_exponent_bound: bound, improvement })
}

/// `count` points log-spaced on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (log(lo), log(hi));
    (0..count).map(|i| exp(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// Zero-mean angular profile at the grid's degrees of freedom:
/// `cos(4θ̃)` with `θ̃ ∈ [0, π/2]` the rescaled arc parameter when `n = 2`,
/// and `Σ cos(3π ω_i)` minus its mean otherwise.
pub fn angular_profile(grid: &PatchGrid) -> Vec<f64> {
    let count = grid.dof_count();
    if grid.dimension() == 2 {
        (0..count)
            .map(|k| {
                let u = grid.chart_coordinates(grid.dof_direction(k)).map_or(0.0, |u| u[0]);
                cos(4.0 * u * PI / 2.0)
            })
            .collect()
    } else {
        let raw: Vec<f64> =
            (0..count).map(|k| grid.dof_direction(k).iter().map(|w| cos(3.0 * PI * w)).sum()).collect();
        let mass = grid.dof_mass();
        let mean = raw.iter().zip(mass).map(|(a, m)| a * m).sum::<f64>() / mass.iter().sum::<f64>();
        raw.iter().map(|a| a - mean).collect()
    }
}

/// `ρ = c (1 + ε φ)` with `c` chosen so that `|E| = |K|`.
pub fn perturbed_sector(grid: Arc<PatchGrid>, eps: f64) -> Result<Region> {
    if eps == 0.0 {
        return Ok(Region::ball(grid, 1.0));
    }
    let phi = angular_profile(&grid);
    let radii: Vec<f64> = phi.iter().map(|p| 1.0 + eps * p).collect();
    let e = Region::new(grid.clone(), radii)?;
    let k_vol = grid.surface_measure() / grid.dimension() as f64;
    e.qp_radii()?;
    e.scaled(pow(k_vol / e.volume(), 1.0 / grid.dimension() as f64))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityRow {
    pub amplitude: f64,
    /// `|E Δ K| / |K|`.
    pub symdiff: f64,
    /// `Per(E)/(n|E|) − 1`.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    /// Least-squares slope of `log deficit` against `log symdiff`.
    pub slope: f64,
}

/// Unweighted isoperimetric deficit against symmetric difference for
/// volume-normalized perturbations of `K`.
pub fn stability_scaling(cone: &ConeDescriptor, quad: &QuadratureSpec, amplitudes: &[f64]) -> Result<StabilityTable> {
    let grid = Arc::new(PatchGrid::build(cone, quad)?);
    let k = Region::ball(grid.clone(), 1.0);
    let n = grid.dimension() as f64;
    let h = BuiltinDensity::Constant;
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &eps in amplitudes {
        let e = perturbed_sector(grid.clone(), eps)?;
        let vol = e.volume();
        rows.push(StabilityRow {
            amplitude: eps,
            symdiff: e.symmetric_difference(&k)? / k.volume(),
            deficit: e.perimeter(&h)? / (n * vol) - 1.0,
        });
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.symdiff > 0.0 && r.deficit > 0.0).map(|r| (log(r.symdiff), log(r.deficit))).collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(StabilityTable { rows, slope })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitOptimum {
    pub r1: f64,
    pub r2: f64,
    pub optimum_value: f64,
    /// Objective at `R1 = R2 = 1`.
    pub symmetric_value: f64,
    /// Best interior value found by the scan.
    pub interior_value: f64,
}

/// Minimizes `R1^k + R2^k` subject to `(R1^p + R2^p)/2 = 1`, `p = n+α`,
/// `k = p−1`, over `s = R1^p/2 ∈ [0, 1]`.
pub fn reflection_split_optimum(n: usize, alpha: f64) -> Result<SplitOptimum> {
    if n < 2 || !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("need n >= 2 and alpha > 0, got n = {n}, alpha = {alpha}")));
    }
    let p = n as f64 + alpha;
    let k = p - 1.0;
    let objective = |s: f64| pow(2.0 * s, k / p) + pow(2.0 * (1.0 - s), k / p);
    let scan = 200;
    let best_i = (1..scan).min_by(|&a, &b| {
        objective(a as f64 / scan as f64).total_cmp(&objective(b as f64 / scan as f64))
    });
    let interior = best_i.map_or(0.5, |i| {
        let lo = (i as f64 - 1.0) / scan as f64;
        let hi = (i as f64 + 1.0) / scan as f64;
        golden_section_min(objective, lo, hi, 1e-12)
    });
    let interior_value = objective(interior);
    let corner_value = objective(1.0);
    let (s, value) = if corner_value <= interior_value { (1.0, corner_value) } else { (interior, interior_value) };
    let r1 = pow(2.0 * s, 1.0 / p);
    let r2 = pow(2.0 * (1.0 - s), 1.0 / p);
    Ok(SplitOptimum { r1, r2, optimum_value: value, symmetric_value: objective(0.5), interior_value })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Remark2d {
    pub r: f64,
    /// Radius of the full disk with the same `|y|`-mass as the half disk.
    pub r_star: f64,
    /// `R / 2^{1/3}`.
    pub r_star_formula: f64,
    pub mass_half_ball: f64,
    pub mass_full_ball: f64,
    /// `∫_{∂B_R ∩ {y>0}} y dH^1`.
    pub perimeter_half_ball: f64,
    /// `∫_{∂B_{R*}} |y| dH^1`.
    pub perimeter_full_ball: f64,
    pub perimeter_ratio: f64,
}

/// Half disk `B_R ∩ {y > 0}` against the full disk of equal `|y|`-mass.
pub fn reflection_2d_remark(r: f64, quad: &QuadratureSpec) -> Result<Remark2d> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::NonPositiveScale(r));
    }
    let h = BuiltinDensity::monomial(vec![0.0, 1.0])?.even_reflection();
    let upper = Arc::new(PatchGrid::build(&ConeDescriptor::halfspace(2), quad)?);
    let lower = Arc::new(PatchGrid::build(&ConeDescriptor::circular(vec![0.0, -1.0], PI / 2.0), quad)?);
    let half = Region::ball(upper.clone(), r);
    let mass_half = half.weighted_volume(&h)?;
    let per_half = half.perimeter(&h)?;
    let unit_full_mass = Region::ball(upper.clone(), 1.0).weighted_volume(&h)?
        + Region::ball(lower.clone(), 1.0).weighted_volume(&h)?;
    let r_star = pow(mass_half / unit_full_mass, 1.0 / 3.0);
    let full_upper = Region::ball(upper, r_star);
    let full_lower = Region::ball(lower, r_star);
    let mass_full = full_upper.weighted_volume(&h)? + full_lower.weighted_volume(&h)?;
    let per_full = full_upper.perimeter(&h)? + full_lower.perimeter(&h)?;
    Ok(Remark2d {
        r,
        r_star,
        r_star_formula: r / pow(2.0, 1.0 / 3.0),
        mass_half_ball: mass_half,
        mass_full_ball: mass_full,
        perimeter_half_ball: per_half,
        perimeter_full_ball: per_full,
        perimeter_ratio: per_full / per_half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;
    use crate::report::Verdict;
    use approx::assert_relative_eq;

    fn quadrant(res: usize) -> Arc<PatchGrid> {
        Arc::new(PatchGrid::build(&ConeDescriptor::quadrant(), &QuadratureSpec::with_resolution(res)).unwrap())
    }

    fn y() -> BuiltinDensity {
        BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn equality_at_unit_sector() {
        let k = Region::ball(quadrant(256), 1.0);
        let opts = CheckOptions::default();
        let t1 = thm1_check(&k, &y(), &opts).unwrap();
        assert_relative_eq!(t1.lhs, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t1.rhs, 1.0, epsilon = 1e-12);
        assert_eq!(t1.verdict, Verdict::Holds);
        let t2 = thm2_check(&k, &y(), &opts).unwrap();
        assert_eq!(t2.verdict, Verdict::Equality);
        assert!(t2.deficit.abs() <= 1e-12);
        let id = thm1_equality_identity(&k, &y(), &opts).unwrap();
        assert_eq!(id.verdict, Verdict::Equality);
        let c = thm1_check(&k, &BuiltinDensity::Constant, &opts).unwrap();
        assert_eq!(c.verdict, Verdict::Equality);
        assert!(t1.advisories.is_empty());
    }

    #[test]
    fn square_deficits() {
        let a = sqrt(PI) / 2.0;
        let sq = Region::cube(quadrant(256), a).unwrap();
        let opts = CheckOptions::default();
        let t1 = thm1_check(&sq, &y(), &opts).unwrap();
        assert_relative_eq!(t1.lhs, a * a * a, epsilon = 1e-9);
        assert_relative_eq!(t1.rhs, 1.5 * a * a, epsilon = 1e-9);
        let t2 = thm2_check(&sq, &y(), &opts).unwrap();
        assert_relative_eq!(t2.lhs, a * a * a + 1.0 / 3.0, epsilon = 1e-9);
        assert_eq!(t2.verdict, Verdict::Holds);
        let [sharp, weak] = cor_a1_check(&sq, &y(), &opts).unwrap();
        let s = pow(2.0 / 3.0, 1.0 / 3.0);
        assert_relative_eq!(weak.rhs, 1.5 * s * s, epsilon = 1e-9);
        assert_eq!(sharp.verdict, Verdict::Holds);
        let q = quantitative_deficit(&sq, &y(), &opts).unwrap();
        assert!(q.lhs >= 0.0 && q.lhs <= q.rhs);
        assert!(q.meta("one_minus_gamma").unwrap() <= 0.0);
    }

    #[test]
    fn gamma_and_g() {
        assert_eq!(coefficient_gamma(1.0, 3, 0.7).unwrap(), 1.0);
        assert_relative_eq!(coefficient_gamma(0.5, 2, 1.0).unwrap(), (2.0 * sqrt(0.5) + 2.0) / 3.0, epsilon = 1e-15);
        assert_eq!(g_profile(3.0, 2.0).unwrap(), 6.125);
        assert!(coefficient_gamma(0.0, 2, 1.0).is_err());
    }

    #[test]
    fn cros_spot_values() {
        let c = cros_compare(8.0, 1.0, 2, 1.0).unwrap();
        assert!((c.f - 0.2).abs() < 1e-12);
        assert!(c.improvement);
        let c = cros_compare(1.0, 1.0, 2, 1.0).unwrap();
        assert_eq!(c.f, 0.0);
        assert_eq!(c.fbar, 1.0);
        assert!(!c.improvement);
    }

    #[test]
    fn split_optimum_is_corner() {
        let s = reflection_split_optimum(2, 1.0).unwrap();
        assert!((s.r1 - pow(2.0, 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(s.r2, 0.0);
        assert!((s.optimum_value - pow(2.0, 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(s.symmetric_value, 2.0);
        assert!(reflection_split_optimum(2, 0.0).is_err());
    }

    #[test]
    fn remark_ratios() {
        let r = pow(2.0, 1.0 / 3.0);
        let m = reflection_2d_remark(r, &QuadratureSpec::with_resolution(64)).unwrap();
        assert_relative_eq!(m.r_star, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.perimeter_ratio, r, epsilon = 1e-12);
        assert_relative_eq!(m.perimeter_half_ball, 2.0 * r * r, epsilon = 1e-12);
        assert_relative_eq!(m.mass_half_ball, m.mass_full_ball, epsilon = 1e-12);
        assert_relative_eq!(m.mass_half_ball, 2.0 / 3.0 * r * r * r, epsilon = 1e-12);
    }

    #[test]
    fn stability_slope_near_two() {
        let amps = [0.0, 0.02, 0.05, 0.1, 0.15, 0.2];
        let t = stability_scaling(&ConeDescriptor::quadrant(), &QuadratureSpec::with_resolution(256), &amps).unwrap();
        assert_eq!(t.rows[0].symdiff, 0.0);
        assert!(t.rows[0].deficit.abs() < 1e-13);
        assert!(t.rows.iter().all(|r| r.deficit >= -1e-13));
        assert!((1.8..=2.2).contains(&t.slope), "slope {}", t.slope);
    }
}
