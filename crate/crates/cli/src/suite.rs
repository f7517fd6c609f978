//! The acceptance battery. Each criterion is a list of named checks with
//! the measured value and the bound it is held to.

use std::sync::Arc;

use conelab_core::lab::{
    coefficient_gamma, cros_compare, g_profile, log_grid, reflection_2d_remark, reflection_split_optimum,
    stability_scaling, thm1_check, thm1_equality_identity, thm2_check, CheckOptions,
};
use conelab_core::optimize::{multi_start, reflection_optimize, OptProblem};
use conelab_core::quadrature::golden_section_min;
use conelab_core::transport::{
    brute_force_assignment, equality_case_diagnostics, sample_region_uniform, solve_plan,
    weak_convergence_experiment, PointSet,
};
use conelab_core::{BuiltinDensity, ConeDescriptor, PatchGrid, QuadratureSpec, Region};
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-6`.
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionReport {
    fn new(id: u8, title: &'static str) -> Self {
        Self { id, title, checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn at_most(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.checks.push(Check { label: label.into(), value, bound: format!("<= {bound:e}"), passed: value <= bound });
    }

    fn at_least(&mut self, label: impl Into<String>, value: f64, bound: f64) {
        self.checks.push(Check { label: label.into(), value, bound: format!(">= {bound}"), passed: value >= bound });
    }

    fn within(&mut self, label: impl Into<String>, value: f64, target: f64, tol: f64) {
        let passed = (value - target).abs() <= tol;
        self.checks.push(Check { label: label.into(), value, bound: format!("{target} +- {tol:e}"), passed });
    }

    fn holds(&mut self, label: impl Into<String>, ok: bool) {
        let value = if ok { 1.0 } else { 0.0 };
        self.checks.push(Check { label: label.into(), value, bound: "== 1".into(), passed: ok });
    }

    /// One line: id, verdict, title and the first failing check if any.
    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        match self.checks.iter().find(|c| !c.passed) {
            Some(c) => format!("criterion {:>2} {verdict} {} [{} = {} not {}]", self.id, self.title, c.label, c.value, c.bound),
            None => format!("criterion {:>2} {verdict} {}", self.id, self.title),
        }
    }
}

fn grid(cone: &ConeDescriptor, res: usize) -> Result<Arc<PatchGrid>, CliError> {
    Ok(Arc::new(PatchGrid::build(cone, &QuadratureSpec::with_resolution(res))?))
}

fn h_y() -> BuiltinDensity {
    BuiltinDensity::monomial(vec![0.0, 1.0]).expect("valid exponents")
}

/// Equality at `K` for `h = y` on the quadrant.
pub fn criterion_1() -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(1, "equality at K");
    let k = Region::ball(grid(&ConeDescriptor::quadrant(), 256)?, 1.0);
    let opts = CheckOptions::default();
    let r = thm2_check(&k, &h_y(), &opts)?;
    c.within("thm2 lhs", r.lhs, 1.0, 1e-6);
    c.within("thm2 rhs", r.rhs, 1.0, 1e-6);
    c.at_most("|thm2 deficit|", r.deficit.abs(), 1e-6);
    c.holds("thm2 verdict is equality", r.verdict == conelab_core::Verdict::Equality);
    let id = thm1_equality_identity(&k, &h_y(), &opts)?;
    c.at_most("|n int h + int grad h . x - Per_h(K)|", id.deficit.abs(), 1e-6);
    Ok(c)
}

/// Strict inequality on the volume-normalized square `[0, √π/2]²`.
pub fn criterion_2() -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(2, "strict inequality on the square");
    let a = std::f64::consts::PI.sqrt() / 2.0;
    let square = Region::cube(grid(&ConeDescriptor::quadrant(), 256)?, a)?;
    let opts = CheckOptions::default();
    let h = h_y();
    let t1 = thm1_check(&square, &h, &opts)?;
    let t2 = thm2_check(&square, &h, &opts)?;
    // n∫y = a³; the free sides carry ∫_0^a y dy + a·a = 1.5a².
    let rhs = 1.5 * a * a;
    c.within("thm1 deficit (closed form 1.5a^2 - a^3)", t1.deficit, rhs - a * a * a, 1e-4);
    c.within("thm1 deficit (tabulated)", t1.deficit, 0.48199, 1e-4);
    c.within("thm2 deficit (closed form 1.5a^2 - a^3 - 1/3)", t2.deficit, rhs - a * a * a - 1.0 / 3.0, 1e-4);
    c.within("thm2 deficit (tabulated)", t2.deficit, 0.14865, 1e-4);
    c.holds("thm1 holds strictly", t1.verdict == conelab_core::Verdict::Holds);
    c.holds("thm2 holds strictly", t2.verdict == conelab_core::Verdict::Holds);
    Ok(c)
}

/// `γ ≥ 1` on a log grid and the minimum of `g(k, ·)` at `a = 1`.
pub fn criterion_3() -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(3, "sharp constants");
    let ts = log_grid(1e-3, 1e3, 61);
    let mut min_off = f64::INFINITY;
    for &t in &ts {
        if (t - 1.0).abs() > 1e-12 {
            min_off = min_off.min(coefficient_gamma(t, 2, 1.0)? - 1.0);
        }
    }
    c.at_most("|gamma(1) - 1|", (coefficient_gamma(1.0, 2, 1.0)? - 1.0).abs(), 1e-12);
    c.holds("gamma > 1 away from t = 1", min_off > 0.0);
    for k in [1.0, 2.0, 3.0, 4.5] {
        let a = golden_section_min(|a| g_profile(k, a).unwrap_or(f64::INFINITY), 0.1, 10.0, 1e-12);
        c.within(format!("argmin g(k = {k}, .)"), a, 1.0, 1e-6);
    }
    Ok(c)
}

/// Nonnegativity and zero set of the CROS comparison.
pub fn criterion_4() -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(4, "CROS comparison");
    let axis = log_grid(1e-2, 1e2, 100);
    for (n, alpha) in [(2usize, 1.0f64), (3, 0.5), (3, 1.0)] {
        let p = n as f64 + alpha;
        let mut min_off = f64::INFINITY;
        for &x in &axis {
            let curve = x.powf(n as f64 / p);
            for &y in &axis {
                if (y - curve).abs() > 1e-10 * curve {
                    min_off = min_off.min(cros_compare(x, y, n, alpha)?.f);
                }
            }
        }
        let on_curve = axis
            .iter()
            .map(|&x| cros_compare(x, x.powf(n as f64 / p), n, alpha).map(|r| r.f.abs()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        c.holds(format!("f > 0 off the zero curve (n = {n}, alpha = {alpha})"), min_off > 0.0);
        c.at_most(format!("max |f| on the zero curve (n = {n}, alpha = {alpha})"), on_curve, 1e-10);
    }
    c.within("f(8, 1; n = 2, alpha = 1)", cros_compare(8.0, 1.0, 2, 1.0)?.f, 0.2, 1e-12);
    Ok(c)
}

/// Split optimum, the planar remark and the reflection optimizer.
pub fn criterion_5(seed: u64) -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(5, "reflection problem");
    for (n, alpha) in [(2usize, 1.0f64), (3, 1.0)] {
        let s = reflection_split_optimum(n, alpha)?;
        c.within(format!("R1 (n = {n}, alpha = {alpha})"), s.r1, 2f64.powf(1.0 / (n as f64 + alpha)), 1e-9);
        c.within(format!("R2 (n = {n}, alpha = {alpha})"), s.r2, 0.0, 1e-9);
    }
    let remark = reflection_2d_remark(1.0, &QuadratureSpec::with_resolution(256))?;
    c.within("R* / (R / 2^(1/3))", remark.r_star / remark.r_star_formula, 1.0, 1e-6);
    c.within("perimeter ratio", remark.perimeter_ratio, 2f64.powf(1.0 / 3.0), 1e-6);
    let h = h_y().even_reflection();
    let res = reflection_optimize(&OptProblem::new(4.0 / 3.0), &h, grid(&ConeDescriptor::halfspace(2), 64)?, seed)?;
    c.at_least("full-ball perimeter / optimizer perimeter", res.beat_factor, 2f64.powf(1.0 / 3.0) - 1e-3);
    Ok(c)
}

/// Transport equality case on `K` and the brute-force oracle.
pub fn criterion_6(seed: u64) -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(6, "transport equality case");
    let k = Region::ball(grid(&ConeDescriptor::quadrant(), 64)?, 1.0);
    let source = sample_region_uniform(&k, 2000, seed, false)?;
    let target = sample_region_uniform(&k, 2000, seed.wrapping_add(1), false)?;
    let plan = solve_plan(&source, &target)?;
    let diag = equality_case_diagnostics(&plan, &h_y());
    c.at_most("best-translation residual r", diag.residual_median, 0.1);
    c.at_most("|x0*|", diag.translation_norm, 0.05);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for case in 0..20 {
        let n = 1 + case % 8;
        let mut cloud = || PointSet::new(2, (0..2 * n).map(|_| rng.gen::<f64>()).collect());
        let (a, b) = (cloud()?, cloud()?);
        let (perm, cost) = brute_force_assignment(&a, &b)?;
        let plan = solve_plan(&a, &b)?;
        if plan.pairing == perm && plan.cost == cost {
            agree += 1;
        }
    }
    c.within("brute-force agreements out of 20", agree as f64, 20.0, 0.0);
    Ok(c)
}

/// Weak convergence table for `h = y`.
pub fn criterion_7(seed: u64) -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(7, "weak convergence");
    let rows = weak_convergence_experiment(
        &ConeDescriptor::quadrant(),
        &QuadratureSpec::with_resolution(64),
        &h_y(),
        &[0.2, 0.1, 0.05, 0.0],
        2000,
        seed,
    )?;
    c.within("reference int_K y", rows[0].reference, 1.0 / 3.0, 1e-6);
    for w in rows.windows(2) {
        let slack = 2.0 * w[0].std_error.max(w[1].std_error);
        c.at_most(format!("a({}) - a({}) - 2 se", w[1].epsilon, w[0].epsilon), w[1].a - w[0].a - slack, 0.0);
    }
    Ok(c)
}

/// Slope of `log deficit` against `log |E Δ K|`.
pub fn criterion_8() -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(8, "stability exponent");
    let t = stability_scaling(
        &ConeDescriptor::quadrant(),
        &QuadratureSpec::with_resolution(256),
        &[0.02, 0.05, 0.1, 0.15, 0.2],
    )?;
    c.within("slope", t.slope, 2.0, 0.2);
    Ok(c)
}

/// Ten seeded multi-start runs converge to `K`.
pub fn criterion_9(seed: u64) -> Result<CriterionReport, CliError> {
    let mut c = CriterionReport::new(9, "shape optimization");
    let seeds: Vec<u64> = (0..10).map(|i| seed.wrapping_add(i)).collect();
    let runs = multi_start(&OptProblem::new(1.0 / 3.0), &h_y(), grid(&ConeDescriptor::quadrant(), 64)?, &seeds)?;
    let worst_dist = runs.iter().map(|r| r.distance_to_k).fold(0.0, f64::max);
    let worst_per = runs.iter().map(|r| (r.perimeter - 1.0).abs()).fold(0.0, f64::max);
    c.at_most("max distance_to_K / |K|", worst_dist, 1e-3);
    c.at_most("max |Per - 1|", worst_per, 1e-5);
    c.holds("all runs converged", runs.iter().all(|r| r.converged));
    Ok(c)
}

/// Criteria 1 to 9 in order.
pub fn run_all(seed: u64) -> Result<Vec<CriterionReport>, CliError> {
    Ok(vec![
        criterion_1()?,
        criterion_2()?,
        criterion_3()?,
        criterion_4()?,
        criterion_5(seed)?,
        criterion_6(seed)?,
        criterion_7(seed)?,
        criterion_8()?,
        criterion_9(seed)?,
    ])
}
