//! One function per subcommand. Each builds an [`Outcome`]; printing and
//! file output happen in the caller.

use std::sync::Arc;

use conelab_core::lab::{
    cros_compare, log_grid, reflection_2d_remark, reflection_split_optimum, stability_scaling, verify_all, CheckOptions,
};
use conelab_core::optimize::{
    optimize_shape, random_smooth_init, reflection_optimize, Method, OptProblem, OptResult,
};
use conelab_core::transport::{
    cyclical_monotonicity_gain, equality_case_diagnostics, sample_region_uniform, solve_plan, solve_plan_auction,
    weak_convergence_experiment, EXACT_CAP,
};
use conelab_core::{BuiltinDensity, ConeDescriptor, Density, Error, PatchGrid, QuadratureSpec, Region};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Command, MethodArg, RunConfig};
use crate::error::CliError;
use crate::output::{fix, num, sci, Outcome};
use crate::specs::{parse_cone, parse_region};
use crate::suite;

/// Distance to `K` (relative to `|K|`) below which a run counts as recovering it.
pub const OPTIMIZE_DISTANCE_TOL: f64 = 1e-3;

pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    match config.command()? {
        Command::Verify => verify(config),
        Command::Compare => compare(config),
        Command::Transport => transport(config),
        Command::Optimize => optimize(config),
        Command::Reflect => reflect(config),
        Command::Stability => stability(config),
        Command::Suite => run_suite(config),
    }
}

fn quad(config: &RunConfig) -> QuadratureSpec {
    QuadratureSpec {
        angular_resolution: config.quad_res,
        order: config.order,
        mc_samples: config.mc_samples,
        seed: config.seed,
        ..QuadratureSpec::default()
    }
}

fn cone(config: &RunConfig) -> Result<ConeDescriptor, CliError> {
    parse_cone(&config.cone, config.n)
}

fn density(config: &RunConfig, dim: usize) -> Result<BuiltinDensity, CliError> {
    let h: BuiltinDensity =
        config.density.parse().map_err(|e: Error| CliError::Usage(format!("--density `{}`: {e}", config.density)))?;
    match h.dimension() {
        Some(d) if d != dim => Err(CliError::Usage(format!(
            "--density `{}` has {d} exponents but the cone has dimension {dim}",
            config.density
        ))),
        _ => Ok(h),
    }
}

fn check_options(config: &RunConfig) -> CheckOptions {
    CheckOptions { tol_floor: config.tol.unwrap_or(CheckOptions::default().tol_floor), seed: config.seed, ..Default::default() }
}

fn grid(cone: &ConeDescriptor, quad: &QuadratureSpec) -> Result<Arc<PatchGrid>, CliError> {
    Ok(Arc::new(PatchGrid::build(cone, quad)?))
}

fn verify(config: &RunConfig) -> Result<Outcome, CliError> {
    let cone = cone(config)?;
    let quad = quad(config);
    let h = density(config, cone.dimension)?;
    let region = parse_region(&config.region, &cone, &quad)?;
    let reports = verify_all(&region, &h, &check_options(config))?;
    let mut out = Outcome::new(&["check", "lhs", "rhs", "deficit", "tolerance", "verdict"]);
    out.fact("cone", &config.cone);
    out.fact("density", &config.density);
    out.fact("region", &config.region);
    let mut advisories: Vec<&str> = Vec::new();
    for r in &reports {
        out.row(vec![r.name.clone(), fix(r.lhs), fix(r.rhs), sci(r.deficit), sci(r.tolerance), r.verdict.to_string()]);
        for a in &r.advisories {
            if !advisories.contains(&a.as_str()) {
                advisories.push(a);
            }
        }
    }
    for a in advisories {
        out.fact("advisory", a);
    }
    out.passed = reports.iter().all(|r| r.verdict.is_pass());
    out.data = serde_json::to_value(&reports).expect("reports serialize");
    Ok(out)
}

fn compare(config: &RunConfig) -> Result<Outcome, CliError> {
    let (n, alpha) = (config.n, config.alpha);
    if alpha <= 0.0 {
        return Err(CliError::Usage("compare needs alpha > 0".into()));
    }
    let p = n as f64 + alpha;
    let axis = log_grid(1e-2, 1e2, 100);
    let mut out = Outcome::new(&["x", "y", "f", "fbar", "power_bound", "improvement"]);
    let mut min_f = f64::INFINITY;
    let mut improved = 0usize;
    let mut rows = Vec::new();
    for &x in &axis {
        for &y in &axis {
            let c = cros_compare(x, y, n, alpha)?;
            min_f = min_f.min(c.f);
            improved += usize::from(c.improvement);
            out.row(vec![num(x), num(y), sci(c.f), fix(c.fbar), fix(c.cros_exponent_bound), c.improvement.to_string()]);
            rows.push(json!({"x": x, "y": y, "f": c.f, "fbar": c.fbar, "power_bound": c.cros_exponent_bound, "improvement": c.improvement}));
        }
    }
    let mut curve_max = 0.0f64;
    for &x in &axis {
        curve_max = curve_max.max(cros_compare(x, x.powf(n as f64 / p), n, alpha)?.f.abs());
    }
    let spot = cros_compare(8.0, 1.0, n, alpha)?;
    out.fact("n", n);
    out.fact("alpha", alpha);
    out.fact("min f", sci(min_f));
    out.fact("max |f| on y = x^(n/(n+alpha))", sci(curve_max));
    out.fact("strict improvements", format!("{improved} of {}", axis.len() * axis.len()));
    out.fact("f(8, 1)", num(spot.f));
    out.passed = min_f >= -1e-12;
    out.data = json!({"min_f": min_f, "zero_curve_max": curve_max, "spot_f_8_1": spot.f, "grid": rows});
    Ok(out)
}

fn transport(config: &RunConfig) -> Result<Outcome, CliError> {
    let cone = cone(config)?;
    let quad = quad(config);
    let h = density(config, cone.dimension)?;
    let region = parse_region(&config.region, &cone, &quad)?;
    let k = Region::ball(region.grid_arc().clone(), 1.0);
    let source = sample_region_uniform(&region, config.samples, config.seed, false)?;
    let target = sample_region_uniform(&k, config.samples, config.seed.wrapping_add(1), false)?;
    let plan =
        if config.samples <= EXACT_CAP { solve_plan(&source, &target)? } else { solve_plan_auction(&source, &target, 1e-6)? };
    let diag = equality_case_diagnostics(&plan, &h);
    let gain = cyclical_monotonicity_gain(&plan, 10_000, 5, config.seed);
    let mut out = Outcome::new(&["epsilon", "transported", "reference", "a", "std_error"]);
    out.fact("samples", config.samples);
    out.fact("solver", format!("{:?}", plan.solver).to_lowercase());
    out.fact("cost", fix(plan.cost));
    out.fact("duality gap", sci(plan.duality_gap));
    out.fact("best translation norm", fix(diag.translation_norm));
    out.fact("residual median", fix(diag.residual_median));
    out.fact("flux proxy", fix(diag.flux_proxy));
    out.fact("cycle gain", sci(gain));
    let tol = config.tol.unwrap_or(1e-12);
    let monotone = gain >= -tol;
    out.fact("cyclically monotone", if monotone { "yes" } else { "no" });
    let table = match weak_convergence_experiment(&cone, &quad, &h, &config.amplitudes, config.samples, config.seed) {
        Ok(rows) => rows,
        Err(Error::Hypothesis(why)) => {
            out.fact("advisory", format!("weak convergence skipped: {why}"));
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    for r in &table {
        out.row(vec![num(r.epsilon), fix(r.transported), fix(r.reference), sci(r.a), sci(r.std_error)]);
    }
    out.passed = monotone;
    out.data = json!({
        "cost": plan.cost,
        "solver": plan.solver,
        "duality_gap": plan.duality_gap,
        "cycle_gain": gain,
        "diagnostics": diag,
        "pairing": plan.pairing,
        "weak_convergence": table,
    });
    Ok(out)
}

fn optimize(config: &RunConfig) -> Result<Outcome, CliError> {
    let cone = cone(config)?;
    let quad = quad(config);
    let h = density(config, cone.dimension)?;
    let grid = grid(&cone, &quad)?;
    let target = Region::ball(grid.clone(), 1.0).weighted_volume(&h)?;
    let method = match config.method {
        MethodArg::ProjectedGradient => Method::ProjectedGradient,
        MethodArg::NelderMead => Method::NelderMead,
    };
    let problem = OptProblem::new(target).with_method(method).with_budget(config.max_iter, OptProblem::new(1.0).tol);
    let seeds: Vec<u64> = (0..config.starts as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let runs: Vec<OptResult> = seeds
        .par_iter()
        .map(|&s| optimize_shape(&problem, &h, &random_smooth_init(grid.clone(), s)?, s))
        .collect::<Result<_, _>>()?;
    let dist_tol = config.tol.unwrap_or(OPTIMIZE_DISTANCE_TOL);
    let k_per = Region::ball(grid, 1.0).perimeter(&h)?;
    let mut out = Outcome::new(&["seed", "iterations", "converged", "perimeter", "mass_error", "distance_to_K", "bound_margin"]);
    for (s, r) in seeds.iter().zip(&runs) {
        out.row(vec![
            s.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            fix(r.perimeter),
            sci(r.mass_error),
            sci(r.distance_to_k),
            sci(r.min_bound_margin),
        ]);
    }
    let worst = runs.iter().map(|r| r.distance_to_k).fold(0.0, f64::max);
    out.fact("target mass", fix(target));
    out.fact("Per_h(K)", fix(k_per));
    out.fact("max distance_to_K", sci(worst));
    out.passed = runs.iter().all(|r| r.converged && r.distance_to_k <= dist_tol);
    if let Some(path) = &config.trace {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(["seed", "iteration", "perimeter"]).map_err(io)?;
        for (s, r) in seeds.iter().zip(&runs) {
            for (i, p) in r.trace.iter().enumerate() {
                w.write_record([s.to_string(), i.to_string(), num(*p)]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    let summaries: Vec<_> = seeds
        .iter()
        .zip(&runs)
        .map(|(s, r)| {
            json!({
                "seed": s, "iterations": r.iterations, "converged": r.converged, "perimeter": r.perimeter,
                "mass": r.mass, "mass_error": r.mass_error, "gradient_norm": r.gradient_norm,
                "floor_active": r.floor_active, "distance_to_k": r.distance_to_k,
                "min_bound_margin": r.min_bound_margin, "radii": r.radii,
            })
        })
        .collect();
    out.data = json!({"target_mass": target, "k_perimeter": k_per, "runs": summaries});
    Ok(out)
}

/// `|x_n|^α`, or the configured density when it is already even in `x_n`.
fn reflect_density(config: &RunConfig) -> Result<BuiltinDensity, CliError> {
    let n = config.n;
    if config.density != RunConfig::default().density {
        let h = density(config, n)?;
        if h.flags().even_in_xn {
            return Ok(h);
        }
        return Err(CliError::Usage(format!("reflect needs a density even in x_n, got `{}`", config.density)));
    }
    let mut exps = vec![0.0; n];
    exps[n - 1] = config.alpha;
    Ok(BuiltinDensity::monomial(exps)?.even_reflection())
}

fn reflect(config: &RunConfig) -> Result<Outcome, CliError> {
    let (n, alpha) = (config.n, config.alpha);
    let split = reflection_split_optimum(n, alpha)?;
    let mut out = Outcome::new(&["quantity", "value", "expected"]);
    let p = n as f64 + alpha;
    out.fact("n", n);
    out.fact("alpha", alpha);
    out.fact("split optimum", format!("R1 = {}, R2 = {}", fix(split.r1), fix(split.r2)));
    out.row(vec!["R1".into(), fix(split.r1), fix(2f64.powf(1.0 / p))]);
    out.row(vec!["R2".into(), fix(split.r2), fix(0.0)]);
    out.row(vec!["split objective".into(), fix(split.optimum_value), fix(2f64.powf((p - 1.0) / p))]);
    out.row(vec!["symmetric objective".into(), fix(split.symmetric_value), fix(2.0)]);
    let mut passed = split.r2.abs() <= 1e-9;
    let mut data = json!({"split": split});
    if n == 2 {
        let remark = reflection_2d_remark(1.0, &quad(config))?;
        out.fact("planar remark", format!("R = {}, ratio {}", fix(1.0 / remark.r_star), fix(remark.perimeter_ratio)));
        out.row(vec!["R*".into(), fix(remark.r_star), fix(remark.r_star_formula)]);
        out.row(vec!["perimeter ratio".into(), fix(remark.perimeter_ratio), fix(2f64.powf(1.0 / 3.0))]);
        data["remark_2d"] = serde_json::to_value(remark).expect("remark serializes");
    }
    let h = reflect_density(config)?;
    let grid = grid(&ConeDescriptor::halfspace(n), &quad(config))?;
    let unit_half = Region::ball(grid.clone(), 1.0).weighted_volume(&h)?;
    let problem = OptProblem::new(2.0 * unit_half).with_budget(config.max_iter, OptProblem::new(1.0).tol);
    let res = reflection_optimize(&problem, &h, grid, config.seed)?;
    out.row(vec!["optimizer perimeter".into(), fix(res.upper.perimeter), fix(res.half_ball_perimeter)]);
    out.row(vec!["full-ball perimeter".into(), fix(res.full_ball_perimeter), String::new()]);
    out.row(vec!["beat factor".into(), fix(res.beat_factor), fix(res.full_ball_perimeter / res.half_ball_perimeter)]);
    out.row(vec!["lower mass".into(), sci(res.lower_mass), fix(0.0)]);
    out.row(vec!["distance to half ball".into(), sci(res.distance_to_half_ball), fix(0.0)]);
    out.fact("optimizer", format!("perimeter {} after {} iterations", fix(res.upper.perimeter), res.upper.iterations));
    let tol = config.tol.unwrap_or(1e-3);
    passed &= res.perimeter_gap <= tol * res.half_ball_perimeter;
    data["optimizer"] = json!({
        "perimeter": res.upper.perimeter, "iterations": res.upper.iterations, "converged": res.upper.converged,
        "upper_mass": res.upper_mass, "lower_mass": res.lower_mass,
        "half_ball_radius": res.half_ball_radius, "half_ball_perimeter": res.half_ball_perimeter,
        "full_ball_radius": res.full_ball_radius, "full_ball_perimeter": res.full_ball_perimeter,
        "beat_factor": res.beat_factor, "perimeter_gap": res.perimeter_gap,
        "distance_to_half_ball": res.distance_to_half_ball,
        "perimeter_without_floor": res.perimeter_without_floor,
    });
    out.passed = passed;
    out.data = data;
    Ok(out)
}

fn stability(config: &RunConfig) -> Result<Outcome, CliError> {
    let cone = cone(config)?;
    let table = stability_scaling(&cone, &quad(config), &config.amplitudes)?;
    let mut out = Outcome::new(&["amplitude", "symdiff", "deficit"]);
    for r in &table.rows {
        out.row(vec![num(r.amplitude), sci(r.symdiff), sci(r.deficit)]);
    }
    out.fact("slope", fix(table.slope));
    out.passed = (1.8..=2.2).contains(&table.slope);
    out.data = serde_json::to_value(&table).expect("table serializes");
    Ok(out)
}

fn run_suite(config: &RunConfig) -> Result<Outcome, CliError> {
    let reports = suite::run_all(config.seed)?;
    let mut out = Outcome::new(&["criterion", "check", "value", "bound", "verdict"]);
    for r in &reports {
        for c in &r.checks {
            out.row(vec![r.id.to_string(), c.label.clone(), sci(c.value), c.bound.clone(), verdict(c.passed).into()]);
        }
    }
    for r in &reports {
        out.fact(&format!("criterion {}", r.id), format!("{} {}", verdict(r.passed()), r.title));
    }
    out.passed = reports.iter().all(suite::CriterionReport::passed);
    out.data = serde_json::to_value(&reports).expect("reports serialize");
    Ok(out)
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}
