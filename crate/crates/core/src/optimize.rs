//! Weighted relative perimeter minimization at fixed weighted mass over
//! radial graphs on a patch grid.
//!
//! Iterates are kept exactly on the mass constraint by rescaling. Radii are
//! bounded below by [`RADIUS_FLOOR`].

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::{check_hypotheses, Density};
use crate::error::{Error, Result};
use crate::grid::PatchGrid;
use crate::lab::coefficient_gamma;
use crate::math::{abs, pow, powi, sqrt};
use crate::qmc::UniformSource;
use crate::quadrature::golden_section_min;
use crate::region::Region;

pub const RADIUS_FLOOR: f64 = 1e-3;

/// Step of the central finite-difference shape gradient.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    ProjectedGradient,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DistanceMode {
    ScaleOnly,
    ScaleAndTranslate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptProblem {
    /// `∫_E h dx` held fixed.
    pub target_mass: f64,
    pub method: Method,
    pub max_iter: usize,
    /// Relative tolerance on the projected gradient.
    pub tol: f64,
    /// Samples for the hypothesis audit; 0 skips it.
    pub audit_samples: usize,
}

impl OptProblem {
    pub fn new(target_mass: f64) -> Self {
        Self { target_mass, method: Method::ProjectedGradient, max_iter: 5000, tol: 1e-9, audit_samples: 500 }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_budget(mut self, max_iter: usize, tol: f64) -> Self {
        self.max_iter = max_iter;
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_mass > 0.0 && self.target_mass.is_finite()) {
            return Err(Error::InvalidArgument(format!("target mass must be positive, got {}", self.target_mass)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptResult {
    pub method: Method,
    pub radii: Vec<f64>,
    /// Perimeter of the initial iterate followed by one entry per iteration.
    pub trace: Vec<f64>,
    pub perimeter: f64,
    pub mass: f64,
    /// Largest `|M − target| / target` over all accepted iterates.
    pub mass_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative projected gradient at the final iterate.
    pub gradient_norm: f64,
    /// Some radius sits on [`RADIUS_FLOOR`] at the final iterate.
    pub floor_active: bool,
    /// `|aE Δ K| / |K|` after optimal scaling (and shift for the halfspace).
    pub distance_to_k: f64,
    /// Smallest `Per_h(E) − γ(|E|/|K|) Per_h(K)` over accepted iterates.
    pub min_bound_margin: f64,
}

impl OptResult {
    pub fn region(&self, grid: Arc<PatchGrid>) -> Result<Region> {
        Region::new(grid, self.radii.clone())
    }
}

/// Perimeter and mass of one or more regions sharing a grid, stacked into a
/// single radii vector.
struct Objective<'a, D: ?Sized> {
    grid: &'a Arc<PatchGrid>,
    density: &'a D,
    blocks: usize,
}

struct Eval {
    perimeter: f64,
    grad: Vec<f64>,
    mass: f64,
    mass_grad: Vec<f64>,
    /// Per block, quadrature coefficients of the preconditioner.
    coeffs: Vec<Vec<f64>>,
}

impl<D: Density + ?Sized> Objective<'_, D> {
    fn len(&self) -> usize {
        self.blocks * self.grid.dof_count()
    }

    fn regions(&self, radii: &[f64]) -> Result<Vec<Region>> {
        radii.chunks(self.grid.dof_count()).map(|c| Region::new(self.grid.clone(), c.to_vec())).collect()
    }

    fn mass(&self, radii: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for r in self.regions(radii)? {
            total += r.weighted_volume(self.density)?;
        }
        Ok(total)
    }

    fn perimeter(&self, radii: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for r in self.regions(radii)? {
            total += r.perimeter(self.density)?;
        }
        Ok(total)
    }

    fn eval(&self, radii: &[f64]) -> Result<Eval> {
        let mut out = Eval { perimeter: 0.0, grad: Vec::new(), mass: 0.0, mass_grad: Vec::new(), coeffs: Vec::new() };
        let n = self.grid.dimension();
        for r in self.regions(radii)? {
            let (p, g) = r.perimeter_with_gradient(self.density)?;
            out.perimeter += p;
            out.grad.extend(g);
            out.mass += r.weighted_volume(self.density)?;
            out.mass_grad.extend(r.weighted_volume_gradient(self.density)?);
            let rho = r.qp_radii()?;
            let mut x = vec![0.0; n];
            let h: Vec<f64> = rho
                .iter()
                .enumerate()
                .map(|(j, &q)| {
                    x.iter_mut().zip(self.grid.qp_direction(j)).for_each(|(xi, w)| *xi = q * w);
                    self.density.value(&x).max(0.0) * pow(q, n as f64 - 3.0)
                })
                .collect();
            let mean = h.iter().sum::<f64>() / h.len() as f64;
            let floor = 1e-3 * mean.max(f64::MIN_POSITIVE);
            out.coeffs.push(h.iter().zip(self.grid.qp_weights()).map(|(h, w)| w * (h + floor)).collect());
        }
        Ok(out)
    }

    /// Approximately solves `A ψ = rhs` per block by Jacobi-preconditioned
    /// conjugate gradients, with frozen coordinates held at zero.
    fn precondition(&self, coeffs: &[Vec<f64>], rhs: &[f64], free: &[bool]) -> Vec<f64> {
        let dofs = self.grid.dof_count();
        let mut out = vec![0.0; rhs.len()];
        for (b, c) in coeffs.iter().enumerate() {
            let range = b * dofs..(b + 1) * dofs;
            let mask = &free[range.clone()];
            let diag = self.grid.sobolev_diag(c);
            let apply = |x: &[f64], y: &mut [f64]| {
                let xm: Vec<f64> = x.iter().zip(mask).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
                self.grid.sobolev_apply(c, &xm, y);
                y.iter_mut().zip(mask).for_each(|(v, f)| if !*f { *v = 0.0 });
            };
            let bvec: Vec<f64> = rhs[range.clone()].iter().zip(mask).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
            let x = conjugate_gradient(apply, &diag, &bvec, 1e-13, 4 * dofs + 50);
            out[range].copy_from_slice(&x);
        }
        out
    }

    /// Clamps at the floor and rescales to the target mass.
    fn project(&self, radii: &mut [f64], target: f64) -> Result<f64> {
        let p = self.grid.dimension() as f64 + self.density.alpha();
        radii.iter_mut().for_each(|r| *r = r.max(RADIUS_FLOOR));
        let mut mass = self.mass(radii)?;
        for _ in 0..100 {
            if abs(mass / target - 1.0) <= 1e-14 {
                break;
            }
            let c = pow(target / mass, 1.0 / p);
            radii.iter_mut().for_each(|r| *r = (c * *r).max(RADIUS_FLOOR));
            mass = self.mass(radii)?;
        }
        Ok(mass)
    }
}

fn at_floor(r: f64) -> bool {
    r <= RADIUS_FLOOR * (1.0 + 1e-9)
}

fn conjugate_gradient(apply: impl Fn(&[f64], &mut [f64]), diag: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let len = b.len();
    let inv: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut x = vec![0.0; len];
    let mut r = b.to_vec();
    let b_norm = sqrt(dot(b, b));
    if b_norm == 0.0 {
        return x;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, i)| r * i).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; len];
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let a = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += a * p);
        r.iter_mut().zip(&ap).for_each(|(r, q)| *r -= a * q);
        if sqrt(dot(&r, &r)) <= tol * b_norm {
            break;
        }
        z.iter_mut().zip(&r).zip(&inv).for_each(|((z, r), i)| *z = r * i);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

struct Direction {
    d: Vec<f64>,
    /// Projected gradient `g − μ m`.
    residual: Vec<f64>,
    /// `‖g − μ m‖` in the dual metric, the predicted first-order decrease.
    decrease: f64,
    /// `decrease` relative to `‖μ m‖` in the same metric, square-rooted.
    rel: f64,
}

/// Preconditioned steepest descent on the mass manifold:
/// `d = −A⁻¹(g − μ m)` with `μ` chosen so that `m · d = 0`. Coordinates on
/// the floor that would move further down are frozen.
fn direction<D: Density + ?Sized>(obj: &Objective<'_, D>, radii: &[f64], ev: &Eval) -> Direction {
    let len = radii.len();
    let mut free = vec![true; len];
    loop {
        let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(&free).map(|(x, f)| if *f { *x } else { 0.0 }).collect() };
        let m = masked(&ev.mass_grad);
        let g = masked(&ev.grad);
        let psi_m = obj.precondition(&ev.coeffs, &m, &free);
        let mm = dot(&psi_m, &m);
        let mu = if mm > 0.0 { dot(&psi_m, &g) / mm } else { 0.0 };
        let residual: Vec<f64> = g.iter().zip(&m).map(|(g, m)| g - mu * m).collect();
        let psi = obj.precondition(&ev.coeffs, &residual, &free);
        let d: Vec<f64> = psi.iter().map(|p| -p).collect();
        let mut changed = false;
        for k in 0..len {
            if free[k] && at_floor(radii[k]) && d[k] < 0.0 {
                free[k] = false;
                changed = true;
            }
        }
        if !changed {
            let decrease = dot(&residual, &psi).max(0.0);
            let scale = mu * mu * mm;
            let rel = if scale > 0.0 { sqrt(decrease / scale) } else { sqrt(decrease) };
            return Direction { d, residual, decrease, rel };
        }
    }
}

struct Run {
    radii: Vec<f64>,
    trace: Vec<f64>,
    mass: f64,
    mass_error: f64,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
}

fn projected_gradient<D: Density + ?Sized>(
    obj: &Objective<'_, D>,
    problem: &OptProblem,
    mut radii: Vec<f64>,
    mut on_accept: impl FnMut(&[f64], f64) -> Result<()>,
) -> Result<Run> {
    let target = problem.target_mass;
    let mut mass = obj.project(&mut radii, target)?;
    let mut mass_error = abs(mass / target - 1.0);
    let mut cur = obj.eval(&radii)?;
    let mut dir = direction(obj, &radii, &cur);
    let mut trace = vec![cur.perimeter];
    on_accept(&radii, cur.perimeter)?;
    let mean_r = radii.iter().sum::<f64>() / radii.len() as f64;
    let mut step = {
        let dmax = dir.d.iter().fold(0.0f64, |m, v| m.max(abs(*v)));
        if dmax > 0.0 { 0.1 * mean_r / dmax } else { 1.0 }
    };
    let mut converged = false;
    let mut stalls = 0;
    let mut iterations = 0;
    while iterations < problem.max_iter {
        if dir.rel <= problem.tol {
            converged = true;
            break;
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = radii.iter().zip(&dir.d).map(|(r, v)| r + t * v).collect();
            let trial = obj.project(&mut cand, target).and_then(|m| Ok((m, obj.perimeter(&cand)?)));
            if let Ok((m, p)) = trial {
                if p <= cur.perimeter - 1e-4 * t * dir.decrease {
                    accepted = Some((cand, m));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, m)) = accepted else {
            // No descent left at machine resolution.
            converged = dir.rel <= problem.tol.max(1e-6);
            break;
        };
        iterations += 1;
        let next = obj.eval(&cand)?;
        let next_dir = direction(obj, &cand, &next);
        let s: Vec<f64> = cand.iter().zip(&radii).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_dir.residual.iter().zip(&dir.residual).map(|(a, b)| a - b).collect();
        let ainv_y: Vec<f64> = dir.d.iter().zip(&next_dir.d).map(|(a, b)| a - b).collect();
        let (sy, yy) = (dot(&s, &y), dot(&y, &ainv_y));
        step = if sy > 0.0 && yy > 0.0 { (sy / yy).clamp(1e-12, 1e6) } else { (2.0 * t).min(1e6) };
        if abs(cur.perimeter - next.perimeter) <= 1e-15 * cur.perimeter {
            stalls += 1;
        } else {
            stalls = 0;
        }
        mass = m;
        mass_error = mass_error.max(abs(m / target - 1.0));
        on_accept(&cand, next.perimeter)?;
        trace.push(next.perimeter);
        radii = cand;
        cur = next;
        dir = next_dir;
        if stalls >= 10 {
            converged = dir.rel <= problem.tol.max(1e-6);
            break;
        }
    }
    let rel = dir.rel;
    if !converged && rel <= problem.tol {
        converged = true;
    }
    Ok(Run { radii, trace, mass, mass_error, iterations, converged, gradient_norm: rel })
}

fn nelder_mead<D: Density + ?Sized>(
    obj: &Objective<'_, D>,
    problem: &OptProblem,
    radii: Vec<f64>,
    mut on_accept: impl FnMut(&[f64], f64) -> Result<()>,
) -> Result<Run> {
    let target = problem.target_mass;
    let dim = radii.len();
    let mut mass_error = 0.0f64;
    let f = |x: &[f64]| -> (f64, Vec<f64>, f64) {
        let mut y = x.to_vec();
        match obj.project(&mut y, target).and_then(|m| Ok((obj.perimeter(&y)?, m))) {
            Ok((p, m)) => (p, y, m),
            Err(_) => (f64::INFINITY, y, f64::NAN),
        }
    };
    let mut start = radii;
    let (p0, y0, m0) = f(&start);
    if !p0.is_finite() {
        return Err(Error::InvalidArgument("initial region has no finite perimeter".into()));
    }
    start = y0;
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), p0)];
    for i in 0..dim {
        let mut v = start.clone();
        v[i] *= 1.05;
        let (p, y, _) = f(&v);
        simplex.push((y, p));
    }
    let mut trace = vec![p0];
    on_accept(&start, p0)?;
    mass_error = mass_error.max(abs(m0 / target - 1.0));
    let mut converged = false;
    let mut iterations = 0;
    let mut best_mass = m0;
    while iterations < problem.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[dim].1 - simplex[0].1;
        if spread <= problem.tol * abs(simplex[0].1) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; dim];
        for (v, _) in &simplex[..dim] {
            centroid.iter_mut().zip(v).for_each(|(c, x)| *c += x / dim as f64);
        }
        let lerp = |t: f64, w: &[f64]| -> Vec<f64> { centroid.iter().zip(w).map(|(c, x)| c + t * (x - c)).collect() };
        let worst = simplex[dim].0.clone();
        let (fr, xr, _) = f(&lerp(-1.0, &worst));
        if fr < simplex[0].1 {
            let (fe, xe, _) = f(&lerp(-2.0, &worst));
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (fc, xc, _) = if fr < simplex[dim].1 { f(&lerp(-0.5, &worst)) } else { f(&lerp(0.5, &worst)) };
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&entry.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let (p, y, _) = f(&x);
                    *entry = (y, p);
                }
            }
        }
        let (bi, bv) = simplex
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, e)| (i, e.1))
            .unwrap_or((0, f64::INFINITY));
        if bv < *trace.last().unwrap_or(&f64::INFINITY) {
            let x = simplex[bi].0.clone();
            best_mass = obj.mass(&x)?;
            mass_error = mass_error.max(abs(best_mass / target - 1.0));
            on_accept(&x, bv)?;
        }
        trace.push(bv.min(*trace.last().unwrap_or(&f64::INFINITY)));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let radii = simplex.swap_remove(0).0;
    let rel = direction(obj, &radii, &obj.eval(&radii)?).rel;
    Ok(Run { radii, trace, mass: best_mass, mass_error, iterations, converged, gradient_norm: rel })
}

fn audit<D: Density + ?Sized>(density: &D, k: &Region, samples: usize, seed: u64) -> Result<()> {
    if samples == 0 {
        return Ok(());
    }
    let report = check_hypotheses(density, k, samples, seed)?;
    if !report.all_passed() {
        let failed: Vec<&str> = [&report.euler, &report.concavity, &report.inward_gradient]
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::Hypothesis(format!("density fails {}", failed.join(", "))));
    }
    Ok(())
}

/// Minimizes `Per_h(E)` over radial graphs on `init`'s grid subject to
/// `∫_E h = target_mass`.
pub fn optimize_shape<D: Density + ?Sized>(problem: &OptProblem, density: &D, init: &Region, seed: u64) -> Result<OptResult> {
    problem.validate()?;
    let grid = init.grid_arc().clone();
    let k = Region::ball(grid.clone(), 1.0);
    audit(density, &k, problem.audit_samples, seed)?;
    let obj = Objective { grid: &grid, density, blocks: 1 };
    let k_vol = k.volume();
    let k_per = k.perimeter(density)?;
    let (n, alpha) = (grid.dimension(), density.alpha());
    let mut margin = f64::INFINITY;
    let on_accept = |radii: &[f64], per: f64| -> Result<()> {
        let e = Region::new(grid.clone(), radii.to_vec())?;
        let bound = coefficient_gamma(e.volume() / k_vol, n, alpha)? * k_per;
        margin = margin.min(per - bound);
        Ok(())
    };
    let run = match problem.method {
        Method::ProjectedGradient => projected_gradient(&obj, problem, init.radii().to_vec(), on_accept)?,
        Method::NelderMead => nelder_mead(&obj, problem, init.radii().to_vec(), on_accept)?,
    };
    let region = Region::new(grid.clone(), run.radii.clone())?;
    let mode = if grid.cone().is_halfspace() { DistanceMode::ScaleAndTranslate } else { DistanceMode::ScaleOnly };
    let distance = distance_to_k(&region, mode)?;
    Ok(OptResult {
        method: problem.method,
        floor_active: run.radii.iter().any(|r| at_floor(*r)),
        perimeter: *run.trace.last().unwrap_or(&f64::NAN),
        radii: run.radii,
        trace: run.trace,
        mass: run.mass,
        mass_error: run.mass_error,
        iterations: run.iterations,
        converged: run.converged,
        gradient_norm: run.gradient_norm,
        distance_to_k: distance,
        min_bound_margin: margin,
    })
}

/// Central finite-difference perimeter gradient with step [`FD_STEP`].
pub fn finite_difference_gradient<D: Density + ?Sized>(region: &Region, density: &D) -> Result<Vec<f64>> {
    let mut radii = region.radii().to_vec();
    let mut out = Vec::with_capacity(radii.len());
    for k in 0..radii.len() {
        let r = radii[k];
        let h = FD_STEP * r.max(1.0);
        radii[k] = r + h;
        let plus = region.with_radii(radii.clone())?.perimeter(density)?;
        radii[k] = r - h;
        let minus = region.with_radii(radii.clone())?.perimeter(density)?;
        radii[k] = r;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Projected shape gradient of the perimeter on the mass manifold, relative
/// to its mean; zero at a constrained critical point.
pub fn projected_gradient_norm<D: Density + ?Sized>(region: &Region, density: &D) -> Result<f64> {
    let obj = Objective { grid: region.grid_arc(), density, blocks: 1 };
    Ok(direction(&obj, region.radii(), &obj.eval(region.radii())?).rel)
}

/// `min_a |aE Δ K|` by golden section, computed from quadrature radii.
fn scale_distance(qp: &[f64], weights: &[f64], n: usize) -> f64 {
    let cost = |a: f64| -> f64 {
        qp.iter().zip(weights).map(|(r, w)| w * abs(powi(a * r, n as i32) - 1.0)).sum::<f64>() / n as f64
    };
    let rmin = qp.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = qp.iter().copied().fold(0.0, f64::max);
    let a = golden_section_min(cost, 1.0 / rmax, 1.0 / rmin, 1e-13);
    cost(a).min(cost(1.0 / rmax)).min(cost(1.0 / rmin))
}

/// Coordinate-wise golden-section search over tangential shifts of a
/// halfspace region, starting from barycentric alignment.
fn min_over_shifts(region: &Region, mut cost: impl FnMut(&Region) -> Result<f64>) -> Result<f64> {
    let n = region.dimension();
    let (_, start) = region.translate_align()?;
    let mean_r = region.radii().iter().sum::<f64>() / region.radii().len() as f64;
    let window = 0.25 * mean_r;
    let mut shift = start;
    let mut best = cost(&region.translated(&shift)?)?;
    for _ in 0..2 {
        for i in 0..n - 1 {
            let centre = shift[i];
            let mut failure = None;
            let mut f = |s: f64| -> f64 {
                let mut v = shift.clone();
                v[i] = s;
                match region.translated(&v).and_then(|e| cost(&e)) {
                    Ok(c) => c,
                    Err(e) => {
                        failure = Some(e);
                        f64::INFINITY
                    }
                }
            };
            let s = golden_section_min(&mut f, centre - window, centre + window, 1e-7 * mean_r);
            let value = f(s);
            if let Some(e) = failure {
                return Err(e);
            }
            if value < best {
                best = value;
                shift[i] = s;
            }
        }
    }
    Ok(best)
}

/// `min |aE + v Δ K| / |K|` over scales `a > 0` and, for
/// [`DistanceMode::ScaleAndTranslate`] on the halfspace, tangential `v`.
pub fn distance_to_k(region: &Region, mode: DistanceMode) -> Result<f64> {
    let n = region.dimension();
    let grid = region.grid();
    let k_vol = grid.surface_measure() / n as f64;
    let by_scale = |e: &Region| -> Result<f64> { Ok(scale_distance(&e.qp_radii()?, e.grid().qp_weights(), n)) };
    let raw = match mode {
        DistanceMode::ScaleOnly => by_scale(region)?,
        DistanceMode::ScaleAndTranslate => {
            if !region.cone().is_halfspace() {
                return Err(Error::Unsupported("tangential shifts need the halfspace cone".into()));
            }
            by_scale(region)?.min(min_over_shifts(region, by_scale)?)
        }
    };
    Ok(raw / k_vol)
}

/// Smooth seeded radii in `[0.5, 1.5]`: a random low-degree polynomial in
/// the direction coordinates, affinely normalized.
pub fn random_smooth_init(grid: Arc<PatchGrid>, seed: u64) -> Result<Region> {
    let n = grid.dimension();
    let mut rng = UniformSource::random(seed);
    let linear: Vec<f64> = (0..n).map(|_| 2.0 * rng.next() - 1.0).collect();
    let quadratic: Vec<f64> = (0..n * n).map(|_| 2.0 * rng.next() - 1.0).collect();
    let cubic: Vec<f64> = (0..n).map(|_| 2.0 * rng.next() - 1.0).collect();
    let amplitude = 0.2 + 0.3 * rng.next();
    let raw: Vec<f64> = (0..grid.dof_count())
        .map(|k| {
            let w = grid.dof_direction(k);
            let mut v = 0.0;
            for i in 0..n {
                v += linear[i] * w[i] + cubic[i] * w[i] * w[i] * w[i];
                for j in 0..n {
                    v += quadratic[i * n + j] * w[i] * w[j];
                }
            }
            v
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(1e-300);
    Region::new(grid, raw.iter().map(|v| 1.0 + amplitude * (v - mid) / half).collect())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReflectionResult {
    /// Upper graph over `{x_n > 0}`.
    pub upper: OptResult,
    /// Radii of the lower graph, stored mirrored onto the upper halfspace.
    pub lower_radii: Vec<f64>,
    pub upper_mass: f64,
    pub lower_mass: f64,
    /// `B_R ∩ {x_n > 0}` carrying the whole target mass.
    pub half_ball_radius: f64,
    pub half_ball_perimeter: f64,
    /// Full ball `B_{R*}` with the same mass.
    pub full_ball_radius: f64,
    pub full_ball_perimeter: f64,
    /// `full_ball_perimeter / perimeter`.
    pub beat_factor: f64,
    /// `perimeter − half_ball_perimeter`.
    pub perimeter_gap: f64,
    /// `min_v (|E⁺ + v Δ B_R⁺| + |E⁻|) / |B_R⁺|`.
    pub distance_to_half_ball: f64,
    /// Perimeter of the upper graph alone, rescaled to the full mass.
    pub perimeter_without_floor: f64,
}

/// Reflection problem for an even density vanishing on `{x_n = 0}`:
/// upper and lower radial graphs about the origin, optimized jointly.
pub fn reflection_optimize<D: Density + ?Sized>(
    problem: &OptProblem,
    density: &D,
    grid: Arc<PatchGrid>,
    seed: u64,
) -> Result<ReflectionResult> {
    problem.validate()?;
    if !grid.cone().is_halfspace() {
        return Err(Error::InvalidArgument("reflection problems live on the halfspace grid".into()));
    }
    if !density.flags().even_in_xn {
        return Err(Error::Hypothesis("density is not declared even in x_n".into()));
    }
    let n = grid.dimension();
    let mut rng = UniformSource::random(seed);
    let mut x = vec![0.0; n];
    for _ in 0..64 {
        let mut z = vec![0.0; n];
        rng.normal_vector(&mut z);
        z[n - 1] = 0.0;
        let len = sqrt(z.iter().map(|v| v * v).sum());
        if len == 0.0 {
            continue;
        }
        let r = 0.1 + 2.0 * rng.next();
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi = r * zi / len);
        let h0 = density.value(&x);
        let mut mirrored = x.clone();
        mirrored[n - 1] = 0.3 * r;
        let up = density.value(&mirrored);
        mirrored[n - 1] = -0.3 * r;
        let down = density.value(&mirrored);
        if !(abs(h0) <= 1e-12) {
            return Err(Error::Hypothesis(format!("density is {h0:e} on the hyperplane x_n = 0")));
        }
        if abs(up - down) > 1e-12 * (1.0 + abs(up)) {
            return Err(Error::Hypothesis("density is not even in x_n".into()));
        }
    }
    let dofs = grid.dof_count();
    let obj = Objective { grid: &grid, density, blocks: 2 };
    let mut init = Vec::with_capacity(obj.len());
    let tilt = 0.6 + 0.2 * rng.next();
    for block in 0..2 {
        let base = if block == 0 { 1.0 } else { tilt };
        for _ in 0..dofs {
            init.push(base * (1.0 + 0.02 * (rng.next() - 0.5)));
        }
    }
    let run = projected_gradient(&obj, problem, init, |_, _| Ok(()))?;
    let (up, low) = run.radii.split_at(dofs);
    let upper = Region::new(grid.clone(), up.to_vec())?;
    let lower = Region::new(grid.clone(), low.to_vec())?;
    let upper_mass = upper.weighted_volume(density)?;
    let lower_mass = lower.weighted_volume(density)?;
    let p = n as f64 + density.alpha();
    let unit = Region::ball(grid.clone(), 1.0);
    let (m1, p1) = (unit.weighted_volume(density)?, unit.perimeter(density)?);
    let r_half = pow(problem.target_mass / m1, 1.0 / p);
    let r_full = pow(problem.target_mass / (2.0 * m1), 1.0 / p);
    let half_per = p1 * pow(r_half, p - 1.0);
    let full_per = 2.0 * p1 * pow(r_full, p - 1.0);
    let perimeter = *run.trace.last().unwrap_or(&f64::NAN);
    let half_ball = Region::ball(grid.clone(), r_half);
    let half_vol = half_ball.volume();
    let lower_vol = lower.volume();
    let cost = |e: &Region| e.symmetric_difference(&half_ball);
    let distance = (cost(&upper)?.min(min_over_shifts(&upper, cost)?) + lower_vol) / half_vol;
    let alone = upper.scaled(pow(problem.target_mass / upper_mass, 1.0 / p))?;
    let upper_result = OptResult {
        method: Method::ProjectedGradient,
        radii: up.to_vec(),
        trace: run.trace,
        perimeter,
        mass: run.mass,
        mass_error: run.mass_error,
        iterations: run.iterations,
        converged: run.converged,
        gradient_norm: run.gradient_norm,
        floor_active: run.radii.iter().any(|r| at_floor(*r)),
        distance_to_k: distance_to_k(&upper, DistanceMode::ScaleAndTranslate)?,
        min_bound_margin: f64::NAN,
    };
    Ok(ReflectionResult {
        upper: upper_result,
        lower_radii: low.to_vec(),
        upper_mass,
        lower_mass,
        half_ball_radius: r_half,
        half_ball_perimeter: half_per,
        full_ball_radius: r_full,
        full_ball_perimeter: full_per,
        beat_factor: full_per / perimeter,
        perimeter_gap: perimeter - half_per,
        distance_to_half_ball: distance,
        perimeter_without_floor: alone.perimeter(density)?,
    })
}

/// Independent runs from `seeds.len()` random smooth initial regions, in
/// seed order.
pub fn multi_start<D: Density + ?Sized>(
    problem: &OptProblem,
    density: &D,
    grid: Arc<PatchGrid>,
    seeds: &[u64],
) -> Result<Vec<OptResult>> {
    seeds
        .iter()
        .map(|&s| optimize_shape(problem, density, &random_smooth_init(grid.clone(), s)?, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConeDescriptor;
    use crate::density::BuiltinDensity;
    use crate::grid::QuadratureSpec;
    use crate::math::cos;

    fn quadrant(res: usize) -> Arc<PatchGrid> {
        Arc::new(PatchGrid::build(&ConeDescriptor::quadrant(), &QuadratureSpec::with_resolution(res)).unwrap())
    }

    fn h_y() -> BuiltinDensity {
        BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn k_is_stationary() {
        let grid = quadrant(64);
        let k = Region::ball(grid, 1.0);
        assert!(projected_gradient_norm(&k, &h_y()).unwrap() < 1e-12);
        let res = optimize_shape(&OptProblem::new(1.0 / 3.0), &h_y(), &k, 0).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
        assert!(res.distance_to_k < 1e-12);
    }

    #[test]
    fn cosine_init_converges_to_k() {
        let grid = quadrant(64);
        let init = Region::from_fn(grid, |w| 1.0 + 0.3 * cos(2.0 * libm::atan2(w[1], w[0]))).unwrap();
        let res = optimize_shape(&OptProblem::new(1.0 / 3.0), &h_y(), &init, 0).unwrap();
        assert!(res.converged, "{} {}", res.iterations, res.gradient_norm);
        assert!(res.distance_to_k < 1e-3, "{}", res.distance_to_k);
        assert!(abs(res.perimeter - 1.0) < 1e-5, "{}", res.perimeter);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.mass_error < 1e-12);
        assert!(res.min_bound_margin >= -1e-9);
    }

    #[test]
    fn nelder_mead_descends() {
        let grid = quadrant(16);
        let init = Region::from_fn(grid, |w| 1.0 + 0.2 * w[0]).unwrap();
        let problem = OptProblem::new(1.0 / 3.0).with_method(Method::NelderMead).with_budget(400, 1e-12);
        let res = optimize_shape(&problem, &h_y(), &init, 0).unwrap();
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(res.perimeter < res.trace[0]);
        assert!(res.mass_error < 1e-12);
    }

    #[test]
    fn distance_recovers_scale() {
        let grid = quadrant(32);
        let three_k = Region::ball(grid.clone(), 3.0);
        assert!(distance_to_k(&three_k, DistanceMode::ScaleOnly).unwrap() < 1e-10);
        let d1 = distance_to_k(&crate::lab::perturbed_sector(grid.clone(), 0.05).unwrap(), DistanceMode::ScaleOnly).unwrap();
        let d2 = distance_to_k(&crate::lab::perturbed_sector(grid, 0.1).unwrap(), DistanceMode::ScaleOnly).unwrap();
        assert!(0.0 < d1 && d1 < d2);
    }

    #[test]
    fn distance_modes_on_halfspace() {
        let quad = QuadratureSpec::with_resolution(64);
        let grid = Arc::new(PatchGrid::build(&ConeDescriptor::halfspace(2), &quad).unwrap());
        let shifted = Region::ball(grid, 1.0).translated(&[0.2, 0.0]).unwrap();
        let only = distance_to_k(&shifted, DistanceMode::ScaleOnly).unwrap();
        let both = distance_to_k(&shifted, DistanceMode::ScaleAndTranslate).unwrap();
        assert!(only > 0.05, "{only}");
        assert!(both < 1e-6, "{both}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = quadrant(16);
        let h = h_y();
        for seed in 0..5 {
            let e = random_smooth_init(grid.clone(), seed).unwrap();
            let (_, g) = e.perimeter_with_gradient(&h).unwrap();
            let fd = finite_difference_gradient(&e, &h).unwrap();
            let scale = g.iter().fold(0.0f64, |m, v| m.max(abs(*v)));
            for (a, b) in g.iter().zip(&fd) {
                assert!(abs(a - b) <= 1e-4 * scale, "{a} {b}");
            }
        }
    }

    #[test]
    fn reflection_rejects_odd_density() {
        let quad = QuadratureSpec::with_resolution(32);
        let grid = Arc::new(PatchGrid::build(&ConeDescriptor::halfspace(2), &quad).unwrap());
        let err = reflection_optimize(&OptProblem::new(4.0 / 3.0), &h_y(), grid.clone(), 0);
        assert!(matches!(err, Err(Error::Hypothesis(_))));
        let shifted = BuiltinDensity::Constant;
        assert!(reflection_optimize(&OptProblem::new(1.0), &shifted, grid, 0).is_err());
    }

    #[test]
    fn reflection_prefers_one_half_ball() {
        let quad = QuadratureSpec::with_resolution(64);
        let grid = Arc::new(PatchGrid::build(&ConeDescriptor::halfspace(2), &quad).unwrap());
        let h = h_y().even_reflection();
        let res = reflection_optimize(&OptProblem::new(4.0 / 3.0), &h, grid, 1).unwrap();
        assert!(abs(res.half_ball_radius - pow(2.0, 1.0 / 3.0)) < 1e-10);
        assert!(abs(res.half_ball_perimeter - pow(2.0, 5.0 / 3.0)) < 1e-9);
        assert!(res.beat_factor >= pow(2.0, 1.0 / 3.0) - 1e-3, "{}", res.beat_factor);
        assert!(res.lower_mass < 1e-6 * res.upper_mass);
        assert!(res.distance_to_half_ball < 1e-2, "{}", res.distance_to_half_ball);
    }
}
