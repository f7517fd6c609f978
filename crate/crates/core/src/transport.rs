//! Discrete optimal transport between uniform samples of two regions.
//!
//! The exact solver is the shortest-augmenting-path Hungarian method with
//! potentials; squared distances are computed on the fly so memory stays
//! linear in `N`. Above [`EXACT_CAP`] points the ε-scaled auction is used and
//! reports its duality gap.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cone::ConeDescriptor;
use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::QuadratureSpec;
use crate::math::{dist2, median, pow, sqrt};
use crate::qmc::UniformSource;
use crate::region::Region;

/// Largest instance accepted by [`solve_plan`].
pub const EXACT_CAP: usize = 4000;

/// `N` points in `R^dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::InvalidArgument("coordinate count is not a multiple of the dimension".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn translated(&self, v: &[f64]) -> Self {
        let coords = self.coords.iter().enumerate().map(|(k, x)| x + v[k % self.dim]).collect();
        Self { dim: self.dim, coords }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { dim: self.dim, coords: self.coords.iter().map(|x| a * x).collect() }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            m.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// `N` points uniformly distributed in `E`.
///
/// A direction is drawn uniformly on `Ω` and accepted with probability
/// `(ρ(ω)/ρ_max)^n`, which makes its law proportional to `ρ^n dω`; the radius
/// is then `ρ(ω) U^{1/n}`, the inverse CDF of `n r^{n-1}/ρ^n` on `[0, ρ]`.
pub fn sample_region_uniform(region: &Region, count: usize, seed: u64, low_discrepancy: bool) -> Result<PointSet> {
    let n = region.dimension();
    let grid = region.grid();
    let cone = region.cone();
    let rho_qp = region.qp_radii()?;
    let rho_max = region.radii().iter().chain(&rho_qp).copied().fold(0.0, f64::max) * (1.0 + 1e-9);
    let even = n.div_ceil(2) * 2;
    let dims = even + 2;
    let mut source =
        if low_discrepancy { UniformSource::low_discrepancy(dims, seed) } else { UniformSource::random(seed) };
    let mut buf = vec![0.0; dims];
    let mut z = vec![0.0; even];
    let mut coords = Vec::with_capacity(count * n);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < count {
        attempts += 1;
        if attempts > 10_000 * (count + 10) {
            return Err(Error::DegenerateCone("sampling rejected too many candidate directions".into()));
        }
        source.fill(&mut buf);
        crate::qmc::box_muller(&buf[..even], &mut z);
        let len = sqrt(z[..n].iter().map(|v| v * v).sum());
        if len == 0.0 {
            continue;
        }
        let omega: Vec<f64> = z[..n].iter().map(|v| v / len).collect();
        if !cone.contains(&omega) {
            continue;
        }
        let Some(rho) = grid.radius_at(region.radii(), &omega) else { continue };
        if rho <= 0.0 {
            continue;
        }
        let ratio = rho / rho_max;
        if buf[even] >= pow(ratio, n as f64) {
            continue;
        }
        let u = buf[even + 1];
        if u <= 0.0 {
            continue;
        }
        let r = rho * pow(u, 1.0 / n as f64);
        coords.extend(omega.iter().map(|w| r * w));
        accepted += 1;
    }
    PointSet::new(n, coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolverKind {
    Hungarian,
    Auction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub source: PointSet,
    pub target: PointSet,
    /// `pairing[i]` is the target index matched to source `i`.
    pub pairing: Vec<usize>,
    /// `(1/N) Σ |x_i − y_{σ(i)}|²`.
    pub cost: f64,
    pub solver: SolverKind,
    /// Per-point duality gap of the auction; zero for the exact solver.
    pub duality_gap: f64,
}

impl TransportPlan {
    pub fn len(&self) -> usize {
        self.pairing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairing.is_empty()
    }

    pub fn displacement(&self, i: usize) -> Vec<f64> {
        let x = self.source.point(i);
        let y = self.target.point(self.pairing[i]);
        y.iter().zip(x).map(|(a, b)| a - b).collect()
    }

    /// Image of the source points under the plan, in source order.
    pub fn image(&self) -> PointSet {
        let coords = self.pairing.iter().flat_map(|&j| self.target.point(j).iter().copied()).collect();
        PointSet { dim: self.target.dim, coords }
    }
}

fn check_sizes(source: &PointSet, target: &PointSet) -> Result<()> {
    if source.len() != target.len() {
        return Err(Error::SizeMismatch { source_len: source.len(), target_len: target.len() });
    }
    if source.dim != target.dim {
        return Err(Error::InvalidArgument("source and target dimensions differ".into()));
    }
    Ok(())
}

fn total_cost(source: &PointSet, target: &PointSet, pairing: &[usize]) -> f64 {
    pairing.iter().enumerate().map(|(i, &j)| dist2(source.point(i), target.point(j))).sum()
}

/// Exact optimal assignment under squared Euclidean cost. Ties between
/// optimal pairings are resolved by a fixed scan order, so output is
/// reproducible.
pub fn solve_plan(source: &PointSet, target: &PointSet) -> Result<TransportPlan> {
    check_sizes(source, target)?;
    let n = source.len();
    if n > EXACT_CAP {
        return Err(Error::OverCap { n, cap: EXACT_CAP });
    }
    let pairing = hungarian(source, target);
    let cost = if n == 0 { 0.0 } else { total_cost(source, target, &pairing) / n as f64 };
    Ok(TransportPlan {
        source: source.clone(),
        target: target.clone(),
        pairing,
        cost,
        solver: SolverKind::Hungarian,
        duality_gap: 0.0,
    })
}

/// Shortest augmenting paths with row/column potentials (Jonker–Volgenant
/// style, one scan of the unlabeled columns per Dijkstra step). Ties prefer
/// free columns, then earlier positions in the scan list.
fn hungarian(source: &PointSet, target: &PointSet) -> Vec<usize> {
    const FREE: usize = usize::MAX;
    let n = source.len();
    let dim = source.dim;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut shortest = vec![f64::INFINITY; n];
    let mut path = vec![FREE; n];
    let mut col4row = vec![FREE; n];
    let mut row4col = vec![FREE; n];
    let mut seen_row = vec![false; n];
    let mut seen_col = vec![false; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);
    for cur_row in 0..n {
        remaining.clear();
        remaining.extend((0..n).rev());
        shortest.iter_mut().for_each(|s| *s = f64::INFINITY);
        seen_row.iter_mut().for_each(|b| *b = false);
        seen_col.iter_mut().for_each(|b| *b = false);
        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink = loop {
            seen_row[i] = true;
            let xi = &source.coords[i * dim..(i + 1) * dim];
            let ui = u[i];
            let mut lowest = f64::INFINITY;
            let mut index = 0usize;
            for (it, &j) in remaining.iter().enumerate() {
                let y = &target.coords[j * dim..(j + 1) * dim];
                let r = min_val + dist2(xi, y) - ui - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == FREE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            let j = remaining.swap_remove(index);
            seen_col[j] = true;
            if row4col[j] == FREE {
                break j;
            }
            i = row4col[j];
        };
        u[cur_row] += min_val;
        for r in 0..n {
            if seen_row[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..n {
            if seen_col[c] {
                v[c] -= min_val - shortest[c];
            }
        }
        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            core::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}

/// ε-scaled forward auction; the final per-point gap is at most `epsilon`.
pub fn solve_plan_auction(source: &PointSet, target: &PointSet, epsilon: f64) -> Result<TransportPlan> {
    check_sizes(source, target)?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument("auction epsilon must be positive".into()));
    }
    let n = source.len();
    if n == 0 {
        return Ok(TransportPlan {
            source: source.clone(),
            target: target.clone(),
            pairing: Vec::new(),
            cost: 0.0,
            solver: SolverKind::Auction,
            duality_gap: 0.0,
        });
    }
    let c = |i: usize, j: usize| dist2(source.point(i), target.point(j));
    let mut max_cost: f64 = 0.0;
    for i in 0..n.min(64) {
        for j in 0..n {
            max_cost = max_cost.max(c(i, j));
        }
    }
    let mut prices = vec![0.0; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut eps = (max_cost / 4.0).max(epsilon);
    loop {
        owner.iter_mut().for_each(|o| *o = None);
        assigned.iter_mut().for_each(|a| *a = None);
        let mut queue: Vec<usize> = (0..n).rev().collect();
        while let Some(i) = queue.pop() {
            // Value of object j to person i is −c(i,j) − p_j.
            let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut best_j = 0usize;
            for j in 0..n {
                let val = -c(i, j) - prices[j];
                if val > best {
                    second = best;
                    best = val;
                    best_j = j;
                } else if val > second {
                    second = val;
                }
            }
            let incr = if second.is_finite() { best - second + eps } else { eps };
            prices[best_j] += incr;
            if let Some(prev) = owner[best_j] {
                assigned[prev] = None;
                queue.push(prev);
            }
            owner[best_j] = Some(i);
            assigned[i] = Some(best_j);
        }
        if eps <= epsilon {
            break;
        }
        eps = (eps / 5.0).max(epsilon);
    }
    let pairing: Vec<usize> = assigned.iter().map(|a| a.unwrap_or(0)).collect();
    let primal = total_cost(source, target, &pairing);
    // Dual of the benefit problem: Σ_i max_j(−c_ij − p_j) + Σ_j p_j.
    let mut dual = prices.iter().sum::<f64>();
    for i in 0..n {
        dual += (0..n).map(|j| -c(i, j) - prices[j]).fold(f64::NEG_INFINITY, f64::max);
    }
    let gap = (dual + primal).max(0.0) / n as f64;
    Ok(TransportPlan {
        source: source.clone(),
        target: target.clone(),
        pairing,
        cost: primal / n as f64,
        solver: SolverKind::Auction,
        duality_gap: gap,
    })
}

/// Minimum over all `N!` pairings by enumeration (Heap's algorithm); meant
/// as an oracle for `N ≤ 8`.
pub fn brute_force_assignment(source: &PointSet, target: &PointSet) -> Result<(Vec<usize>, f64)> {
    check_sizes(source, target)?;
    let n = source.len();
    if n > 10 {
        return Err(Error::OverCap { n, cap: 10 });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = total_cost(source, target, &perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let cost = total_cost(source, target, &perm);
            if cost < best_cost {
                best_cost = cost;
                best.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best, if n == 0 { 0.0 } else { best_cost / n as f64 }))
}

/// Smallest cycle-exchange gain `Σ c(x_{i_k}, y_{σ(i_{k+1})}) − Σ c(x_{i_k}, y_{σ(i_k)})`
/// over random cycles of length `2..=max_len`; nonnegative for any
/// optimal plan.
pub fn cyclical_monotonicity_gain(plan: &TransportPlan, cycles: usize, max_len: usize, seed: u64) -> f64 {
    let n = plan.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut idx = Vec::with_capacity(max_len);
    for _ in 0..cycles {
        let len = rng.gen_range(2..=max_len.max(2).min(n));
        idx.clear();
        while idx.len() < len {
            let k = rng.gen_range(0..n);
            if !idx.contains(&k) {
                idx.push(k);
            }
        }
        let mut gain = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            let next = idx[(a + 1) % len];
            let x = plan.source.point(i);
            gain += dist2(x, plan.target.point(plan.pairing[next])) - dist2(x, plan.target.point(plan.pairing[i]));
        }
        worst = worst.min(gain);
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EqualityDiagnostics {
    /// Mean displacement, the least-squares translation.
    pub best_translation: Vec<f64>,
    pub translation_norm: f64,
    /// Median of `|y_{σ(i)} − x_i − x0*|`.
    pub residual_median: f64,
    /// Mean of `(y_{σ(i)})_n · ∂_n h(x_i)`.
    pub flux_proxy: f64,
}

pub fn equality_case_diagnostics<D: Density + ?Sized>(plan: &TransportPlan, density: &D) -> EqualityDiagnostics {
    let n = plan.len();
    let dim = plan.source.dim;
    let mut x0 = vec![0.0; dim];
    for i in 0..n {
        x0.iter_mut().zip(plan.displacement(i)).for_each(|(a, d)| *a += d);
    }
    x0.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    let mut residuals: Vec<f64> = (0..n)
        .map(|i| {
            let d = plan.displacement(i);
            sqrt(d.iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect();
    let mut grad = vec![0.0; dim];
    let mut flux = 0.0;
    for i in 0..n {
        density.gradient(plan.source.point(i), &mut grad);
        flux += plan.target.point(plan.pairing[i])[dim - 1] * grad[dim - 1];
    }
    EqualityDiagnostics {
        translation_norm: sqrt(x0.iter().map(|a| a * a).sum()),
        best_translation: x0,
        residual_median: median(&mut residuals),
        flux_proxy: flux / n.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakConvergenceRow {
    pub epsilon: f64,
    /// Monte Carlo estimate of `∫_{E_ε} T_ε · ∇h dx`.
    pub transported: f64,
    /// `∫_K x · ∇h dx` by quadrature.
    pub reference: f64,
    pub a: f64,
    /// Standard error of `a` from the sample variance.
    pub std_error: f64,
}

/// `a(ε) = |∫_{E_ε} T_ε·∇h − ∫_K x·∇h| / ∫_K x·∇h` for volume-normalized
/// perturbations `E_ε` of `K`. Target samples are shared across rows and
/// source samples reuse one seed (common random numbers).
pub fn weak_convergence_experiment<D: Density + ?Sized>(
    cone: &ConeDescriptor,
    quad: &QuadratureSpec,
    density: &D,
    amplitudes: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<WeakConvergenceRow>> {
    let k = Region::unit_ball_sector(cone, quad)?;
    let n = k.dimension();
    let reference = k.integrate(
        |x| {
            let mut g = vec![0.0; n];
            density.gradient(x, &mut g);
            g.iter().zip(x).map(|(a, b)| a * b).sum()
        },
        quad.radial_nodes(),
    )?;
    if !(reference > 0.0) {
        return Err(Error::Hypothesis(alloc::format!("reference integral ∫_K x·∇h = {reference} is not positive")));
    }
    let target = sample_region_uniform(&k, count, seed, false)?;
    let mut rows = Vec::with_capacity(amplitudes.len());
    let mut grad = vec![0.0; n];
    for &eps in amplitudes {
        let e = crate::lab::perturbed_sector(k.grid_arc().clone(), eps)?;
        let source = sample_region_uniform(&e, count, seed ^ 0x9e37_79b9_7f4a_7c15, false)?;
        let plan = if count <= EXACT_CAP { solve_plan(&source, &target)? } else { solve_plan_auction(&source, &target, 1e-6)? };
        let vol = e.volume();
        let mut vals = Vec::with_capacity(count);
        for i in 0..count {
            density.gradient(plan.source.point(i), &mut grad);
            let y = plan.target.point(plan.pairing[i]);
            vals.push(vol * y.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>());
        }
        let mean = vals.iter().sum::<f64>() / count as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count.max(2) - 1) as f64;
        rows.push(WeakConvergenceRow {
            epsilon: eps,
            transported: mean,
            reference,
            a: (mean - reference).abs() / reference,
            std_error: sqrt(var / count as f64) / reference,
        });
    }
    Ok(rows)
}
