//! Star-shaped regions `E = {rω : ω ∈ Ω, 0 < r < ρ(ω)}` and the integrals
//! over them.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cone::ConeDescriptor;
use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::{PatchGrid, QuadratureSpec, RadialRule};
use crate::math::{abs, pow, powi, sqrt};
use crate::quadrature::gauss_legendre;

/// Radial function on a shared patch grid. Radii are strictly positive.
#[derive(Debug, Clone)]
pub struct Region {
    grid: Arc<PatchGrid>,
    radii: Vec<f64>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.radii == other.radii
    }
}

impl Region {
    pub fn new(grid: Arc<PatchGrid>, radii: Vec<f64>) -> Result<Self> {
        if radii.len() != grid.dof_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} radii, got {}",
                grid.dof_count(),
                radii.len()
            )));
        }
        if let Some((node, &value)) = radii.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::NonPositiveRadius { node, value });
        }
        Ok(Self { grid, radii })
    }

    /// `K = B_1 ∩ C` on a freshly built grid.
    pub fn unit_ball_sector(cone: &ConeDescriptor, quad: &QuadratureSpec) -> Result<Self> {
        let grid = Arc::new(PatchGrid::build(cone, quad)?);
        Ok(Self::ball(grid, 1.0))
    }

    /// `B_r ∩ C` on an existing grid.
    pub fn ball(grid: Arc<PatchGrid>, r: f64) -> Self {
        let radii = vec![r; grid.dof_count()];
        Self { grid, radii }
    }

    /// Radii `ρ(ω_k) = f(ω_k)` at every degree of freedom.
    pub fn from_fn(grid: Arc<PatchGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let radii = (0..grid.dof_count()).map(|k| f(grid.dof_direction(k))).collect();
        Self::new(grid, radii)
    }

    /// The cube `(0, side)^n` on an orthant grid (`ρ = side / max_i ω_i`).
    pub fn cube(grid: Arc<PatchGrid>, side: f64) -> Result<Self> {
        Self::from_fn(grid, |w| side / w.iter().copied().fold(f64::MIN, f64::max))
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<PatchGrid> {
        &self.grid
    }

    pub fn cone(&self) -> &ConeDescriptor {
        self.grid.cone()
    }

    pub fn dimension(&self) -> usize {
        self.grid.dimension()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn into_radii(self) -> Vec<f64> {
        self.radii
    }

    pub fn with_radii(&self, radii: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), radii)
    }

    pub fn same_grid(&self, other: &Region) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.compatible(&other.grid)
    }

    /// Radii at the quadrature points, rejecting any non-positive value.
    pub fn qp_radii(&self) -> Result<Vec<f64>> {
        let rho = self.grid.interpolate(&self.radii);
        if let Some((node, &value)) = rho.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::NonPositiveRadius { node, value });
        }
        Ok(rho)
    }

    /// Lebesgue volume `Σ w ρ^n / n`.
    pub fn volume(&self) -> f64 {
        let n = self.dimension() as i32;
        let rho = self.grid.interpolate(&self.radii);
        rho.iter().zip(self.grid.qp_weights()).map(|(r, w)| w * powi(*r, n)).sum::<f64>() / n as f64
    }

    /// `∫_E h dx`; exact in the radial variable for homogeneous densities.
    pub fn weighted_volume<D: Density + ?Sized>(&self, density: &D) -> Result<f64> {
        let n = self.dimension();
        let rho = self.qp_radii()?;
        let quad = self.grid.quadrature();
        let closed = density.flags().claims_homogeneous && quad.radial_rule == RadialRule::ClosedFormHomogeneous;
        if closed {
            let p = n as f64 + density.alpha();
            let mut total = 0.0;
            for (j, r) in rho.iter().enumerate() {
                let h = checked_value(density, self.grid.qp_direction(j), j)?;
                total += self.grid.qp_weight(j) * h * pow(*r, p) / p;
            }
            Ok(total)
        } else {
            let mut total = 0.0;
            let (gx, gw) = gauss_legendre(quad.radial_nodes());
            let mut x = vec![0.0; n];
            for (j, r) in rho.iter().enumerate() {
                let omega = self.grid.qp_direction(j);
                let mut inner = 0.0;
                for (t, wt) in gx.iter().zip(&gw) {
                    let s = 0.5 * r * (t + 1.0);
                    x.iter_mut().zip(omega).for_each(|(xi, w)| *xi = s * w);
                    inner += wt * checked_value(density, &x, j)? * pow(s, (n - 1) as f64);
                }
                total += self.grid.qp_weight(j) * 0.5 * r * inner;
            }
            Ok(total)
        }
    }

    /// `∫_E f dx` by Gauss–Legendre in the radial variable.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64, radial_nodes: usize) -> Result<f64> {
        let n = self.dimension();
        let rho = self.qp_radii()?;
        let (gx, gw) = gauss_legendre(radial_nodes);
        let mut x = vec![0.0; n];
        let mut total = 0.0;
        for (j, r) in rho.iter().enumerate() {
            let omega = self.grid.qp_direction(j);
            let mut inner = 0.0;
            for (t, wt) in gx.iter().zip(&gw) {
                let s = 0.5 * r * (t + 1.0);
                x.iter_mut().zip(omega).for_each(|(xi, w)| *xi = s * w);
                inner += wt * f(&x) * pow(s, (n - 1) as f64);
            }
            total += self.grid.qp_weight(j) * 0.5 * r * inner;
        }
        Ok(total)
    }

    /// Derivative of `∫_E h dx` with respect to each radius.
    pub fn weighted_volume_gradient<D: Density + ?Sized>(&self, density: &D) -> Result<Vec<f64>> {
        let n = self.dimension();
        let rho = self.qp_radii()?;
        let mut out = vec![0.0; self.radii.len()];
        let mut x = vec![0.0; n];
        for (j, r) in rho.iter().enumerate() {
            x.iter_mut().zip(self.grid.qp_direction(j)).for_each(|(xi, w)| *xi = r * w);
            let h = checked_value(density, &x, j)?;
            let c = self.grid.qp_weight(j) * h * pow(*r, (n - 1) as f64);
            self.grid.value.scatter(j, c, &mut out);
        }
        Ok(out)
    }

    /// Weighted relative perimeter `Σ w h(ρω) ρ^{n-2} √(ρ² + |∇ρ|²)`.
    pub fn perimeter<D: Density + ?Sized>(&self, density: &D) -> Result<f64> {
        self.perimeter_impl(density, None)
    }

    /// Perimeter and its derivative with respect to each radius.
    pub fn perimeter_with_gradient<D: Density + ?Sized>(&self, density: &D) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.radii.len()];
        let p = self.perimeter_impl(density, Some(&mut g))?;
        Ok((p, g))
    }

    fn perimeter_impl<D: Density + ?Sized>(&self, density: &D, mut grad: Option<&mut Vec<f64>>) -> Result<f64> {
        let n = self.dimension();
        let m = self.grid.tangent_dim();
        let rho = self.qp_radii()?;
        let mut raised = vec![0.0; m];
        let mut x = vec![0.0; n];
        let mut dh = vec![0.0; n];
        let homogeneous = density.flags().claims_homogeneous;
        let alpha = density.alpha();
        let nm2 = (n - 2) as f64;
        let mut total = 0.0;
        for (j, &r) in rho.iter().enumerate() {
            let omega = self.grid.qp_direction(j);
            let w = self.grid.qp_weight(j);
            let gsq = self.grid.gradient_sq(&self.radii, j, &mut raised);
            let s = sqrt(r * r + gsq);
            if !s.is_finite() {
                return Err(Error::NonFiniteGradient { node: j });
            }
            x.iter_mut().zip(omega).for_each(|(xi, o)| *xi = r * o);
            let h = checked_value(density, &x, j)?;
            let rp = if n == 2 { 1.0 } else { pow(r, nm2) };
            total += w * h * rp * s;
            if let Some(out) = grad.as_deref_mut() {
                let dh_dr = if homogeneous {
                    alpha * h / r
                } else {
                    density.gradient(&x, &mut dh);
                    let v: f64 = dh.iter().zip(omega).map(|(a, b)| a * b).sum();
                    if !v.is_finite() {
                        return Err(Error::NonFiniteGradient { node: j });
                    }
                    v
                };
                let drp = if n == 2 { 0.0 } else { nm2 * pow(r, nm2 - 1.0) };
                let direct = dh_dr * rp * s + h * drp * s + h * rp * r / s;
                self.grid.value.scatter(j, w * direct, out);
                let c = w * h * rp / s;
                for (a, ra) in raised.iter().enumerate() {
                    self.grid.grads[a].scatter(j, c * ra, out);
                }
            }
        }
        Ok(total)
    }

    /// `∫_Ω |ρ_A^n − ρ_B^n| / n dω = |A Δ B|`.
    pub fn symmetric_difference(&self, other: &Region) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::IncompatibleGrids);
        }
        let n = self.dimension() as i32;
        let a = self.grid.interpolate(&self.radii);
        let b = self.grid.interpolate(&other.radii);
        Ok(a
            .iter()
            .zip(&b)
            .zip(self.grid.qp_weights())
            .map(|((ra, rb), w)| w * abs(powi(*ra, n) - powi(*rb, n)))
            .sum::<f64>()
            / n as f64)
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::NonPositiveScale(a));
        }
        Ok(Self { grid: self.grid.clone(), radii: self.radii.iter().map(|r| a * r).collect() })
    }

    /// Lebesgue barycenter `(1/|E|) ∫_E x dx`.
    pub fn barycenter(&self) -> Vec<f64> {
        let n = self.dimension();
        let rho = self.grid.interpolate(&self.radii);
        let mut c = vec![0.0; n];
        for (j, r) in rho.iter().enumerate() {
            let f = self.grid.qp_weight(j) * powi(*r, n as i32 + 1) / (n as f64 + 1.0);
            c.iter_mut().zip(self.grid.qp_direction(j)).for_each(|(ci, w)| *ci += f * w);
        }
        let vol = self.volume();
        c.iter_mut().for_each(|ci| *ci /= vol);
        c
    }

    /// Radial function of `E + v` for a halfspace region and a shift `v`
    /// parallel to `{x_n = 0}`.
    pub fn translated(&self, v: &[f64]) -> Result<Self> {
        let n = self.dimension();
        if !self.cone().is_halfspace() {
            return Err(Error::Unsupported("translations are only defined for the halfspace cone".into()));
        }
        if v.len() != n || abs(v[n - 1]) > 0.0 {
            return Err(Error::InvalidArgument("shift must be tangential to {x_n = 0}".into()));
        }
        let rmax = self.radii.iter().copied().fold(0.0, f64::max);
        let vnorm = sqrt(v.iter().map(|x| x * x).sum());
        let mut radii = Vec::with_capacity(self.radii.len());
        let mut y = vec![0.0; n];
        for k in 0..self.grid.dof_count() {
            let omega = self.grid.dof_direction(k);
            let inside = |r: f64, y: &mut [f64]| -> bool {
                for i in 0..n {
                    y[i] = r * omega[i] - v[i];
                }
                let len = sqrt(y.iter().map(|t| t * t).sum());
                if len == 0.0 {
                    return true;
                }
                y.iter_mut().for_each(|t| *t /= len);
                match self.grid.radius_at(&self.radii, y) {
                    Some(rho) => len < rho,
                    None => false,
                }
            };
            let (mut lo, mut hi) = (0.0, 2.0 * (rmax + vnorm) + 1.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if inside(mid, &mut y) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            radii.push(0.5 * (lo + hi));
        }
        Self::new(self.grid.clone(), radii)
    }

    /// Shifts a halfspace region so that the tangential coordinates of its
    /// barycenter vanish; returns the region and the total shift applied.
    pub fn translate_align(&self) -> Result<(Self, Vec<f64>)> {
        let n = self.dimension();
        let mut region = self.clone();
        let mut total = vec![0.0; n];
        for _ in 0..3 {
            let b = region.barycenter();
            let mut shift = vec![0.0; n];
            for i in 0..n - 1 {
                shift[i] = -b[i];
            }
            if shift.iter().all(|s| abs(*s) < 1e-15) {
                break;
            }
            region = region.translated(&shift)?;
            total.iter_mut().zip(&shift).for_each(|(t, s)| *t += s);
        }
        Ok((region, total))
    }

    /// The same set described on another grid over the same cone.
    pub fn resampled(&self, grid: Arc<PatchGrid>) -> Result<Self> {
        if grid.cone() != self.cone() {
            return Err(Error::IncompatibleGrids);
        }
        let mut radii = Vec::with_capacity(grid.dof_count());
        for k in 0..grid.dof_count() {
            let r = self
                .grid
                .radius_at(&self.radii, grid.dof_direction(k))
                .ok_or(Error::IncompatibleGrids)?;
            radii.push(r);
        }
        Self::new(grid, radii)
    }

    pub fn to_data(&self) -> RegionData {
        RegionData {
            cone: self.cone().clone(),
            quadrature: self.grid.quadrature().clone(),
            radii: self.radii.clone(),
        }
    }
}

fn checked_value<D: Density + ?Sized>(density: &D, x: &[f64], node: usize) -> Result<f64> {
    let h = density.value(x);
    if !h.is_finite() {
        return Err(Error::NonFiniteDensity { node });
    }
    if h < 0.0 {
        return Err(Error::NegativeDensity { node, value: h });
    }
    Ok(h)
}

/// Serializable description of a region; the grid is rebuilt on load.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionData {
    pub cone: ConeDescriptor,
    pub quadrature: QuadratureSpec,
    pub radii: Vec<f64>,
}

impl RegionData {
    pub fn into_region(self) -> Result<Region> {
        let grid = Arc::new(PatchGrid::build(&self.cone, &self.quadrature)?);
        Region::new(grid, self.radii)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::BuiltinDensity;
    use crate::math::{cos, PI};
    use approx::assert_relative_eq;

    fn quadrant_grid(res: usize) -> Arc<PatchGrid> {
        Arc::new(PatchGrid::build(&ConeDescriptor::quadrant(), &QuadratureSpec::with_resolution(res)).unwrap())
    }

    #[test]
    fn unit_sector_volumes() {
        let k = Region::unit_ball_sector(&ConeDescriptor::quadrant(), &QuadratureSpec::default()).unwrap();
        assert!(k.radii().iter().all(|&r| r == 1.0));
        assert_relative_eq!(k.volume(), PI / 4.0, max_relative = 1e-13);
        let k3 = Region::unit_ball_sector(&ConeDescriptor::orthant(3), &QuadratureSpec::with_resolution(32)).unwrap();
        assert_relative_eq!(k3.volume(), PI / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn weighted_integrals_on_quarter_disk() {
        let k = Region::ball(quadrant_grid(64), 1.0);
        let y = BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(k.weighted_volume(&y).unwrap(), 1.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(k.perimeter(&y).unwrap(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(k.perimeter(&BuiltinDensity::Constant).unwrap(), PI / 2.0, epsilon = 1e-13);
        let gl = Region::unit_ball_sector(
            &ConeDescriptor::quadrant(),
            &QuadratureSpec { radial_rule: RadialRule::GaussLegendre { nodes: 8 }, ..QuadratureSpec::default() },
        )
        .unwrap();
        assert_relative_eq!(gl.weighted_volume(&y).unwrap(), 1.0 / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn square_closed_forms() {
        let a = sqrt(PI) / 2.0;
        let sq = Region::cube(quadrant_grid(256), a).unwrap();
        let y = BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(sq.volume(), a * a, epsilon = 1e-10);
        assert_relative_eq!(sq.weighted_volume(&y).unwrap(), a * a * a / 2.0, epsilon = 1e-10);
        assert_relative_eq!(sq.perimeter(&y).unwrap(), 1.5 * a * a, epsilon = 1e-9);
    }

    #[test]
    fn perimeter_gradient_matches_differences() {
        let grid = quadrant_grid(24);
        let e = Region::from_fn(grid, |w| 1.0 + 0.2 * w[0] * w[1] + 0.1 * w[0]).unwrap();
        for density in [BuiltinDensity::monomial(vec![0.0, 1.0]).unwrap(), BuiltinDensity::Constant] {
            let (_, g) = e.perimeter_with_gradient(&density).unwrap();
            let mg = e.weighted_volume_gradient(&density).unwrap();
            for k in [0, 5, 17, e.radii().len() - 1] {
                let step = 1e-6;
                let mut up = e.radii().to_vec();
                up[k] += step;
                let mut dn = e.radii().to_vec();
                dn[k] -= step;
                let (up, dn) = (e.with_radii(up).unwrap(), e.with_radii(dn).unwrap());
                let fd = (up.perimeter(&density).unwrap() - dn.perimeter(&density).unwrap()) / (2.0 * step);
                assert_relative_eq!(g[k], fd, max_relative = 1e-6, epsilon = 1e-10);
                let fd = (up.weighted_volume(&density).unwrap() - dn.weighted_volume(&density).unwrap()) / (2.0 * step);
                assert_relative_eq!(mg[k], fd, max_relative = 1e-6, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_difference_oracle() {
        let grid = quadrant_grid(64);
        let k = Region::ball(grid.clone(), 1.0);
        let e = Region::from_fn(grid, |w| 1.0 + 0.1 * cos(2.0 * libm::atan2(w[1], w[0]))).unwrap();
        // ∫_0^{π/2} |(1 + 0.1 cos 2θ)² − 1| / 2 dθ = ∫ |0.2 cos 2θ + 0.01 cos² 2θ| / 2
        let (x, wts) = gauss_legendre(64);
        let mut want = 0.0;
        for half in [0.0, PI / 4.0] {
            for (t, w) in x.iter().zip(&wts) {
                let th = half + PI / 8.0 * (t + 1.0);
                let c = cos(2.0 * th);
                want += w * PI / 8.0 * abs(0.2 * c + 0.01 * c * c) / 2.0;
            }
        }
        assert_relative_eq!(k.symmetric_difference(&e).unwrap(), want, epsilon = 1e-10);
        let s = k.scaled(1.3).unwrap();
        assert_relative_eq!(k.symmetric_difference(&s).unwrap(), (1.69 - 1.0) * PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn translate_align_recenters_shifted_half_ball() {
        let quad = QuadratureSpec::with_resolution(64);
        let k = Region::unit_ball_sector(&ConeDescriptor::halfspace(2), &quad).unwrap();
        let shifted = k.translated(&[0.3, 0.0]).unwrap();
        assert_relative_eq!(shifted.barycenter()[0], 0.3, epsilon = 1e-6);
        assert_relative_eq!(shifted.volume(), PI / 2.0, epsilon = 1e-6);
        let (aligned, shift) = shifted.translate_align().unwrap();
        assert!(abs(aligned.barycenter()[0]) < 1e-6);
        assert_relative_eq!(shift[0], -0.3, epsilon = 1e-6);
        assert!(aligned.symmetric_difference(&k).unwrap() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = quadrant_grid(16);
        assert!(matches!(Region::new(grid.clone(), vec![1.0; 3]), Err(Error::InvalidArgument(_))));
        let mut radii = vec![1.0; grid.dof_count()];
        radii[2] = -1.0;
        assert!(matches!(Region::new(grid.clone(), radii), Err(Error::NonPositiveRadius { node: 2, .. })));
        let k = Region::ball(grid, 1.0);
        assert!(matches!(k.scaled(0.0), Err(Error::NonPositiveScale(_))));
        let other = Region::ball(quadrant_grid(32), 1.0);
        assert_eq!(k.symmetric_difference(&other), Err(Error::IncompatibleGrids));
        let neg = BuiltinDensity::Monomial(vec![1.0, 0.0]);
        let h = Region::unit_ball_sector(&ConeDescriptor::halfspace(2), &QuadratureSpec::with_resolution(16)).unwrap();
        assert!(matches!(h.weighted_volume(&neg), Err(Error::NonFiniteDensity { .. })));
    }
}
