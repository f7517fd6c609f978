//! Discretization of the spherical patch `Ω = S^{n-1} ∩ C`.
//!
//! For `n ∈ {2, 3}` the patch is covered by one or more charts
//! `u ∈ [0, 1]^{n-1} → S^{n-1}`, each split into `M^{n-1}` elements. The
//! radial function is a continuous piecewise polynomial of degree `order`
//! whose degrees of freedom sit at Gauss–Lobatto nodes (shared between
//! neighbouring elements and charts), while integrals use tensor Gauss
//! points, so no quadrature node ever lies on `∂Ω`.
//!
//! For `n ≥ 4` the patch is sampled by a shifted `R_d` sequence pushed to the
//! sphere; the degrees of freedom are the sample points themselves and
//! tangential gradients come from a least-squares fit over nearest neighbours.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cone::{ConeDescriptor, ConeKind};
use crate::error::{Error, Result};
use crate::math::{abs, acos, atan2, cos, cross3, dist2, dot, floor, norm, normalize, sin, sqrt, PI, TAU};
use crate::qmc::{box_muller, RdSequence};
use crate::quadrature::{gauss_legendre, gauss_lobatto, LagrangeBasis};

/// How the radial part of a volume integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "rule", rename_all = "snake_case"))]
pub enum RadialRule {
    /// `∫_0^ρ h(rω) r^{n-1} dr = h(ω) ρ^{n+α}/(n+α)` for homogeneous densities;
    /// other densities fall back to 32-node Gauss–Legendre.
    ClosedFormHomogeneous,
    GaussLegendre { nodes: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureSpec {
    /// Gauss points per chart dimension.
    pub angular_resolution: usize,
    /// Polynomial degree of the radial function on each element.
    pub order: usize,
    pub radial_rule: RadialRule,
    /// Candidate points for the scattered rule used when `n ≥ 4`.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            angular_resolution: 64,
            order: 7,
            radial_rule: RadialRule::ClosedFormHomogeneous,
            mc_samples: 1 << 16,
            seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn with_resolution(angular_resolution: usize) -> Self {
        Self { angular_resolution, ..Self::default() }
    }

    pub fn radial_nodes(&self) -> usize {
        match self.radial_rule {
            RadialRule::ClosedFormHomogeneous => 32,
            RadialRule::GaussLegendre { nodes } => nodes,
        }
    }

    pub fn elements(&self) -> usize {
        let per = self.order + 1;
        ((self.angular_resolution + per / 2) / per).max(1)
    }

    /// The same rule with half as many elements (or samples), if that still
    /// leaves a usable grid.
    pub fn coarsened(&self) -> Option<Self> {
        let elements = self.elements();
        if elements < 2 {
            return None;
        }
        Some(Self {
            angular_resolution: (elements / 2) * (self.order + 1),
            mc_samples: self.mc_samples / 2,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.order) {
            return Err(Error::InvalidArgument(format!("order must be in 1..=16, got {}", self.order)));
        }
        if self.angular_resolution == 0 {
            return Err(Error::InvalidArgument("angular resolution must be positive".into()));
        }
        if self.radial_nodes() == 0 {
            return Err(Error::InvalidArgument("radial rule needs at least one node".into()));
        }
        if self.mc_samples < 64 {
            return Err(Error::InvalidArgument("mc_samples must be at least 64".into()));
        }
        Ok(())
    }
}

/// Compressed sparse rows: one linear functional of the radii per row.
#[derive(Debug, Clone, Default)]
pub(crate) struct Csr {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn new() -> Self {
        Self { ptr: vec![0], idx: Vec::new(), val: Vec::new() }
    }

    fn push_row(&mut self, entries: &[(u32, f64)]) {
        for &(i, v) in entries {
            self.idx.push(i);
            self.val.push(v);
        }
        self.ptr.push(self.idx.len());
    }

    #[inline]
    pub(crate) fn dot(&self, row: usize, x: &[f64]) -> f64 {
        let (a, b) = (self.ptr[row], self.ptr[row + 1]);
        self.idx[a..b].iter().zip(&self.val[a..b]).map(|(&i, &v)| v * x[i as usize]).sum()
    }

    #[inline]
    pub(crate) fn scatter(&self, row: usize, coeff: f64, out: &mut [f64]) {
        let (a, b) = (self.ptr[row], self.ptr[row + 1]);
        for (&i, &v) in self.idx[a..b].iter().zip(&self.val[a..b]) {
            out[i as usize] += coeff * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Chart {
    /// `θ = θ0 + u·span`, `ω = (cos θ, sin θ)`.
    Arc { theta0: f64, span: f64 },
    /// Polar angle `u0·half_angle` from `axis`, azimuth `2π u1`.
    Polar { axis: [f64; 3], e1: [f64; 3], e2: [f64; 3], half_angle: f64 },
    /// Bilinear quadrilateral in a gnomonic plane, projected to the sphere.
    Quad { corners: [[f64; 3]; 4] },
}

impl Chart {
    /// Direction `ω(u)` and Jacobian `jac[i * m + a] = ∂ω_i/∂u_a`.
    fn eval(&self, u: &[f64], omega: &mut [f64], jac: &mut [f64]) {
        match self {
            Chart::Arc { theta0, span } => {
                let t = theta0 + u[0] * span;
                omega[0] = cos(t);
                omega[1] = sin(t);
                jac[0] = -span * sin(t);
                jac[1] = span * cos(t);
            }
            Chart::Polar { axis, e1, e2, half_angle } => {
                let th = u[0] * half_angle;
                let ph = u[1] * TAU;
                let (st, ct, sp, cp) = (sin(th), cos(th), sin(ph), cos(ph));
                for i in 0..3 {
                    let radial = cp * e1[i] + sp * e2[i];
                    omega[i] = ct * axis[i] + st * radial;
                    jac[i * 2] = half_angle * (-st * axis[i] + ct * radial);
                    jac[i * 2 + 1] = TAU * st * (-sp * e1[i] + cp * e2[i]);
                }
            }
            Chart::Quad { corners } => {
                let (s, t) = (u[0], u[1]);
                let [p0, p1, p2, p3] = corners;
                let mut p = [0.0; 3];
                let mut du = [0.0; 3];
                let mut dv = [0.0; 3];
                for i in 0..3 {
                    p[i] = (1.0 - s) * (1.0 - t) * p0[i] + s * (1.0 - t) * p1[i] + s * t * p2[i] + (1.0 - s) * t * p3[i];
                    du[i] = (1.0 - t) * (p1[i] - p0[i]) + t * (p2[i] - p3[i]);
                    dv[i] = (1.0 - s) * (p3[i] - p0[i]) + s * (p2[i] - p1[i]);
                }
                let len = norm(&p);
                for i in 0..3 {
                    omega[i] = p[i] / len;
                }
                let (wu, wv) = (dot(omega, &du), dot(omega, &dv));
                for i in 0..3 {
                    jac[i * 2] = (du[i] - omega[i] * wu) / len;
                    jac[i * 2 + 1] = (dv[i] - omega[i] * wv) / len;
                }
            }
        }
    }

    /// Chart coordinates of a direction; they may fall outside `[0, 1]`.
    fn inverse(&self, omega: &[f64]) -> Option<[f64; 2]> {
        match self {
            Chart::Arc { theta0, span } => {
                let mid = theta0 + span / 2.0;
                let (c, s) = (cos(mid), sin(mid));
                let rel = atan2(c * omega[1] - s * omega[0], c * omega[0] + s * omega[1]);
                Some([0.5 + rel / span, 0.0])
            }
            Chart::Polar { axis, e1, e2, half_angle } => {
                let th = acos(dot(axis, omega).clamp(-1.0, 1.0));
                let mut ph = atan2(dot(e2, omega), dot(e1, omega));
                if ph < 0.0 {
                    ph += TAU;
                }
                Some([th / half_angle, ph / TAU])
            }
            Chart::Quad { corners } => {
                // Gnomonic plane p · c = 1 with c = corners[0] (a unit vector).
                let c = corners[0];
                let denom = dot(&c, omega);
                if denom <= 1e-12 {
                    return None;
                }
                let target = [omega[0] / denom, omega[1] / denom, omega[2] / denom];
                let [p0, p1, p2, p3] = corners;
                let (mut s, mut t) = (0.5, 0.5);
                for _ in 0..50 {
                    let mut r = [0.0; 3];
                    let mut du = [0.0; 3];
                    let mut dv = [0.0; 3];
                    for i in 0..3 {
                        r[i] = (1.0 - s) * (1.0 - t) * p0[i] + s * (1.0 - t) * p1[i] + s * t * p2[i]
                            + (1.0 - s) * t * p3[i]
                            - target[i];
                        du[i] = (1.0 - t) * (p1[i] - p0[i]) + t * (p2[i] - p3[i]);
                        dv[i] = (1.0 - s) * (p3[i] - p0[i]) + s * (p2[i] - p1[i]);
                    }
                    let (a, b, d) = (dot(&du, &du), dot(&du, &dv), dot(&dv, &dv));
                    let (g0, g1) = (dot(&du, &r), dot(&dv, &r));
                    let det = a * d - b * b;
                    if abs(det) < 1e-300 {
                        return None;
                    }
                    let ds = (d * g0 - b * g1) / det;
                    let dt = (a * g1 - b * g0) / det;
                    s -= ds;
                    t -= dt;
                    if abs(ds) + abs(dt) < 1e-15 {
                        break;
                    }
                }
                Some([s, t])
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Spectral {
        charts: Vec<Chart>,
        elements: usize,
        lobatto: LagrangeBasis,
        /// Per chart, local tensor DOF index → global DOF index.
        chart_dofs: Vec<Vec<u32>>,
        local_len: usize,
    },
    Scattered {
        /// Orthonormal tangent frame per DOF, `m × n` row-major.
        tangent: Vec<f64>,
    },
}

/// Quadrature nodes, weights and the linear maps from radii (degrees of
/// freedom) to values and tangential derivatives at those nodes.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    cone: ConeDescriptor,
    quad: QuadratureSpec,
    n: usize,
    m: usize,
    layout: Layout,
    dof_dirs: Vec<f64>,
    qp_dirs: Vec<f64>,
    qp_weights: Vec<f64>,
    pub(crate) value: Csr,
    pub(crate) grads: Vec<Csr>,
    /// Inverse metric `g^{ab}` per quadrature point, `m × m`.
    pub(crate) metric_inv: Vec<f64>,
    dof_mass: Vec<f64>,
}

impl PatchGrid {
    pub fn build(cone: &ConeDescriptor, quad: &QuadratureSpec) -> Result<Self> {
        cone.validate()?;
        quad.validate()?;
        let n = cone.dimension;
        match n {
            2 => {
                let (a, b) = cone.arc_range()?;
                Ok(Self::build_spectral(cone, quad, vec![Chart::Arc { theta0: a, span: b - a }]))
            }
            3 => {
                let charts = charts_3d(cone)?;
                Ok(Self::build_spectral(cone, quad, charts))
            }
            _ => Self::build_scattered(cone, quad),
        }
    }

    fn build_spectral(cone: &ConeDescriptor, quad: &QuadratureSpec, charts: Vec<Chart>) -> Self {
        let n = cone.dimension;
        let m = n - 1;
        let p = quad.order;
        let elements = quad.elements();
        let (lob_nodes, _) = gauss_lobatto(p);
        let lobatto = LagrangeBasis::new(lob_nodes.clone());
        let (gx, gw) = gauss_legendre(p + 1);
        let local_len = elements * p + 1;
        let local_count = local_len.pow(m as u32);
        let inv_m = 1.0 / elements as f64;

        let dof_u = |i: usize| -> f64 {
            let e = (i / p).min(elements - 1);
            let l = i - e * p;
            (e as f64 + (lob_nodes[l] + 1.0) / 2.0) * inv_m
        };

        // Candidate DOF directions for every chart, merged by position.
        let mut cand = Vec::with_capacity(charts.len() * local_count * n);
        let mut omega = vec![0.0; n];
        let mut jac = vec![0.0; n * m];
        for chart in &charts {
            for local in 0..local_count {
                let mut u = [0.0; 2];
                let mut rest = local;
                for ua in u.iter_mut().take(m) {
                    *ua = dof_u(rest % local_len);
                    rest /= local_len;
                }
                chart.eval(&u[..m], &mut omega, &mut jac);
                cand.extend_from_slice(&omega);
            }
        }
        let (ids, reps) = dedupe_directions(&cand, n, 1e-10);
        let chart_dofs: Vec<Vec<u32>> = ids.chunks(local_count).map(<[u32]>::to_vec).collect();
        let dof_dirs: Vec<f64> = reps.iter().flat_map(|&r| cand[r * n..(r + 1) * n].iter().copied()).collect();

        // Lobatto basis tabulated at Gauss points.
        let q = p + 1;
        let mut b_tab = vec![0.0; q * q];
        let mut d_tab = vec![0.0; q * q];
        for g in 0..q {
            lobatto.eval(gx[g], &mut b_tab[g * q..(g + 1) * q], &mut d_tab[g * q..(g + 1) * q]);
        }

        let mut qp_dirs = Vec::new();
        let mut qp_weights = Vec::new();
        let mut value = Csr::new();
        let mut grads: Vec<Csr> = (0..m).map(|_| Csr::new()).collect();
        let mut metric_inv = Vec::new();
        let element_count = elements.pow(m as u32);
        let gauss_count = q.pow(m as u32);
        let mut vrow: Vec<(u32, f64)> = Vec::new();
        let mut grows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];

        for (ci, chart) in charts.iter().enumerate() {
            for el in 0..element_count {
                let e = split_index(el, elements, m);
                for gi in 0..gauss_count {
                    let g = split_index(gi, q, m);
                    let mut u = [0.0; 2];
                    let mut w = 1.0;
                    for a in 0..m {
                        u[a] = (e[a] as f64 + (gx[g[a]] + 1.0) / 2.0) * inv_m;
                        w *= gw[g[a]] * 0.5 * inv_m;
                    }
                    chart.eval(&u[..m], &mut omega, &mut jac);
                    let mut metric = vec![0.0; m * m];
                    for a in 0..m {
                        for b in 0..m {
                            metric[a * m + b] = (0..n).map(|i| jac[i * m + a] * jac[i * m + b]).sum();
                        }
                    }
                    let (inv, det) = crate::linalg::inverse(&metric, m).unwrap_or((vec![0.0; m * m], 0.0));
                    qp_dirs.extend_from_slice(&omega);
                    qp_weights.push(w * sqrt(det.max(0.0)));
                    metric_inv.extend_from_slice(&inv);

                    vrow.clear();
                    grows.iter_mut().for_each(Vec::clear);
                    let local_nodes = q.pow(m as u32);
                    for li in 0..local_nodes {
                        let l = split_index(li, q, m);
                        let mut flat = 0;
                        let mut stride = 1;
                        for a in 0..m {
                            flat += (e[a] * p + l[a]) * stride;
                            stride *= local_len;
                        }
                        let gid = chart_dofs[ci][flat];
                        let mut coef = 1.0;
                        for a in 0..m {
                            coef *= b_tab[g[a] * q + l[a]];
                        }
                        merge_entry(&mut vrow, gid, coef);
                        for a in 0..m {
                            let mut c = 2.0 * elements as f64;
                            for b in 0..m {
                                c *= if a == b { d_tab[g[b] * q + l[b]] } else { b_tab[g[b] * q + l[b]] };
                            }
                            merge_entry(&mut grows[a], gid, c);
                        }
                    }
                    value.push_row(&vrow);
                    for a in 0..m {
                        grads[a].push_row(&grows[a]);
                    }
                }
            }
        }

        let layout = Layout::Spectral { charts, elements, lobatto, chart_dofs, local_len };
        let mut grid = Self {
            cone: cone.clone(),
            quad: quad.clone(),
            n,
            m,
            layout,
            dof_dirs,
            qp_dirs,
            qp_weights,
            value,
            grads,
            metric_inv,
            dof_mass: Vec::new(),
        };
        grid.dof_mass = grid.lumped_mass();
        grid
    }

    fn build_scattered(cone: &ConeDescriptor, quad: &QuadratureSpec) -> Result<Self> {
        let n = cone.dimension;
        let m = n - 1;
        let dims = n.div_ceil(2) * 2;
        let mut seq = RdSequence::new(dims, quad.seed);
        let mut uni = vec![0.0; dims];
        let mut z = vec![0.0; dims];
        let mut dirs = Vec::new();
        for _ in 0..quad.mc_samples {
            seq.next_point(&mut uni);
            box_muller(&uni, &mut z);
            let mut w = z[..n].to_vec();
            if normalize(&mut w) > 0.0 && cone.contains(&w) {
                dirs.extend_from_slice(&w);
            }
        }
        let count = dirs.len() / n;
        if count < 4 * (m + 1) {
            return Err(Error::DegenerateCone(format!("only {count} sample directions fell inside the cone")));
        }
        let weight = crate::math::sphere_area(n) / quad.mc_samples as f64;
        let k = (3 * m + 2).min(count - 1);

        let mut tangent = Vec::with_capacity(count * m * n);
        for j in 0..count {
            tangent.extend(tangent_frame(&dirs[j * n..(j + 1) * n]));
        }

        let mut value = Csr::new();
        let mut grads: Vec<Csr> = (0..m).map(|_| Csr::new()).collect();
        let mut by_dist: Vec<(f64, usize)> = Vec::with_capacity(count);
        for j in 0..count {
            let wj = &dirs[j * n..(j + 1) * n];
            by_dist.clear();
            by_dist.extend((0..count).filter(|&i| i != j).map(|i| (dist2(wj, &dirs[i * n..(i + 1) * n]), i)));
            by_dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut nbrs: Vec<(f64, usize)> = by_dist[..k].to_vec();
            nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let frame = &tangent[j * m * n..(j + 1) * m * n];
            // Rows of A are log-map tangent coordinates of the neighbours.
            let mut a_mat = vec![0.0; k * m];
            for (r, &(_, i)) in nbrs.iter().enumerate() {
                let t = log_map(wj, &dirs[i * n..(i + 1) * n], frame, m);
                a_mat[r * m..(r + 1) * m].copy_from_slice(&t);
            }
            let mut ata = vec![0.0; m * m];
            for a in 0..m {
                for b in 0..m {
                    ata[a * m + b] = (0..k).map(|r| a_mat[r * m + a] * a_mat[r * m + b]).sum();
                }
            }
            let (inv, _) = crate::linalg::inverse(&ata, m)
                .ok_or_else(|| Error::DegenerateCone(format!("neighbourhood of sample {j} is degenerate")))?;
            value.push_row(&[(j as u32, 1.0)]);
            for b in 0..m {
                let mut row = Vec::with_capacity(k + 1);
                let mut total = 0.0;
                for (r, &(_, i)) in nbrs.iter().enumerate() {
                    let c: f64 = (0..m).map(|a| inv[b * m + a] * a_mat[r * m + a]).sum();
                    total += c;
                    row.push((i as u32, c));
                }
                row.push((j as u32, -total));
                grads[b].push_row(&row);
            }
        }
        let mut metric_inv = Vec::with_capacity(count * m * m);
        for _ in 0..count {
            for a in 0..m {
                for b in 0..m {
                    metric_inv.push(if a == b { 1.0 } else { 0.0 });
                }
            }
        }
        let mut grid = Self {
            cone: cone.clone(),
            quad: quad.clone(),
            n,
            m,
            layout: Layout::Scattered { tangent },
            dof_dirs: dirs.clone(),
            qp_dirs: dirs,
            qp_weights: vec![weight; count],
            value,
            grads,
            metric_inv,
            dof_mass: Vec::new(),
        };
        grid.dof_mass = grid.lumped_mass();
        Ok(grid)
    }

    fn lumped_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.dof_count()];
        for j in 0..self.qp_count() {
            self.value.scatter(j, self.qp_weights[j], &mut mass);
        }
        mass
    }

    pub fn cone(&self) -> &ConeDescriptor {
        &self.cone
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn dof_count(&self) -> usize {
        self.dof_dirs.len() / self.n
    }

    pub fn qp_count(&self) -> usize {
        self.qp_weights.len()
    }

    pub fn dof_direction(&self, k: usize) -> &[f64] {
        &self.dof_dirs[k * self.n..(k + 1) * self.n]
    }

    pub fn qp_direction(&self, j: usize) -> &[f64] {
        &self.qp_dirs[j * self.n..(j + 1) * self.n]
    }

    pub fn qp_weight(&self, j: usize) -> f64 {
        self.qp_weights[j]
    }

    pub fn qp_weights(&self) -> &[f64] {
        &self.qp_weights
    }

    /// Lumped mass per DOF (the integral of its basis function over `Ω`).
    pub fn dof_mass(&self) -> &[f64] {
        &self.dof_mass
    }

    pub fn is_scattered(&self) -> bool {
        matches!(self.layout, Layout::Scattered { .. })
    }

    /// Quadrature estimate of `H^{n-1}(Ω)`.
    pub fn surface_measure(&self) -> f64 {
        self.qp_weights.iter().sum()
    }

    /// Same cone and same rule, hence identical nodes.
    pub fn compatible(&self, other: &PatchGrid) -> bool {
        self.cone == other.cone && self.quad == other.quad
    }

    /// Radii interpolated at the quadrature points.
    pub fn interpolate(&self, radii: &[f64]) -> Vec<f64> {
        (0..self.qp_count()).map(|j| self.value.dot(j, radii)).collect()
    }

    /// `|∇_ω ρ|²` at quadrature point `j`, plus the covector `g^{ab} ∂_b ρ`.
    pub(crate) fn gradient_sq(&self, radii: &[f64], j: usize, raised: &mut [f64]) -> f64 {
        let m = self.m;
        let mut d = [0.0; 8];
        for a in 0..m {
            d[a] = self.grads[a].dot(j, radii);
        }
        let gi = &self.metric_inv[j * m * m..(j + 1) * m * m];
        let mut total = 0.0;
        for a in 0..m {
            let r: f64 = (0..m).map(|b| gi[a * m + b] * d[b]).sum();
            raised[a] = r;
            total += r * d[a];
        }
        total
    }

    /// `out = Σ_j c_j (u_j φ_j + g^{ab} ∂_a u ∂_b φ)` at quadrature points,
    /// the weighted `H¹` Gram operator applied to `x`.
    pub(crate) fn sobolev_apply(&self, coeff: &[f64], x: &[f64], out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut raised = [0.0; 8];
        for (j, &c) in coeff.iter().enumerate() {
            self.value.scatter(j, c * self.value.dot(j, x), out);
            self.gradient_sq(x, j, &mut raised[..m]);
            for a in 0..m {
                self.grads[a].scatter(j, c * raised[a], out);
            }
        }
    }

    /// Diagonal of [`Self::sobolev_apply`].
    pub(crate) fn sobolev_diag(&self, coeff: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut diag = vec![0.0; self.dof_count()];
        for (j, &c) in coeff.iter().enumerate() {
            let row = |csr: &Csr| {
                let (a, b) = (csr.ptr[j], csr.ptr[j + 1]);
                csr.idx[a..b].iter().zip(&csr.val[a..b]).map(|(&i, &v)| (i as usize, v)).collect::<Vec<_>>()
            };
            for (i, v) in row(&self.value) {
                diag[i] += c * v * v;
            }
            let rows: Vec<Vec<(usize, f64)>> = self.grads.iter().map(row).collect();
            let gi = &self.metric_inv[j * m * m..(j + 1) * m * m];
            for a in 0..m {
                for b in 0..m {
                    for &(i, va) in &rows[a] {
                        if let Some(&(_, vb)) = rows[b].iter().find(|e| e.0 == i) {
                            diag[i] += c * gi[a * m + b] * va * vb;
                        }
                    }
                }
            }
        }
        diag
    }

    pub(crate) fn tangent_dim(&self) -> usize {
        self.m
    }

    /// First chart's coordinates of `omega`, when the grid is chart based.
    pub fn chart_coordinates(&self, omega: &[f64]) -> Option<Vec<f64>> {
        match &self.layout {
            Layout::Spectral { charts, .. } => charts[0].inverse(omega).map(|u| u[..self.m].to_vec()),
            Layout::Scattered { .. } => None,
        }
    }

    /// Radial function evaluated in an arbitrary direction (extrapolating
    /// slightly past `∂Ω` when needed).
    pub fn radius_at(&self, radii: &[f64], omega: &[f64]) -> Option<f64> {
        match &self.layout {
            Layout::Spectral { charts, elements, lobatto, chart_dofs, local_len } => {
                let m = self.m;
                let mut best: Option<(f64, usize, [f64; 2])> = None;
                for (ci, chart) in charts.iter().enumerate() {
                    let Some(u) = chart.inverse(omega) else { continue };
                    let violation: f64 = u[..m].iter().map(|&x| (-x).max(0.0) + (x - 1.0).max(0.0)).sum();
                    if best.map_or(true, |b| violation < b.0) {
                        best = Some((violation, ci, u));
                    }
                    if violation <= 1e-12 {
                        break;
                    }
                }
                let (_, ci, u) = best?;
                let q = lobatto.len();
                let p = q - 1;
                let mut vals = [[0.0; 17]; 2];
                let mut scratch = [0.0; 17];
                let mut e = [0usize; 2];
                for a in 0..m {
                    let x = u[a] * *elements as f64;
                    let ea = (floor(x).max(0.0) as usize).min(elements - 1);
                    e[a] = ea;
                    lobatto.eval(2.0 * (x - ea as f64) - 1.0, &mut vals[a][..q], &mut scratch[..q]);
                }
                let mut total = 0.0;
                for li in 0..q.pow(m as u32) {
                    let l = split_index(li, q, m);
                    let mut flat = 0;
                    let mut stride = 1;
                    let mut coef = 1.0;
                    for a in 0..m {
                        flat += (e[a] * p + l[a]) * stride;
                        stride *= local_len;
                        coef *= vals[a][l[a]];
                    }
                    total += coef * radii[chart_dofs[ci][flat] as usize];
                }
                Some(total)
            }
            Layout::Scattered { tangent } => {
                let n = self.n;
                let m = self.m;
                let j = (0..self.dof_count())
                    .min_by(|&a, &b| dist2(omega, self.dof_direction(a)).total_cmp(&dist2(omega, self.dof_direction(b))))?;
                let t = log_map(self.dof_direction(j), omega, &tangent[j * m * n..(j + 1) * m * n], m);
                let mut rho = radii[j];
                for (b, tb) in t.iter().enumerate() {
                    rho += tb * self.grads[b].dot(j, radii);
                }
                Some(rho)
            }
        }
    }
}

fn split_index(mut flat: usize, base: usize, m: usize) -> [usize; 2] {
    let mut out = [0usize; 2];
    for o in out.iter_mut().take(m) {
        *o = flat % base;
        flat /= base;
    }
    out
}

fn merge_entry(row: &mut Vec<(u32, f64)>, id: u32, coef: f64) {
    if let Some(e) = row.iter_mut().find(|e| e.0 == id) {
        e.1 += coef;
    } else {
        row.push((id, coef));
    }
}

/// Union of candidate directions closer than `tol`; returns per-candidate ids
/// (numbered by first appearance) and the representative candidate per id.
fn dedupe_directions(cand: &[f64], n: usize, tol: f64) -> (Vec<u32>, Vec<usize>) {
    let count = cand.len() / n;
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| cand[a * n].total_cmp(&cand[b * n]).then(a.cmp(&b)));
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for a in 0..count {
        let i = order[a];
        let mut b = a;
        while b > 0 {
            b -= 1;
            let j = order[b];
            if cand[i * n] - cand[j * n] > tol {
                break;
            }
            if dist2(&cand[i * n..(i + 1) * n], &cand[j * n..(j + 1) * n]) < tol * tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut id_of_root = vec![u32::MAX; count];
    let mut reps = Vec::new();
    let mut ids = vec![0u32; count];
    for i in 0..count {
        let r = find(&mut parent, i);
        if id_of_root[r] == u32::MAX {
            id_of_root[r] = reps.len() as u32;
            reps.push(r);
        }
        ids[i] = id_of_root[r];
    }
    (ids, reps)
}

fn charts_3d(cone: &ConeDescriptor) -> Result<Vec<Chart>> {
    match &cone.kind {
        ConeKind::Halfspace => Ok(vec![Chart::Polar {
            axis: [0.0, 0.0, 1.0],
            e1: [1.0, 0.0, 0.0],
            e2: [0.0, 1.0, 0.0],
            half_angle: PI / 2.0,
        }]),
        ConeKind::Circular { axis, half_angle } => {
            let a = [axis[0], axis[1], axis[2]];
            let frame = tangent_frame(&a);
            let e1 = [frame[0], frame[1], frame[2]];
            let e2 = cross3(&a, &e1);
            Ok(vec![Chart::Polar { axis: a, e1, e2, half_angle: *half_angle }])
        }
        ConeKind::Polyhedral { .. } => {
            let rays = cone.extreme_rays();
            if rays.len() < 3 {
                return Err(Error::Unsupported("polyhedral cones in R^3 must be pointed (>= 3 extreme rays)".into()));
            }
            let mut c = [0.0; 3];
            for r in &rays {
                for i in 0..3 {
                    c[i] += r[i];
                }
            }
            normalize(&mut c);
            let projected: Vec<[f64; 3]> = rays
                .iter()
                .map(|r| {
                    let s = dot(r, &c);
                    [r[0] / s, r[1] / s, r[2] / s]
                })
                .collect();
            let mut b1 = [projected[0][0] - c[0], projected[0][1] - c[1], projected[0][2] - c[2]];
            normalize(&mut b1);
            let b2 = cross3(&c, &b1);
            let mut ordered: Vec<(f64, [f64; 3])> = projected
                .iter()
                .map(|g| {
                    let d = [g[0] - c[0], g[1] - c[1], g[2] - c[2]];
                    (atan2(dot(&d, &b2), dot(&d, &b1)), *g)
                })
                .collect();
            ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
            let k = ordered.len();
            let mid = |i: usize| -> [f64; 3] {
                let (a, b) = (ordered[i % k].1, ordered[(i + 1) % k].1);
                [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]
            };
            Ok((0..k)
                .map(|i| Chart::Quad { corners: [c, mid(i + k - 1), ordered[i].1, mid(i)] })
                .collect())
        }
    }
}

/// Orthonormal basis of `ω^⊥`, `(n-1) × n` row-major.
fn tangent_frame(omega: &[f64]) -> Vec<f64> {
    let n = omega.len();
    let skip = (0..n).max_by(|&a, &b| abs(omega[a]).total_cmp(&abs(omega[b]))).unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| i != skip) {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        let w = dot(&v, omega);
        v.iter_mut().zip(omega).for_each(|(x, o)| *x -= w * o);
        for b in &basis {
            let w = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, o)| *x -= w * o);
        }
        normalize(&mut v);
        basis.push(v);
    }
    basis.concat()
}

/// Tangent coordinates of `target` seen from `base` via the sphere's log map.
fn log_map(base: &[f64], target: &[f64], frame: &[f64], m: usize) -> Vec<f64> {
    let n = base.len();
    let c = dot(base, target).clamp(-1.0, 1.0);
    let angle = acos(c);
    let s = sqrt((1.0 - c * c).max(0.0));
    let scale = if s < 1e-12 { 1.0 } else { angle / s };
    (0..m).map(|a| scale * dot(&frame[a * n..(a + 1) * n], target)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(cone: ConeDescriptor, res: usize) -> PatchGrid {
        PatchGrid::build(&cone, &QuadratureSpec::with_resolution(res)).unwrap()
    }

    #[test]
    fn weights_sum_to_solid_angle() {
        let cases = [
            (ConeDescriptor::quadrant(), PI / 2.0),
            (ConeDescriptor::halfspace(2), PI),
            (ConeDescriptor::orthant(3), PI / 2.0),
            (ConeDescriptor::halfspace(3), 2.0 * PI),
            (ConeDescriptor::circular(vec![1.0, 1.0, 1.0], 0.4), TAU * (1.0 - cos(0.4))),
        ];
        for (cone, want) in cases {
            let g = grid(cone, 32);
            assert!(g.qp_weights().iter().all(|&w| w > 0.0));
            assert_relative_eq!(g.surface_measure(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn skew_polyhedral_solid_angle_matches_girard() {
        // Spherical triangle spanned by e1, e2 and (1,1,1)/sqrt3.
        let normals = vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, -1.0], vec![1.0, 0.0, -1.0]];
        let cone = ConeDescriptor::polyhedral(normals);
        let rays = cone.extreme_rays();
        assert_eq!(rays.len(), 3);
        // Girard: area = sum of angles - pi, via the triple-product formula.
        let (a, b, c) = (&rays[0], &rays[1], &rays[2]);
        let triple = dot(a, &cross3(b, c)).abs();
        let denom = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
        let want = 2.0 * libm::atan2(triple, denom);
        assert_relative_eq!(grid(cone, 32).surface_measure(), want, max_relative = 1e-10);
    }

    #[test]
    fn nodes_are_interior() {
        for cone in [ConeDescriptor::quadrant(), ConeDescriptor::orthant(3), ConeDescriptor::halfspace(3)] {
            let g = grid(cone.clone(), 16);
            for j in 0..g.qp_count() {
                assert!(cone.contains(g.qp_direction(j)), "node {j} not interior");
            }
        }
    }

    #[test]
    fn shared_dofs_make_constant_exact() {
        let g = grid(ConeDescriptor::orthant(3), 24);
        let ones = vec![1.0; g.dof_count()];
        let vals = g.interpolate(&ones);
        assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let mut raised = [0.0; 2];
        for j in 0..g.qp_count() {
            assert!(g.gradient_sq(&ones, j, &mut raised) < 1e-20);
        }
        // Pole of the halfspace chart merges into one DOF.
        let h = grid(ConeDescriptor::halfspace(3), 16);
        let at_pole = (0..h.dof_count()).filter(|&k| h.dof_direction(k)[2] > 1.0 - 1e-12).count();
        assert_eq!(at_pole, 1);
    }

    #[test]
    fn smooth_function_gradient_is_accurate() {
        // ρ(ω) = 1 + 0.2 ω_x has |∇_ω ρ|² = 0.04 (1 - ω_x²).
        for cone in [ConeDescriptor::quadrant(), ConeDescriptor::orthant(3), ConeDescriptor::halfspace(3)] {
            let g = grid(cone, 48);
            let radii: Vec<f64> = (0..g.dof_count()).map(|k| 1.0 + 0.2 * g.dof_direction(k)[0]).collect();
            let mut raised = [0.0; 2];
            let mut worst: f64 = 0.0;
            for j in 0..g.qp_count() {
                let wx = g.qp_direction(j)[0];
                let want = 0.04 * (1.0 - wx * wx);
                worst = worst.max((g.gradient_sq(&radii, j, &mut raised) - want).abs());
            }
            assert!(worst < 1e-8, "worst gradient error {worst}");
        }
    }

    #[test]
    fn radius_at_interpolates_smooth_functions() {
        let g = grid(ConeDescriptor::orthant(3), 32);
        let f = |w: &[f64]| 1.0 + 0.3 * w[0] * w[1] + 0.1 * w[2];
        let radii: Vec<f64> = (0..g.dof_count()).map(|k| f(g.dof_direction(k))).collect();
        let mut probe = [0.3, 0.5, 0.8];
        normalize(&mut probe);
        assert_relative_eq!(g.radius_at(&radii, &probe).unwrap(), f(&probe), epsilon = 1e-10);
        let q = grid(ConeDescriptor::quadrant(), 128);
        let radii: Vec<f64> = (0..q.dof_count()).map(|k| 1.0 + 0.3 * q.dof_direction(k)[0] * q.dof_direction(k)[1]).collect();
        let probe = [cos(0.4), sin(0.4)];
        assert_relative_eq!(q.radius_at(&radii, &probe).unwrap(), 1.0 + 0.3 * cos(0.4) * sin(0.4), epsilon = 1e-10);
    }

    #[test]
    fn scattered_grid_in_four_dimensions() {
        let cone = ConeDescriptor::orthant(4);
        let quad = QuadratureSpec { mc_samples: 1 << 15, ..QuadratureSpec::default() };
        let g = PatchGrid::build(&cone, &quad).unwrap();
        assert!(g.is_scattered());
        let want = crate::math::sphere_area(4) / 16.0;
        assert_relative_eq!(g.surface_measure(), want, max_relative = 2e-2);
        let radii: Vec<f64> = (0..g.dof_count()).map(|k| 1.0 + 0.2 * g.dof_direction(k)[0]).collect();
        let mut raised = [0.0; 3];
        let mut err = 0.0;
        for j in 0..g.qp_count() {
            let wx = g.qp_direction(j)[0];
            err += (g.gradient_sq(&radii, j, &mut raised) - 0.04 * (1.0 - wx * wx)).abs();
        }
        assert!(err / (g.qp_count() as f64) < 2e-3);
    }
}
