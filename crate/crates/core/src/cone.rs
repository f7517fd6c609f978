//! Open convex cones with vertex at the origin.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, acos, atan2, cos, dot, norm, normalize, PI};

const RAY_TOL: f64 = 1e-10;

/// An open convex cone `C ⊂ R^n` through the origin.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConeDescriptor {
    pub dimension: usize,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: ConeKind,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ConeKind {
    /// `C = {x : ν_i · x > 0 for all i}`.
    Polyhedral { normals: Vec<Vec<f64>> },
    /// `C = {x : axis · x > |x| cos(half_angle)}`.
    Circular { axis: Vec<f64>, half_angle: f64 },
    /// `C = {x_n > 0}`; translations parallel to `{x_n = 0}` preserve it.
    Halfspace,
}

/// Outcome of [`ConeDescriptor::validate_positive_orthant`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrthantCheck {
    pub inside: bool,
    pub advisory: Option<String>,
}

impl ConeDescriptor {
    /// The first quadrant of the plane.
    pub fn quadrant() -> Self {
        Self::orthant(2)
    }

    /// The open positive orthant `R^n_+`.
    pub fn orthant(n: usize) -> Self {
        let normals = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        Self { dimension: n, kind: ConeKind::Polyhedral { normals } }
    }

    pub fn halfspace(n: usize) -> Self {
        Self { dimension: n, kind: ConeKind::Halfspace }
    }

    /// Circular cone; the axis is normalized.
    pub fn circular(mut axis: Vec<f64>, half_angle: f64) -> Self {
        normalize(&mut axis);
        Self { dimension: axis.len(), kind: ConeKind::Circular { axis, half_angle } }
    }

    /// Polyhedral cone; every normal is normalized.
    pub fn polyhedral(mut normals: Vec<Vec<f64>>) -> Self {
        normals.iter_mut().for_each(|v| {
            normalize(v);
        });
        let dimension = normals.first().map_or(0, Vec::len);
        Self { dimension, kind: ConeKind::Polyhedral { normals } }
    }

    pub fn is_halfspace(&self) -> bool {
        matches!(self.kind, ConeKind::Halfspace)
    }

    /// Checks well-formedness and that the interior is nonempty.
    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if n < 2 {
            return Err(Error::InvalidCone(format!("dimension must be >= 2, got {n}")));
        }
        match &self.kind {
            ConeKind::Polyhedral { normals } => {
                if normals.is_empty() {
                    return Err(Error::InvalidCone("polyhedral cone needs at least one normal".into()));
                }
                for (i, v) in normals.iter().enumerate() {
                    if v.len() != n {
                        return Err(Error::InvalidCone(format!("normal {i} has length {}, expected {n}", v.len())));
                    }
                    if abs(norm(v) - 1.0) > 1e-9 || v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidCone(format!("normal {i} is not a unit vector")));
                    }
                }
                self.interior_direction().map(|_| ())
            }
            ConeKind::Circular { axis, half_angle } => {
                if axis.len() != n || abs(norm(axis) - 1.0) > 1e-9 {
                    return Err(Error::InvalidCone("circular cone axis must be a unit vector of length n".into()));
                }
                if !(*half_angle > 0.0 && *half_angle <= PI / 2.0 + 1e-15) {
                    return Err(Error::DegenerateCone(format!("half angle {half_angle} outside (0, pi/2]")));
                }
                Ok(())
            }
            ConeKind::Halfspace => Ok(()),
        }
    }

    /// Membership in the open cone.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            ConeKind::Polyhedral { normals } => normals.iter().all(|v| dot(v, x) > 0.0),
            ConeKind::Circular { axis, half_angle } => dot(axis, x) > norm(x) * cos(*half_angle),
            ConeKind::Halfspace => x[self.dimension - 1] > 0.0,
        }
    }

    /// A unit direction strictly inside the cone.
    pub fn interior_direction(&self) -> Result<Vec<f64>> {
        let n = self.dimension;
        match &self.kind {
            ConeKind::Circular { axis, .. } => Ok(axis.clone()),
            ConeKind::Halfspace => {
                let mut e = vec![0.0; n];
                e[n - 1] = 1.0;
                Ok(e)
            }
            ConeKind::Polyhedral { normals } => {
                // Perceptron: converges whenever a strictly feasible direction exists.
                let mut x = vec![0.0; n];
                for v in normals {
                    x.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                }
                if norm(&x) < 1e-14 {
                    x = normals[0].clone();
                }
                for _ in 0..1_000_000 {
                    let len = norm(&x);
                    let (worst, margin) = if len > 0.0 {
                        normals
                            .iter()
                            .enumerate()
                            .map(|(i, v)| (i, dot(v, &x) / len))
                            .fold((0, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc })
                    } else {
                        (0, f64::NEG_INFINITY)
                    };
                    if margin > 1e-9 {
                        normalize(&mut x);
                        return Ok(x);
                    }
                    let v = &normals[worst];
                    let step = len.max(1e-12);
                    x.iter_mut().zip(v).for_each(|(a, b)| *a += step * b);
                }
                Err(Error::DegenerateCone("no strictly interior direction found".into()))
            }
        }
    }

    /// Extreme rays (unit vectors) of a polyhedral cone; empty for cones
    /// containing a line in dimension >= 3.
    pub fn extreme_rays(&self) -> Vec<Vec<f64>> {
        let ConeKind::Polyhedral { normals } = &self.kind else {
            return Vec::new();
        };
        let n = self.dimension;
        let mut rays: Vec<Vec<f64>> = Vec::new();
        let k = normals.len();
        if k < n - 1 {
            return rays;
        }
        let mut subset: Vec<usize> = (0..n - 1).collect();
        loop {
            let rows: Vec<f64> = subset.iter().flat_map(|&i| normals[i].iter().copied()).collect();
            if let Some(v) = crate::linalg::null_vector(&rows, n) {
                for sign in [1.0, -1.0] {
                    let cand: Vec<f64> = v.iter().map(|x| sign * x).collect();
                    let feasible = normals.iter().all(|nu| dot(nu, &cand) >= -RAY_TOL);
                    let fresh = rays.iter().all(|r| crate::math::dist2(r, &cand) > 1e-16);
                    if feasible && fresh {
                        rays.push(cand);
                    }
                }
            }
            // Next combination in lexicographic order.
            let r = n - 1;
            let mut i = r;
            while i > 0 && subset[i - 1] == k - r + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return rays;
            }
            subset[i - 1] += 1;
            for j in i..r {
                subset[j] = subset[j - 1] + 1;
            }
        }
    }

    /// For planar cones, the open angular interval `(θ0, θ1)` of `Ω`.
    pub fn arc_range(&self) -> Result<(f64, f64)> {
        if self.dimension != 2 {
            return Err(Error::Unsupported("arc range is only defined for n = 2".into()));
        }
        match &self.kind {
            ConeKind::Halfspace => Ok((0.0, PI)),
            ConeKind::Circular { axis, half_angle } => {
                let c = atan2(axis[1], axis[0]);
                Ok((c - half_angle, c + half_angle))
            }
            ConeKind::Polyhedral { normals } => {
                let d = self.interior_direction()?;
                let td = atan2(d[1], d[0]);
                let mut lo = -PI;
                let mut hi = PI;
                for v in normals {
                    let mut rel = atan2(v[1], v[0]) - td;
                    while rel > PI {
                        rel -= 2.0 * PI;
                    }
                    while rel < -PI {
                        rel += 2.0 * PI;
                    }
                    lo = lo.max(rel - PI / 2.0);
                    hi = hi.min(rel + PI / 2.0);
                }
                if hi - lo <= 1e-12 {
                    return Err(Error::DegenerateCone("planar cone has empty interior".into()));
                }
                Ok((td + lo, td + hi))
            }
        }
    }

    /// Whether every generator direction lies in the closed positive orthant,
    /// as required by the weighted inequalities.
    pub fn validate_positive_orthant(&self) -> Result<OrthantCheck> {
        self.validate()?;
        let n = self.dimension;
        let inside = match &self.kind {
            ConeKind::Halfspace => {
                return Ok(OrthantCheck {
                    inside: false,
                    advisory: Some("halfspace is not contained in the orthant; handled mod translations".into()),
                })
            }
            ConeKind::Circular { axis, half_angle } => (0..n).all(|i| {
                let angle = acos(axis[i].clamp(-1.0, 1.0));
                angle + half_angle <= PI / 2.0 + 1e-12
            }),
            ConeKind::Polyhedral { normals } => {
                let rank = matrix_rank(normals, n);
                if rank < n {
                    // Contains a line, which no orthant does.
                    false
                } else {
                    let rays = self.extreme_rays();
                    !rays.is_empty() && rays.iter().all(|r| r.iter().all(|&c| c >= -RAY_TOL))
                }
            }
        };
        Ok(OrthantCheck { inside, advisory: None })
    }

    /// Solid angle `H^{n-1}(S^{n-1} ∩ C)` in closed form where available.
    pub fn solid_angle(&self) -> Option<f64> {
        let n = self.dimension;
        match &self.kind {
            ConeKind::Halfspace => Some(crate::math::sphere_area(n) / 2.0),
            ConeKind::Circular { half_angle, .. } if n == 2 => Some(2.0 * half_angle),
            ConeKind::Circular { half_angle, .. } if n == 3 => Some(2.0 * PI * (1.0 - cos(*half_angle))),
            ConeKind::Polyhedral { .. } if n == 2 => self.arc_range().ok().map(|(a, b)| b - a),
            ConeKind::Polyhedral { normals } if self.is_orthant_normals(normals) => {
                Some(crate::math::sphere_area(n) / libm::pow(2.0, n as f64))
            }
            _ => None,
        }
    }

    fn is_orthant_normals(&self, normals: &[Vec<f64>]) -> bool {
        let n = self.dimension;
        normals.len() == n
            && (0..n).all(|i| normals.iter().any(|v| (0..n).all(|j| abs(v[j] - if i == j { 1.0 } else { 0.0 }) < 1e-14)))
    }
}

fn matrix_rank(rows: &[Vec<f64>], n: usize) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut rank = 0;
    for col in 0..n {
        let Some(piv) = (rank..m.len()).max_by(|&a, &b| abs(m[a][col]).total_cmp(&abs(m[b][col]))) else {
            break;
        };
        if abs(m[piv][col]) < 1e-12 {
            continue;
        }
        m.swap(rank, piv);
        for r in 0..m.len() {
            if r != rank {
                let f = m[r][col] / m[rank][col];
                for c in 0..n {
                    m[r][c] -= f * m[rank][c];
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrant_is_in_orthant() {
        let check = ConeDescriptor::quadrant().validate_positive_orthant().unwrap();
        assert!(check.inside);
        assert!(check.advisory.is_none());
    }

    #[test]
    fn diagonal_circular_cone_touches_axes() {
        let s = 1.0 / libm::sqrt(2.0);
        let cone = ConeDescriptor::circular(vec![s, s], PI / 4.0);
        assert!(cone.validate_positive_orthant().unwrap().inside);
        let (a, b) = cone.arc_range().unwrap();
        assert!(a.abs() < 1e-15);
        assert_relative_eq!(b, PI / 2.0, epsilon = 1e-15);
        let wide = ConeDescriptor::circular(vec![s, s], PI / 4.0 + 0.01);
        assert!(!wide.validate_positive_orthant().unwrap().inside);
    }

    #[test]
    fn halfspace_reports_advisory() {
        let check = ConeDescriptor::halfspace(2).validate_positive_orthant().unwrap();
        assert!(!check.inside);
        assert!(check.advisory.unwrap().contains("mod translations"));
    }

    #[test]
    fn degenerate_cones_are_rejected() {
        let flat = ConeDescriptor::polyhedral(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert!(matches!(flat.validate(), Err(Error::DegenerateCone(_))));
        assert!(matches!(flat.validate_positive_orthant(), Err(Error::DegenerateCone(_))));
        let thin = ConeDescriptor::circular(vec![0.0, 1.0], 0.0);
        assert!(thin.validate().is_err());
    }

    #[test]
    fn octant_rays_are_axes() {
        let rays = ConeDescriptor::orthant(3).extreme_rays();
        assert_eq!(rays.len(), 3);
        for r in &rays {
            assert_eq!(r.iter().filter(|c| (**c - 1.0).abs() < 1e-12).count(), 1);
        }
        let rays4 = ConeDescriptor::orthant(4).extreme_rays();
        assert_eq!(rays4.len(), 4);
        assert!(ConeDescriptor::orthant(4).validate_positive_orthant().unwrap().inside);
    }

    #[test]
    fn polyhedral_with_line_is_outside_orthant() {
        let wedge = ConeDescriptor::polyhedral(vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        wedge.validate().unwrap();
        assert!(!wedge.validate_positive_orthant().unwrap().inside);
    }

    #[test]
    fn skew_planar_cone_arc() {
        // Normals (1, 0) and (-1, 1)/sqrt2: between angle 0 and... x > 0, y > x.
        let cone = ConeDescriptor::polyhedral(vec![vec![1.0, 0.0], vec![-1.0, 1.0]]);
        let (a, b) = cone.arc_range().unwrap();
        assert_relative_eq!(a, PI / 4.0, epsilon = 1e-12);
        assert_relative_eq!(b, PI / 2.0, epsilon = 1e-12);
        assert!(cone.contains(&[0.1, 0.5]));
        assert!(!cone.contains(&[0.5, 0.1]));
    }
}
