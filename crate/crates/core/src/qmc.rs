//! Low-discrepancy `R_d` sequences and normal deviates built on them.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{cos, floor, log, pow, sin, sqrt, TAU};

/// Additive recurrence `x_k = frac(s + k α)` with `α_j = φ_d^{-(j+1)}` and
/// `φ_d` the positive root of `x^{d+1} = x + 1`.
#[derive(Debug, Clone)]
pub struct RdSequence {
    alpha: Vec<f64>,
    shift: Vec<f64>,
    index: u64,
}

impl RdSequence {
    /// Sequence in `dims` dimensions with a Cranley–Patterson shift drawn
    /// from `seed` (seed 0 still yields a shifted but fixed sequence).
    pub fn new(dims: usize, seed: u64) -> Self {
        let mut phi = 2.0;
        for _ in 0..64 {
            phi = pow(1.0 + phi, 1.0 / (dims as f64 + 1.0));
        }
        let alpha = (0..dims).map(|j| frac(pow(1.0 / phi, (j + 1) as f64))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dims).map(|_| rng.gen::<f64>()).collect();
        Self { alpha, shift, index: 0 }
    }

    pub fn dims(&self) -> usize {
        self.alpha.len()
    }

    /// Next point in `[0, 1)^d`.
    pub fn next_point(&mut self, out: &mut [f64]) {
        self.index += 1;
        let k = self.index as f64;
        for ((o, &a), &s) in out.iter_mut().zip(&self.alpha).zip(&self.shift) {
            *o = frac(s + k * a);
        }
    }
}

fn frac(x: f64) -> f64 {
    x - floor(x)
}

/// Box–Muller: maps uniforms (pairs) to standard normals, in place.
pub fn box_muller(uniforms: &[f64], out: &mut [f64]) {
    for (pair, o) in uniforms.chunks(2).zip(out.chunks_mut(2)) {
        let u1 = pair[0].max(1e-300);
        let u2 = if pair.len() > 1 { pair[1] } else { 0.5 };
        let r = sqrt(-2.0 * log(u1));
        o[0] = r * cos(TAU * u2);
        if o.len() > 1 {
            o[1] = r * sin(TAU * u2);
        }
    }
}

/// A uniform source that is either pseudo-random or low-discrepancy.
pub enum UniformSource {
    Random(ChaCha8Rng),
    LowDiscrepancy { seq: RdSequence, buf: Vec<f64>, pos: usize },
}

impl UniformSource {
    pub fn random(seed: u64) -> Self {
        Self::Random(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn low_discrepancy(dims: usize, seed: u64) -> Self {
        let seq = RdSequence::new(dims, seed);
        let buf = alloc::vec![0.0; dims];
        Self::LowDiscrepancy { seq, buf, pos: dims }
    }

    /// Fills `out` with the next `out.len()` coordinates.
    pub fn fill(&mut self, out: &mut [f64]) {
        match self {
            Self::Random(rng) => out.iter_mut().for_each(|o| *o = rng.gen::<f64>()),
            Self::LowDiscrepancy { seq, buf, pos } => {
                for o in out.iter_mut() {
                    if *pos >= buf.len() {
                        seq.next_point(buf);
                        *pos = 0;
                    }
                    *o = buf[*pos];
                    *pos += 1;
                }
            }
        }
    }

    pub fn next(&mut self) -> f64 {
        let mut x = [0.0];
        self.fill(&mut x);
        x[0]
    }

    /// A standard normal vector of the given length.
    pub fn normal_vector(&mut self, out: &mut [f64]) {
        let even = out.len().div_ceil(2) * 2;
        let mut u = alloc::vec![0.0; even];
        self.fill(&mut u);
        let mut z = alloc::vec![0.0; even];
        box_muller(&u, &mut z);
        out.copy_from_slice(&z[..out.len()]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rd_points_fill_the_cube_evenly() {
        let mut seq = RdSequence::new(2, 7);
        let mut p = [0.0; 2];
        let mut counts = [0usize; 16];
        for _ in 0..16_000 {
            seq.next_point(&mut p);
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
            let cell = (p[0] * 4.0) as usize + 4 * (p[1] * 4.0) as usize;
            counts[cell] += 1;
        }
        for c in counts {
            assert!((c as i64 - 1000).abs() < 20, "cell count {c}");
        }
    }

    #[test]
    fn seeded_sources_repeat() {
        let mut a = UniformSource::random(3);
        let mut b = UniformSource::random(3);
        for _ in 0..10 {
            assert_eq!(a.next(), b.next());
        }
    }
}
