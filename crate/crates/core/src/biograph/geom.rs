//! Small 3-vector helpers and rigid motions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = sub(a, b);
    dot3(d, d)
}

/// Orthogonal transform plus translation, `x ↦ Rx + t`. `R` may be a reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Uniformly random proper rotation (via a normalized Gaussian quaternion) and
    /// a translation with components drawn from `[-shift, shift]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, shift: f64) -> Self {
        let mut q = [0.0f64; 4];
        loop {
            for v in q.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-6 {
                q.iter_mut().for_each(|v| *v /= n);
                break;
            }
        }
        let [w, x, y, z] = q;
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        let translation = [
            rng.random_range(-shift..=shift),
            rng.random_range(-shift..=shift),
            rng.random_range(-shift..=shift),
        ];
        Self {
            rotation,
            translation,
        }
    }

    /// The same motion composed with a mirror through the yz-plane.
    pub fn reflected(mut self) -> Self {
        for row in self.rotation.iter_mut() {
            row[0] = -row[0];
        }
        self
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        [dot3(r[0], v), dot3(r[1], v), dot3(r[2], v)]
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(self.rotate(p), self.translation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn random_rotation_is_orthonormal() {
        let mut rng = substream(3, "geom");
        for _ in 0..20 {
            let m = RigidMotion::random(&mut rng, 5.0);
            for i in 0..3 {
                for j in 0..3 {
                    let col_dot: f64 = (0..3).map(|k| m.rotation[k][i] * m.rotation[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((col_dot - want).abs() < 1e-12);
                }
            }
            let p = [1.0, -2.0, 0.5];
            let q = [0.3, 0.1, 4.0];
            assert!((dist2(m.apply(p), m.apply(q)) - dist2(p, q)).abs() < 1e-10);
            assert!((dist2(m.reflected().apply(p), m.reflected().apply(q)) - dist2(p, q)).abs() < 1e-10);
        }
    }
}
