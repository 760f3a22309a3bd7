use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Rotation about the z axis by `theta` radians.
pub fn rotation_z(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation matrix of a quaternion `(w, x, y, z)`; the zero quaternion is
/// rejected.
pub fn rotation_from_quaternion(q: [f64; 4]) -> Result<Mat3> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-12 {
        return Err(Error::Oracle("zero quaternion".into()));
    }
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    Ok([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Proper rotation plus translation, `x ↦ R·x + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidMotion {
    pub rotation: Mat3,
    pub translation: [f64; 3],
}

impl RigidMotion {
    /// Haar-uniform rotation from a normalized Gaussian quaternion, with a
    /// translation drawn uniformly from `[-5, 5)³` Å.
    pub fn random(rng: &mut impl Rng) -> Self {
        let rotation = loop {
            let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            if let Ok(r) = rotation_from_quaternion(q) {
                break r;
            }
        };
        let translation = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        RigidMotion { rotation, translation }
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.rotation, v)
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotate(p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// Cell rows are lattice vectors, so each row rotates as a vector.
    pub fn rotate_cell(&self, cell: &Mat3) -> Mat3 {
        [self.rotate(cell[0]), self.rotate(cell[1]), self.rotate(cell[2])]
    }

    pub fn orthonormality_error(&self) -> f64 {
        let rtr = mat_mul(&transpose(&self.rotation), &self.rotation);
        let mut err: f64 = 0.0;
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                err = err.max((v - want).abs());
            }
        }
        err.max((det(&self.rotation) - 1.0).abs())
    }
}

/// Random proper rotation (zero translation) from a seed.
pub fn random_rotation(seed: u64) -> RigidMotion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = RigidMotion::random(&mut rng);
    m.translation = [0.0; 3];
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_quaternion_rejected() {
        assert!(rotation_from_quaternion([0.0; 4]).is_err());
    }

    #[test]
    fn samples_are_orthonormal() {
        for seed in 0..200 {
            let r = random_rotation(seed);
            assert!(r.orthonormality_error() < 1e-14);
        }
    }

    #[test]
    fn rotated_vectors_average_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = [0.3, -0.5, 0.8];
        let mut mean = [0.0; 3];
        let n = 10_000;
        for _ in 0..n {
            let r = RigidMotion::random(&mut rng).rotate(v);
            for k in 0..3 {
                mean[k] += r[k] / n as f64;
            }
        }
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.05, "{norm}");
    }
}
