use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GeomError, Result};

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

const ORTHO_TOL: f64 = 1e-12;

/// A proper rotation of 3-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Validates `RᵀR = I` and `det R = +1` within 1e-12.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let rtr = mat_mul(&transpose(&m), &m);
        for (i, row) in rtr.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (v - want).abs() > ORTHO_TOL {
                    return Err(GeomError::Contract(format!(
                        "matrix is not orthogonal: (RᵀR)[{i}][{j}] = {v}"
                    )));
                }
            }
        }
        let d = det(&m);
        if (d - 1.0).abs() > ORTHO_TOL {
            return Err(GeomError::Contract(format!("rotation determinant {d} != +1")));
        }
        Ok(Rotation(m))
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn about_axis(axis: Vec3, angle: f64) -> Result<Self> {
        let n = norm(&axis);
        if n == 0.0 {
            return Err(GeomError::Contract("rotation axis is zero".into()));
        }
        let [x, y, z] = axis.map(|a| a / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Ok(Rotation([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]))
    }

    /// Unit quaternion `(w, x, y, z)` to matrix; the input is normalized first.
    pub fn from_quaternion(q: [f64; 4]) -> Result<Self> {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(GeomError::Contract("zero quaternion".into()));
        }
        let [w, x, y, z] = q.map(|v| v / n);
        Ok(Rotation([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        mat_vec(&self.0, v)
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(mat_mul(&self.0, &other.0))
    }

    pub fn inverse(&self) -> Rotation {
        Rotation(transpose(&self.0))
    }
}

/// Haar-uniform rotation from a normalized 4-D Gaussian quaternion.
pub fn random_rotation(seed: u64) -> Rotation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
            return Rotation::from_quaternion(q).expect("nonzero quaternion");
        }
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

pub fn transpose(m: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| m[j][i]))
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
