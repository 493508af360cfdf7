//! Real Wigner-D matrices, defined by `Y^l(R u) = D^l(R) Y^l(u)`.
//!
//! `D^l` is recovered by least squares over a fixed spherical design: with
//! `A = [Y^l(u_k)]` and `B = [Y^l(R u_k)]`, `D = B A⁺`. The pseudo-inverse of
//! `A` depends only on `l` and is computed once.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::harmonics::{sh_flat, sh_offset, L_MAX};
use super::rotation::Rotation;
use crate::error::{GeomError, Result};

const SAMPLE_POINTS: usize = 64;

/// Fibonacci-sphere sample directions.
fn sample_directions() -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..SAMPLE_POINTS)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / SAMPLE_POINTS as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

struct Design {
    dirs: Vec<[f64; 3]>,
    /// `A⁺` per degree, `K x (2l+1)`.
    pinv: Vec<DMatrix<f64>>,
}

fn design() -> &'static Design {
    static DESIGN: OnceLock<Design> = OnceLock::new();
    DESIGN.get_or_init(|| {
        let dirs = sample_directions();
        let ys: Vec<Vec<f64>> = dirs.iter().map(|u| sh_flat(L_MAX, u[0], u[1], u[2])).collect();
        let pinv = (0..=L_MAX)
            .map(|l| {
                let n = 2 * l + 1;
                let a = DMatrix::from_fn(n, dirs.len(), |m, k| ys[k][sh_offset(l) + m]);
                let gram = &a * a.transpose();
                let inv = gram
                    .try_inverse()
                    .expect("spherical design spans every degree <= 4");
                a.transpose() * inv
            })
            .collect();
        Design { dirs, pinv }
    })
}

/// Row-major `(2l+1) x (2l+1)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerD {
    pub l: usize,
    pub data: Vec<f64>,
}

impl WignerD {
    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim() + j]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &WignerD) -> WignerD {
        let n = self.dim();
        let data = (0..n * n)
            .map(|ij| {
                let (i, j) = (ij / n, ij % n);
                (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum()
            })
            .collect();
        WignerD { l: self.l, data }
    }

    pub fn transpose(&self) -> WignerD {
        let n = self.dim();
        WignerD {
            l: self.l,
            data: (0..n * n).map(|ij| self.get(ij % n, ij / n)).collect(),
        }
    }

    pub fn identity(l: usize) -> WignerD {
        let n = 2 * l + 1;
        WignerD {
            l,
            data: (0..n * n).map(|ij| if ij / n == ij % n { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &WignerD) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub fn wigner_d(l: usize, rotation: &Rotation) -> Result<WignerD> {
    if l > L_MAX {
        return Err(GeomError::Contract(format!("degree {l} exceeds cap {L_MAX}")));
    }
    // re-validate: a Rotation may have been assembled from drifting products
    Rotation::from_matrix(*rotation.matrix())?;
    if l == 0 {
        return Ok(WignerD::identity(0));
    }
    let d = design();
    let n = 2 * l + 1;
    let b = DMatrix::from_fn(n, d.dirs.len(), |_, _| 0.0);
    let mut b = b;
    for (k, u) in d.dirs.iter().enumerate() {
        let ru = rotation.apply(u);
        let y = sh_flat(l, ru[0], ru[1], ru[2]);
        for m in 0..n {
            b[(m, k)] = y[sh_offset(l) + m];
        }
    }
    let dm = b * &d.pinv[l];
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(dm[(i, j)]);
        }
    }
    Ok(WignerD { l, data })
}
