//! Clebsch–Gordan coupling tensors in the real basis.
//!
//! For each admissible `(l1, l2, l3)` the coupling is the one-dimensional null
//! space of the intertwining constraints
//! `Σ D1[m1,a] D2[m2,b] C[m1,m2,m3] = Σ D3[m3,n] C[a,b,n]`, stacked over a
//! handful of fixed rotations. The null vector is the eigenvector of the
//! accumulated normal matrix with the smallest eigenvalue, normalized to unit
//! Frobenius norm with its first nonzero entry positive.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};

use super::harmonics::L_MAX;
use super::rotation::random_rotation;
use super::wigner::{wigner_d, WignerD};
use crate::error::{GeomError, Result};

const CONSTRAINT_SEEDS: [u64; 3] = [0x5eed_0001, 0x5eed_0002, 0x5eed_0003];
const ZERO_CUT: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct CgTensor {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
    /// Indexed `[m1][m2][m3]`, flattened row-major.
    pub coeffs: Vec<f64>,
}

impl CgTensor {
    pub fn dims(&self) -> (usize, usize, usize) {
        (2 * self.l1 + 1, 2 * self.l2 + 1, 2 * self.l3 + 1)
    }

    pub fn get(&self, m1: usize, m2: usize, m3: usize) -> f64 {
        let (_, n2, n3) = self.dims();
        self.coeffs[(m1 * n2 + m2) * n3 + m3]
    }

    /// `out[m3] = Σ C[m1,m2,m3] u[m1] v[m2]`.
    pub fn couple(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let (n1, n2, n3) = self.dims();
        let mut out = vec![0.0; n3];
        for m1 in 0..n1 {
            for m2 in 0..n2 {
                let uv = u[m1] * v[m2];
                if uv == 0.0 {
                    continue;
                }
                for (m3, o) in out.iter_mut().enumerate() {
                    *o += self.coeffs[(m1 * n2 + m2) * n3 + m3] * uv;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub fn triangle_ok(l1: usize, l2: usize, l3: usize) -> bool {
    l1.abs_diff(l2) <= l3 && l3 <= l1 + l2
}

type Cache = RwLock<HashMap<(usize, usize, usize), Arc<CgTensor>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Memoized coupling tensor for `(l1, l2, l3)`.
pub fn clebsch_gordan(l1: usize, l2: usize, l3: usize) -> Result<Arc<CgTensor>> {
    if l1.max(l2).max(l3) > L_MAX {
        return Err(GeomError::Contract(format!(
            "degrees ({l1},{l2},{l3}) exceed cap {L_MAX}"
        )));
    }
    if !triangle_ok(l1, l2, l3) {
        return Err(GeomError::Contract(format!(
            "({l1},{l2},{l3}) violates the triangle inequality"
        )));
    }
    let key = (l1, l2, l3);
    if let Some(hit) = cache().read().expect("cg cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let cg = Arc::new(solve(l1, l2, l3)?);
    let mut w = cache().write().expect("cg cache poisoned");
    Ok(Arc::clone(w.entry(key).or_insert(cg)))
}

fn solve(l1: usize, l2: usize, l3: usize) -> Result<CgTensor> {
    let (n1, n2, n3) = (2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1);
    let n = n1 * n2 * n3;
    let idx = |a: usize, b: usize, c: usize| (a * n2 + b) * n3 + c;
    let mut normal = DMatrix::<f64>::zeros(n, n);
    for seed in CONSTRAINT_SEEDS {
        let r = random_rotation(seed);
        let (d1, d2, d3) = (wigner_d(l1, &r)?, wigner_d(l2, &r)?, wigner_d(l3, &r)?);
        let m = constraint_matrix(&d1, &d2, &d3, idx);
        normal += m.transpose() * &m;
    }
    let eig = SymmetricEigen::new(normal);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let mut coeffs: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    for c in &mut coeffs {
        if c.abs() < ZERO_CUT {
            *c = 0.0;
        }
    }
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    let first = coeffs.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
    let s = first.signum() / norm;
    for c in &mut coeffs {
        *c *= s;
    }
    Ok(CgTensor { l1, l2, l3, coeffs })
}

fn constraint_matrix(
    d1: &WignerD,
    d2: &WignerD,
    d3: &WignerD,
    idx: impl Fn(usize, usize, usize) -> usize,
) -> DMatrix<f64> {
    let (n1, n2, n3) = (d1.dim(), d2.dim(), d3.dim());
    let n = n1 * n2 * n3;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for a in 0..n1 {
        for b in 0..n2 {
            for c in 0..n3 {
                let row = idx(a, b, c);
                for m1 in 0..n1 {
                    for m2 in 0..n2 {
                        m[(row, idx(m1, m2, c))] += d1.get(m1, a) * d2.get(m2, b);
                    }
                }
                for k in 0..n3 {
                    m[(row, idx(a, b, k))] -= d3.get(c, k);
                }
            }
        }
    }
    m
}
