//! Real orthonormal spherical harmonics for `l <= 4`.
//!
//! Components are ordered `m = -l..=l`; for `l = 1` that is `(y, z, x)` up to
//! the factor `sqrt(3 / 4π)`. No Condon–Shortley phase. Each `Y^l` has unit
//! norm on the sphere up to the constant `sqrt((2l+1) / 4π)`.
//!
//! The evaluation is written against [`Field`] so the same code yields exact
//! Jacobians through [`Dual3`], which backs the differentiable tape op.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::rc::Rc;

use geomrl_tensor::{CustomOp, Tensor, TensorError, Var};

use crate::error::{GeomError, Result};

pub const L_MAX: usize = 4;
const UNIT_TOL: f64 = 1e-9;

pub trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn constant(c: f64) -> Self;
    fn scaled(self, c: f64) -> Self;
}

impl Field for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn scaled(self, c: f64) -> Self {
        self * c
    }
}

/// A value with its gradient w.r.t. three inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn var(v: f64, k: usize) -> Self {
        let mut d = [0.0; 3];
        d[k] = 1.0;
        Dual3 { v, d }
    }
}

impl Add for Dual3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual3 {
            v: self.v + o.v,
            d: std::array::from_fn(|k| self.d[k] + o.d[k]),
        }
    }
}

impl Sub for Dual3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual3 {
            v: self.v - o.v,
            d: std::array::from_fn(|k| self.d[k] - o.d[k]),
        }
    }
}

impl Mul for Dual3 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual3 {
            v: self.v * o.v,
            d: std::array::from_fn(|k| self.d[k] * o.v + self.v * o.d[k]),
        }
    }
}

impl Field for Dual3 {
    fn constant(c: f64) -> Self {
        Dual3 { v: c, d: [0.0; 3] }
    }
    fn scaled(self, c: f64) -> Self {
        Dual3 {
            v: self.v * c,
            d: self.d.map(|x| x * c),
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Offset of degree `l` in the flat `[Y^0, Y^1, ..]` layout.
pub fn sh_offset(l: usize) -> usize {
    l * l
}

/// All components up to `l_max`, flattened as `[Y^0 | Y^1 | ... ]`.
///
/// The polynomial is evaluated as-is; callers pass unit vectors.
pub fn sh_flat<F: Field>(l_max: usize, x: F, y: F, z: F) -> Vec<F> {
    let n = (l_max + 1) * (l_max + 1);
    let mut out = vec![F::constant(0.0); n];

    // Re/Im of (x + iy)^m
    let mut cos_m = vec![F::constant(1.0)];
    let mut sin_m = vec![F::constant(0.0)];
    for m in 1..=l_max {
        let (c, s) = (cos_m[m - 1], sin_m[m - 1]);
        cos_m.push(c * x - s * y);
        sin_m.push(s * x + c * y);
    }

    // reduced associated Legendre: P_l^m(z) / (1 - z^2)^{m/2}
    let mut p = vec![vec![F::constant(0.0); l_max + 1]; l_max + 1];
    for m in 0..=l_max {
        let double_fact: f64 = (1..=m).map(|k| (2 * k - 1) as f64).product();
        p[m][m] = F::constant(double_fact);
        if m < l_max {
            p[m + 1][m] = z * p[m][m].scaled((2 * m + 1) as f64);
        }
        for l in m + 2..=l_max {
            let a = (z * p[l - 1][m]).scaled((2 * l - 1) as f64);
            let b = p[l - 2][m].scaled((l + m - 1) as f64);
            p[l][m] = (a - b).scaled(1.0 / (l - m) as f64);
        }
    }

    for l in 0..=l_max {
        let base = sh_offset(l) + l;
        let k0 = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
        out[base] = p[l][0].scaled(k0);
        for m in 1..=l {
            let k = std::f64::consts::SQRT_2 * k0 * (factorial(l - m) / factorial(l + m)).sqrt();
            let radial = p[l][m].scaled(k);
            out[base + m] = radial * cos_m[m];
            out[base - m] = radial * sin_m[m];
        }
    }
    out
}

fn check_unit(u: &[f64; 3]) -> Result<()> {
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(GeomError::Contract(format!(
            "spherical harmonics need a unit vector, got norm {n}"
        )));
    }
    Ok(())
}

fn check_degree(l_max: usize) -> Result<()> {
    if l_max > L_MAX {
        return Err(GeomError::Contract(format!("degree {l_max} exceeds cap {L_MAX}")));
    }
    Ok(())
}

/// `Y^0(u), .., Y^{l_max}(u)` for a unit vector `u`.
pub fn real_spherical_harmonics(l_max: usize, u: [f64; 3]) -> Result<Vec<Vec<f64>>> {
    check_degree(l_max)?;
    check_unit(&u)?;
    let flat = sh_flat(l_max, u[0], u[1], u[2]);
    Ok((0..=l_max)
        .map(|l| flat[sh_offset(l)..sh_offset(l + 1)].to_vec())
        .collect())
}

/// Degree-`l` block only.
pub fn spherical_harmonic(l: usize, u: [f64; 3]) -> Result<Vec<f64>> {
    Ok(real_spherical_harmonics(l, u)?.pop().expect("l_max + 1 blocks"))
}

/// Tape op `[E, 3] unit vectors -> [E, (l_max+1)^2]`.
struct ShOp {
    l_max: usize,
}

impl CustomOp for ShOp {
    fn name(&self) -> &'static str {
        "spherical_harmonics"
    }

    fn forward(&self, inputs: &[&Tensor]) -> geomrl_tensor::Result<Tensor> {
        let u = inputs[0];
        let width = (self.l_max + 1) * (self.l_max + 1);
        let mut out = Vec::with_capacity(u.rows() * width);
        for row in u.values().chunks(3) {
            out.extend(sh_flat(self.l_max, row[0], row[1], row[2]));
        }
        Tensor::new(vec![u.rows(), width], out)
    }

    fn backward(&self, inputs: &[&Tensor], _out: &Tensor, g: &Tensor) -> geomrl_tensor::Result<Vec<Tensor>> {
        let u = inputs[0];
        let width = (self.l_max + 1) * (self.l_max + 1);
        let mut grad = Vec::with_capacity(u.len());
        for (e, row) in u.values().chunks(3).enumerate() {
            let ys = sh_flat(
                self.l_max,
                Dual3::var(row[0], 0),
                Dual3::var(row[1], 1),
                Dual3::var(row[2], 2),
            );
            let gr = &g.values()[e * width..(e + 1) * width];
            let mut acc = [0.0; 3];
            for (y, gv) in ys.iter().zip(gr) {
                for k in 0..3 {
                    acc[k] += gv * y.d[k];
                }
            }
            grad.extend(acc);
        }
        Ok(vec![Tensor::new(u.shape().to_vec(), grad)?])
    }
}

/// Differentiable spherical harmonics of the rows of `unit` (`[E, 3]`).
///
/// The polynomial extension off the sphere is differentiated; combined with an
/// upstream normalization the radial component of the gradient cancels.
pub fn spherical_harmonics_var<'t>(l_max: usize, unit: &Var<'t>) -> Result<Var<'t>> {
    check_degree(l_max)?;
    let shape = unit.shape();
    if shape.len() != 2 || shape[1] != 3 {
        return Err(GeomError::Tensor(TensorError::Contract(format!(
            "spherical harmonics input must be [E, 3], got {shape:?}"
        ))));
    }
    Ok(unit.tape().custom(&[*unit], Rc::new(ShOp { l_max }))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_constant() {
        let y = real_spherical_harmonics(0, [0.6, 0.0, 0.8]).unwrap();
        assert!((y[0][0] - 0.282_094_791_773_878_1).abs() < 1e-15);
    }

    #[test]
    fn degree_one_along_z() {
        let y = spherical_harmonic(1, [0.0, 0.0, 1.0]).unwrap();
        let c = (3.0 / (4.0 * PI)).sqrt();
        assert_eq!(y, vec![0.0, c, 0.0]);
        assert!((c - 0.488_602_5).abs() < 1e-7);
    }

    #[test]
    fn degree_two_along_x() {
        let y = spherical_harmonic(2, [1.0, 0.0, 0.0]).unwrap();
        let want = [0.0, 0.0, -0.315_391_6, 0.0, 0.546_274_2];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-7, "{y:?}");
        }
    }

    #[test]
    fn rejects_non_unit_and_high_degree() {
        assert!(real_spherical_harmonics(2, [1.0, 1.0, 0.0]).is_err());
        assert!(real_spherical_harmonics(5, [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn block_norm_is_constant_on_sphere() {
        for u in [[0.0, 0.0, 1.0], [0.48, 0.6, 0.64], [-0.36, 0.48, -0.8]] {
            let y = real_spherical_harmonics(4, u).unwrap();
            for (l, block) in y.iter().enumerate() {
                let n2: f64 = block.iter().map(|v| v * v).sum();
                assert!((n2 - (2 * l + 1) as f64 / (4.0 * PI)).abs() < 1e-12);
            }
        }
    }
}
