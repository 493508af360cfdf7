use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::{OnceLock, RwLock};

use geomrl_tensor::{ElementwiseFn, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::nn::cos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Gaussian,
    Bessel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    None,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBasisSpec {
    pub kind: BasisKind,
    pub count: usize,
    pub cutoff: f64,
    pub envelope: Envelope,
}

impl RadialBasisSpec {
    pub fn new(kind: BasisKind, count: usize, cutoff: f64, envelope: Envelope) -> Result<Self> {
        let s = Self {
            kind,
            count,
            cutoff,
            envelope,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(GeomError::Contract("radial basis needs at least one function".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(GeomError::Contract(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        Ok(())
    }

    /// Gaussian centers, evenly spaced on `[0, c]`.
    pub fn centers(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![0.0];
        }
        (0..self.count)
            .map(|k| self.cutoff * k as f64 / (self.count - 1) as f64)
            .collect()
    }

    /// `1 / Δμ²`.
    pub fn gamma(&self) -> f64 {
        let spacing = if self.count == 1 {
            self.cutoff
        } else {
            self.cutoff / (self.count - 1) as f64
        };
        1.0 / (spacing * spacing)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.count).map(|k| k as f64 * PI / self.cutoff).collect()
    }

    pub fn envelope_value(&self, d: f64) -> f64 {
        match self.envelope {
            Envelope::None => 1.0,
            Envelope::Cosine => 0.5 * ((PI * d / self.cutoff).cos() + 1.0),
        }
    }
}

/// Expands one distance, `0 < d <= c`.
pub fn radial_basis(spec: &RadialBasisSpec, d: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(d > 0.0 && d <= spec.cutoff) {
        return Err(GeomError::Contract(format!(
            "distance {d} outside (0, {}]",
            spec.cutoff
        )));
    }
    let env = spec.envelope_value(d);
    let raw: Vec<f64> = match spec.kind {
        BasisKind::Gaussian => {
            let g = spec.gamma();
            spec.centers().iter().map(|mu| (-g * (d - mu) * (d - mu)).exp()).collect()
        }
        BasisKind::Bessel => {
            let norm = (2.0 / spec.cutoff).sqrt();
            spec.frequencies().iter().map(|w| norm * (w * d).sin() / d).collect()
        }
    };
    Ok(raw.into_iter().map(|v| v * env).collect())
}

/// `[E, 1]` distances to `[E, count]` basis values, envelope included.
pub fn radial_basis_var<'t>(spec: &RadialBasisSpec, d: &Var<'t>) -> Result<Var<'t>> {
    let tape = d.tape();
    let raw = match spec.kind {
        BasisKind::Gaussian => {
            let mu = tape.constant(Tensor::vector(spec.centers()))?;
            d.sub(&mu)?.powf(2.0)?.scale(-spec.gamma())?.exp()?
        }
        BasisKind::Bessel => {
            let w = tape.constant(Tensor::vector(spec.frequencies()))?;
            crate::nn::sin(&d.mul(&w)?)?
                .div(d)?
                .scale((2.0 / spec.cutoff).sqrt())?
        }
    };
    match spec.envelope {
        Envelope::None => Ok(raw),
        Envelope::Cosine => Ok(raw.mul(&envelope_var(spec, d)?)?),
    }
}

/// `[E, 1]` envelope factors; ones when the spec has no envelope.
pub fn envelope_var<'t>(spec: &RadialBasisSpec, d: &Var<'t>) -> Result<Var<'t>> {
    match spec.envelope {
        Envelope::None => Ok(d.tape().constant(Tensor::ones(&d.shape()))?),
        Envelope::Cosine => Ok(cos(&d.scale(PI / spec.cutoff)?)?.add_scalar(1.0)?.scale(0.5)?),
    }
}

/// Spherical Bessel function of the first kind.
pub fn spherical_bessel(l: usize, x: f64) -> f64 {
    if x.abs() <= 2.0 + l as f64 {
        // x^l Σ_k (-x²/2)^k / (k! (2l+2k+1)!!)
        let mut dfact = 1.0;
        for k in 1..=l {
            dfact *= (2 * k + 1) as f64;
        }
        let mut term = x.powi(l as i32) / dfact;
        let mut sum = term;
        let h = -0.5 * x * x;
        for k in 1..60 {
            term *= h / (k as f64 * (2 * l + 2 * k + 1) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let j0 = x.sin() / x;
        if l == 0 {
            return j0;
        }
        let mut prev = j0;
        let mut cur = x.sin() / (x * x) - x.cos() / x;
        for k in 1..l {
            let next = (2 * k + 1) as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        cur
    }
}

pub fn spherical_bessel_derivative(l: usize, x: f64) -> f64 {
    if l == 0 {
        return -spherical_bessel(1, x);
    }
    if x == 0.0 {
        return if l == 1 { 1.0 / 3.0 } else { 0.0 };
    }
    spherical_bessel(l - 1, x) - (l + 1) as f64 / x * spherical_bessel(l, x)
}

struct SphericalBessel(usize);

impl ElementwiseFn for SphericalBessel {
    fn name(&self) -> &'static str {
        "spherical_bessel"
    }
    fn value(&self, x: f64) -> f64 {
        spherical_bessel(self.0, x)
    }
    fn derivative(&self, x: f64) -> f64 {
        spherical_bessel_derivative(self.0, x)
    }
}

type RootCache = RwLock<HashMap<usize, Vec<f64>>>;

fn root_cache() -> &'static RootCache {
    static CACHE: OnceLock<RootCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// First `n` positive zeros of `j_l`, by scanning for sign changes and
/// bisecting.
pub fn bessel_roots(l: usize, n: usize) -> Vec<f64> {
    if let Some(r) = root_cache().read().expect("root cache").get(&l) {
        if r.len() >= n {
            return r[..n].to_vec();
        }
    }
    let mut roots = Vec::with_capacity(n);
    let step = 0.1;
    let mut a = 0.5;
    let mut fa = spherical_bessel(l, a);
    while roots.len() < n {
        let b = a + step;
        let fb = spherical_bessel(l, b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = spherical_bessel(l, mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    root_cache().write().expect("root cache").insert(l, roots.clone());
    roots
}

fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn zonal_norm(l: usize) -> f64 {
    ((2 * l + 1) as f64 / (4.0 * PI)).sqrt()
}

fn sbf_normalizer(l: usize, z: f64, c: f64) -> f64 {
    let j = spherical_bessel(l + 1, z);
    (2.0 / (c * c * c * j * j)).sqrt()
}

/// Joint distance–angle basis, index `l * n_max + n`.
pub fn spherical_basis_2d(l_max: usize, n_max: usize, d: f64, c: f64, angle: f64) -> Result<Vec<f64>> {
    if l_max > 3 || n_max == 0 {
        return Err(GeomError::Contract(format!(
            "spherical basis needs l_max <= 3 and n_max >= 1, got ({l_max}, {n_max})"
        )));
    }
    if !(c > 0.0 && d > 0.0 && d <= c) {
        return Err(GeomError::Contract(format!("distance {d} outside (0, {c}]")));
    }
    if !(0.0..=PI).contains(&angle) {
        return Err(GeomError::Contract(format!("angle {angle} outside [0, π]")));
    }
    let x = angle.cos();
    let mut out = Vec::with_capacity((l_max + 1) * n_max);
    for l in 0..=l_max {
        let y = zonal_norm(l) * legendre(l, x);
        for z in bessel_roots(l, n_max) {
            out.push(sbf_normalizer(l, z, c) * spherical_bessel(l, z * d / c) * y);
        }
    }
    Ok(out)
}

/// Tape version taking `[T, 1]` distances and `[T, 1]` angle cosines.
pub fn spherical_basis_var<'t>(
    l_max: usize,
    n_max: usize,
    c: f64,
    d: &Var<'t>,
    cos_angle: &Var<'t>,
) -> Result<Var<'t>> {
    let tape = d.tape();
    let mut parts = Vec::with_capacity(l_max + 1);
    // Legendre polynomials: l P_l = (2l-1) x P_{l-1} - (l-1) P_{l-2}
    let mut legendre_vars: Vec<Var<'t>> = vec![tape.constant(Tensor::ones(&cos_angle.shape()))?];
    if l_max >= 1 {
        legendre_vars.push(*cos_angle);
    }
    for l in 2..=l_max {
        let lf = l as f64;
        let next = cos_angle
            .mul(&legendre_vars[l - 1])?
            .scale((2.0 * lf - 1.0) / lf)?
            .sub(&legendre_vars[l - 2].scale((lf - 1.0) / lf)?)?;
        legendre_vars.push(next);
    }
    for (l, pl) in legendre_vars.iter().enumerate() {
        let roots = bessel_roots(l, n_max);
        let scaled = tape.constant(Tensor::vector(roots.iter().map(|z| z / c).collect()))?;
        let norms = tape.constant(Tensor::vector(
            roots.iter().map(|&z| sbf_normalizer(l, z, c) * zonal_norm(l)).collect(),
        ))?;
        let radial = d.mul(&scaled)?.map(Rc::new(SphericalBessel(l)))?.mul(&norms)?;
        parts.push(radial.mul(pl)?);
    }
    Ok(Var::concat(&parts, 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peaks_at_center() {
        let spec = RadialBasisSpec::new(BasisKind::Gaussian, 6, 5.0, Envelope::None).unwrap();
        let mu = spec.centers();
        let v = radial_basis(&spec, mu[3]).unwrap();
        assert_eq!(v[3], 1.0);
    }

    #[test]
    fn bessel_closed_form() {
        let spec = RadialBasisSpec::new(BasisKind::Bessel, 1, 5.0, Envelope::None).unwrap();
        let v = radial_basis(&spec, 2.5).unwrap();
        assert!((v[0] - 0.2529822128134704).abs() < 1e-12);
    }

    #[test]
    fn cosine_envelope_vanishes_at_cutoff() {
        let spec = RadialBasisSpec::new(BasisKind::Bessel, 4, 5.0, Envelope::Cosine).unwrap();
        let v = radial_basis(&spec, 5.0).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-16));
        assert!(radial_basis(&spec, 5.1).is_err());
        assert!(radial_basis(&spec, 0.0).is_err());
    }

    #[test]
    fn bessel_branches_agree() {
        for l in 0..=4 {
            let x = 2.0 + l as f64;
            let series = spherical_bessel(l, x);
            let up = spherical_bessel(l, x + 1e-12);
            assert!((series - up).abs() < 1e-9, "l={l}");
        }
    }

    #[test]
    fn first_roots() {
        assert!((bessel_roots(0, 2)[1] - 2.0 * PI).abs() < 1e-12);
        assert!((bessel_roots(1, 1)[0] - 4.493409457909064).abs() < 1e-12);
    }

    #[test]
    fn l0_basis_ignores_angle() {
        let a = spherical_basis_2d(2, 3, 0.7, 2.0, 0.3).unwrap();
        let b = spherical_basis_2d(2, 3, 0.7, 2.0, 2.9).unwrap();
        assert_eq!(a[..3], b[..3]);
        let near_zero = spherical_basis_2d(2, 3, 1e-9, 2.0, 0.3).unwrap();
        assert!(near_zero[3..].iter().all(|v| v.abs() < 1e-8));
    }
}
