use crate::error::{GeomError, Result};
use crate::so3::{cross, dot, norm, scale, sub, Vec3};

/// Below this cross-product norm the pair is treated as collinear with the origin.
pub const DEGENERATE_TOL: f64 = 1e-10;

/// Right-handed orthonormal triple attached to an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub e3: Vec3,
    /// Built by the fallback rule; not equivariant.
    pub degenerate: bool,
}

impl EdgeFrame {
    pub fn vectors(&self) -> [Vec3; 3] {
        [self.e1, self.e2, self.e3]
    }

    pub fn reconstruct(&self, r: &[f64; 3]) -> Vec3 {
        std::array::from_fn(|k| r[0] * self.e1[k] + r[1] * self.e2[k] + r[2] * self.e3[k])
    }
}

fn centered(x_i: &Vec3, x_j: &Vec3, center: Option<&Vec3>) -> (Vec3, Vec3) {
    match center {
        Some(c) => (sub(x_i, c), sub(x_j, c)),
        None => (*x_i, *x_j),
    }
}

/// `e1 = (x_i - x_j)/|.|`, `e2 = (x_i × x_j)/|.|`, `e3 = e1 × e2`.
///
/// With `center` set, both points are taken relative to it first (pass the
/// system's mean position for a translation-invariant frame).
pub fn build_edge_frame(x_i: &Vec3, x_j: &Vec3, center: Option<&Vec3>) -> Result<EdgeFrame> {
    let (a, b) = centered(x_i, x_j, center);
    let d = sub(&a, &b);
    let dn = norm(&d);
    if dn == 0.0 {
        return Err(GeomError::Contract("edge frame needs distinct points".into()));
    }
    let c = cross(&a, &b);
    let cn = norm(&c);
    if cn < DEGENERATE_TOL {
        return Err(GeomError::DegenerateFrame(format!(
            "points collinear with the origin (|x_i × x_j| = {cn:e})"
        )));
    }
    let e1 = scale(&d, 1.0 / dn);
    let e2 = scale(&c, 1.0 / cn);
    Ok(EdgeFrame {
        e1,
        e2,
        e3: cross(&e1, &e2),
        degenerate: false,
    })
}

/// Like [`build_edge_frame`], but collinear pairs get a deterministic frame:
/// `e1` completed by the coordinate axis of its smallest component after one
/// Gram–Schmidt step.
pub fn build_edge_frame_or_fallback(x_i: &Vec3, x_j: &Vec3, center: Option<&Vec3>) -> Result<EdgeFrame> {
    match build_edge_frame(x_i, x_j, center) {
        Err(GeomError::DegenerateFrame(_)) => {
            let (a, b) = centered(x_i, x_j, center);
            let d = sub(&a, &b);
            let e1 = scale(&d, 1.0 / norm(&d));
            let k = (0..3)
                .min_by(|&p, &q| e1[p].abs().total_cmp(&e1[q].abs()))
                .expect("three axes");
            let mut axis = [0.0; 3];
            axis[k] = 1.0;
            let t = sub(&axis, &scale(&e1, dot(&axis, &e1)));
            let e2 = scale(&t, 1.0 / norm(&t));
            Ok(EdgeFrame {
                e1,
                e2,
                e3: cross(&e1, &e2),
                degenerate: true,
            })
        }
        other => other,
    }
}

/// `r̃_k = <e_k, r>`.
pub fn scalarize(r: &Vec3, frame: &EdgeFrame) -> [f64; 3] {
    [dot(&frame.e1, r), dot(&frame.e2, r), dot(&frame.e3, r)]
}
