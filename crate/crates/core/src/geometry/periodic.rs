//! Cutoff graphs over periodic cells.
//!
//! Images of the cell are enumerated over integer shifts. An edge must have
//! length in `(0, cutoff]` and touch at least one atom of the anchor cell
//! (shift zero). Gathered mode folds image atoms back onto their original
//! indices and records the shift; expanded mode gives each participating image
//! atom a fresh node index.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::so3::{cross, det, norm, sub, Mat3, Vec3};

use super::conformation::Conformation;
use super::graph::EdgeList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationMode {
    Gathered,
    Expanded,
}

/// Node set of an expanded-mode graph: anchor atoms `0..N`, then images.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedNodes {
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    /// Anchor atom each node is a copy of.
    pub image_of: Vec<usize>,
    pub cell_shift: Vec<[i32; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGraph {
    pub mode: AugmentationMode,
    pub edges: EdgeList,
    /// Present in expanded mode only.
    pub nodes: Option<ExpandedNodes>,
}

pub(crate) fn lattice_offset(lattice: &Mat3, s: [i32; 3]) -> Vec3 {
    std::array::from_fn(|k| (0..3).map(|a| s[a] as f64 * lattice[a][k]).sum())
}

/// Fractional coordinates: solves `x = f · lattice`.
fn fractional(lattice: &Mat3, x: &Vec3) -> Vec3 {
    // rows of the inverse-transpose are the reciprocal vectors b_a with a_i·b_j = δ_ij
    let v = det(lattice);
    let b = [
        cross(&lattice[1], &lattice[2]),
        cross(&lattice[2], &lattice[0]),
        cross(&lattice[0], &lattice[1]),
    ];
    std::array::from_fn(|a| (b[a][0] * x[0] + b[a][1] * x[1] + b[a][2] * x[2]) / v)
}

/// Per-axis shift bound covering every pair within `cutoff`.
pub fn shift_range(lattice: &Mat3, positions: &[Vec3], cutoff: f64) -> Result<[i32; 3]> {
    let v = det(lattice).abs();
    if !(v > 1e-8) {
        return Err(GeomError::Contract("degenerate lattice".into()));
    }
    let fr: Vec<Vec3> = positions.iter().map(|p| fractional(lattice, p)).collect();
    let mut out = [0; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let spacing = v / norm(&cross(&lattice[b], &lattice[c]));
        let (lo, hi) = fr
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f[a]), hi.max(f[a])));
        let spread = if fr.is_empty() { 0.0 } else { hi - lo };
        let n = (cutoff / spacing + spread).ceil();
        if !n.is_finite() || n > 1e4 {
            return Err(GeomError::Contract(format!(
                "cutoff {cutoff} needs {n} cell images along axis {a}"
            )));
        }
        out[a] = n as i32;
    }
    Ok(out)
}

fn shifts(range: [i32; 3]) -> impl Iterator<Item = [i32; 3]> {
    let [r0, r1, r2] = range;
    (-r0..=r0).flat_map(move |a| (-r1..=r1).flat_map(move |b| (-r2..=r2).map(move |c| [a, b, c])))
}

pub fn periodic_radius_graph(
    conf: &Conformation,
    cutoff: f64,
    mode: AugmentationMode,
) -> Result<PeriodicGraph> {
    let lattice = conf
        .lattice
        .ok_or_else(|| GeomError::Contract("periodic graph needs a lattice".into()))?;
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(GeomError::Contract(format!("cutoff must be positive, got {cutoff}")));
    }
    let range = shift_range(&lattice, &conf.positions, cutoff)?;
    let pos = &conf.positions;

    // every directed pair (anchor i, atom j in cell s)
    let mut gathered = EdgeList::default();
    for (i, pi) in pos.iter().enumerate() {
        for (j, pj) in pos.iter().enumerate() {
            for s in shifts(range) {
                if i == j && s == [0; 3] {
                    continue;
                }
                let off = lattice_offset(&lattice, s);
                let rel = sub(&[pj[0] + off[0], pj[1] + off[1], pj[2] + off[2]], pi);
                let d = norm(&rel);
                if d > 0.0 && d <= cutoff {
                    gathered.push(i, j, rel, s);
                }
            }
        }
    }
    match mode {
        AugmentationMode::Gathered => Ok(PeriodicGraph {
            mode,
            edges: gathered,
            nodes: None,
        }),
        AugmentationMode::Expanded => Ok(expand(conf, &lattice, &gathered)),
    }
}

fn expand(conf: &Conformation, lattice: &Mat3, gathered: &EdgeList) -> PeriodicGraph {
    let n = conf.len();
    let mut images: Vec<([i32; 3], usize)> = gathered
        .shift
        .iter()
        .zip(&gathered.dst)
        .filter(|(s, _)| **s != [0; 3])
        .map(|(s, &j)| (*s, j))
        .collect();
    images.sort_unstable();
    images.dedup();
    let node_of = |s: [i32; 3], j: usize| -> usize {
        if s == [0; 3] {
            j
        } else {
            n + images.binary_search(&(s, j)).expect("image registered")
        }
    };

    let mut nodes = ExpandedNodes {
        atomic_numbers: conf.atomic_numbers.clone(),
        positions: conf.positions.clone(),
        image_of: (0..n).collect(),
        cell_shift: vec![[0; 3]; n],
    };
    for &(s, j) in &images {
        let off = lattice_offset(lattice, s);
        let p = conf.positions[j];
        nodes.atomic_numbers.push(conf.atomic_numbers[j]);
        nodes.positions.push([p[0] + off[0], p[1] + off[1], p[2] + off[2]]);
        nodes.image_of.push(j);
        nodes.cell_shift.push(s);
    }

    let mut edges = EdgeList::default();
    for e in 0..gathered.len() {
        let (i, j, s) = (gathered.src[e], gathered.dst[e], gathered.shift[e]);
        let rel = gathered.rel_vec[e];
        let dst = node_of(s, j);
        edges.push(i, dst, rel, [0; 3]);
        if s != [0; 3] {
            edges.push(dst, i, [-rel[0], -rel[1], -rel[2]], [0; 3]);
        }
    }
    PeriodicGraph {
        mode: AugmentationMode::Expanded,
        edges,
        nodes: Some(nodes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(a: f64, pos: Vec<Vec3>) -> Conformation {
        Conformation::new("c", vec![11; pos.len()], pos)
            .unwrap()
            .with_lattice([[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]])
            .unwrap()
    }

    #[test]
    fn single_atom_has_six_self_images() {
        let c = cubic(2.0, vec![[0.0; 3]]);
        let g = periodic_radius_graph(&c, 2.0 + 1e-9, AugmentationMode::Gathered).unwrap();
        assert_eq!(g.edges.len(), 6);
        let mut s = g.edges.shift.clone();
        s.sort_unstable();
        assert_eq!(
            s,
            vec![[-1, 0, 0], [0, -1, 0], [0, 0, -1], [0, 0, 1], [0, 1, 0], [1, 0, 0]]
        );
    }

    #[test]
    fn tiny_cutoff_gives_nothing() {
        let c = cubic(2.0, vec![[0.0; 3], [1.0, 1.0, 1.0]]);
        for mode in [AugmentationMode::Gathered, AugmentationMode::Expanded] {
            assert!(periodic_radius_graph(&c, 1e-9, mode).unwrap().edges.is_empty());
        }
    }

    #[test]
    fn thin_cell_uses_wide_shift_range() {
        let c = cubic(0.4, vec![[0.0; 3]]);
        assert_eq!(shift_range(&c.lattice.unwrap(), &c.positions, 1.0).unwrap(), [3, 3, 3]);
        let g = periodic_radius_graph(&c, 1.0, AugmentationMode::Gathered).unwrap();
        // lattice points within radius 2.5 cells: brute count
        let mut want = 0;
        for a in -3i32..=3 {
            for b in -3i32..=3 {
                for c in -3i32..=3 {
                    let d2 = (a * a + b * b + c * c) as f64 * 0.16;
                    if d2 > 0.0 && d2 <= 1.0 {
                        want += 1;
                    }
                }
            }
        }
        assert_eq!(g.edges.len(), want);
    }

    #[test]
    fn missing_lattice_rejected() {
        let c = Conformation::new("m", vec![1], vec![[0.0; 3]]).unwrap();
        assert!(periodic_radius_graph(&c, 1.0, AugmentationMode::Gathered).is_err());
    }
}
