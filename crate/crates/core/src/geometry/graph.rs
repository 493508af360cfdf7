use crate::error::{GeomError, Result};
use crate::so3::{dot, norm, sub, Vec3};

use super::conformation::Conformation;

/// Directed cutoff-graph edges. `rel_vec[e] = pos[dst] + shift·lattice - pos[src]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub rel_vec: Vec<Vec3>,
    pub dist: Vec<f64>,
    pub shift: Vec<[i32; 3]>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn push(&mut self, src: usize, dst: usize, rel: Vec3, shift: [i32; 3]) {
        self.src.push(src);
        self.dst.push(dst);
        self.dist.push(norm(&rel));
        self.rel_vec.push(rel);
        self.shift.push(shift);
    }

    /// Checks indices against `num_nodes` and the per-edge invariants.
    pub fn validate(&self, num_nodes: usize, cutoff: Option<f64>) -> Result<()> {
        let e = self.src.len();
        if [self.dst.len(), self.rel_vec.len(), self.dist.len(), self.shift.len()]
            .iter()
            .any(|&n| n != e)
        {
            return Err(GeomError::Contract("edge arrays differ in length".into()));
        }
        for k in 0..e {
            if self.src[k] >= num_nodes || self.dst[k] >= num_nodes {
                return Err(GeomError::Contract(format!("edge {k} indexes past {num_nodes} nodes")));
            }
            if self.src[k] == self.dst[k] && self.shift[k] == [0; 3] {
                return Err(GeomError::Contract(format!("edge {k} is a self-loop")));
            }
            let d = self.dist[k];
            if !(d > 0.0) || cutoff.is_some_and(|c| d > c) {
                return Err(GeomError::Contract(format!("edge {k} has distance {d}")));
            }
        }
        Ok(())
    }

    /// In-degree per node.
    pub fn in_degree(&self, num_nodes: usize) -> Vec<usize> {
        let mut deg = vec![0; num_nodes];
        for &d in &self.dst {
            deg[d] += 1;
        }
        deg
    }
}

/// All ordered pairs with `0 < d <= cutoff`, src-major then dst.
pub fn radius_graph(conf: &Conformation, cutoff: f64) -> Result<EdgeList> {
    if conf.lattice.is_some() {
        return Err(GeomError::Contract(
            "conformation has a lattice; use periodic_radius_graph".into(),
        ));
    }
    radius_graph_points(&conf.positions, cutoff)
}

pub(crate) fn radius_graph_points(pos: &[Vec3], cutoff: f64) -> Result<EdgeList> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(GeomError::Contract(format!("cutoff must be positive, got {cutoff}")));
    }
    let mut edges = EdgeList::default();
    for (i, pi) in pos.iter().enumerate() {
        for (j, pj) in pos.iter().enumerate() {
            if i == j {
                continue;
            }
            let rel = sub(pj, pi);
            let d = norm(&rel);
            if d > 0.0 && d <= cutoff {
                edges.push(i, j, rel, [0; 3]);
            }
        }
    }
    Ok(edges)
}

/// Two-hop paths `k -> j -> i` through the cutoff graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AngleIndex {
    /// Edge index of `k -> j`.
    pub edge_kj: Vec<usize>,
    /// Edge index of `j -> i`.
    pub edge_ji: Vec<usize>,
    /// `cos` of the angle at `j` between `k - j` and `i - j`, clamped to `[-1, 1]`.
    pub cos: Vec<f64>,
    pub angle: Vec<f64>,
}

impl AngleIndex {
    pub fn len(&self) -> usize {
        self.edge_kj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_kj.is_empty()
    }
}

/// One triplet per pair of edges `(k -> j, j -> i)` with `k` and `i` distinct
/// points. Ordered by the `j -> i` edge, then by the `k -> j` edge.
pub fn build_angle_index(edges: &EdgeList) -> AngleIndex {
    let max_node = edges
        .src
        .iter()
        .chain(&edges.dst)
        .copied()
        .max()
        .map_or(0, |m| m + 1);
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); max_node];
    for (e, &d) in edges.dst.iter().enumerate() {
        incoming[d].push(e);
    }
    let mut out = AngleIndex::default();
    for ji in 0..edges.len() {
        let j = edges.src[ji];
        for &kj in &incoming[j] {
            let k = edges.src[kj];
            let i = edges.dst[ji];
            let sk = edges.shift[kj];
            let si = edges.shift[ji];
            // k sits in cell -sk relative to j, i in cell si
            if k == i && [-sk[0], -sk[1], -sk[2]] == si {
                continue;
            }
            let a = edges.rel_vec[kj];
            let b = edges.rel_vec[ji];
            let c = (-dot(&a, &b) / (edges.dist[kj] * edges.dist[ji])).clamp(-1.0, 1.0);
            out.edge_kj.push(kj);
            out.edge_ji.push(ji);
            out.cos.push(c);
            out.angle.push(c.acos());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(pos: Vec<Vec3>) -> Conformation {
        Conformation::new("t", vec![6; pos.len()], pos).unwrap()
    }

    #[test]
    fn pair_inside_and_outside_cutoff() {
        let near = conf(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        let e = radius_graph(&near, 1.5).unwrap();
        assert_eq!((e.src.clone(), e.dst.clone()), (vec![0, 1], vec![1, 0]));
        let far = conf(vec![[0.0; 3], [2.0, 0.0, 0.0]]);
        assert!(radius_graph(&far, 1.5).unwrap().is_empty());
    }

    #[test]
    fn cutoff_is_inclusive() {
        let c = conf(vec![[0.0; 3], [1.5, 0.0, 0.0]]);
        assert_eq!(radius_graph(&c, 1.5).unwrap().len(), 2);
    }

    #[test]
    fn chain_and_right_angle() {
        let chain = conf(vec![[-1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]]);
        let e = radius_graph(&chain, 1.1).unwrap();
        let a = build_angle_index(&e);
        assert_eq!(a.len(), 2);
        for &t in &a.angle {
            assert!((t - std::f64::consts::PI).abs() < 1e-15);
        }
        let corner = conf(vec![[1.0, 0.0, 0.0], [0.0; 3], [0.0, 1.0, 0.0]]);
        let e = radius_graph(&corner, 1.1).unwrap();
        let a = build_angle_index(&e);
        assert_eq!(a.len(), 2);
        for &t in &a.angle {
            assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_input_rejected() {
        let c = conf(vec![[0.0; 3]])
            .with_lattice([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
            .unwrap();
        assert!(radius_graph(&c, 1.0).is_err());
    }
}
