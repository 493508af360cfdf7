//! Disjoint union of conformations with fixed cutoff-graph topology, and the
//! on-tape edge geometry derived from a position variable.

use std::rc::Rc;

use geomrl_tensor::{Tensor, Var};

use crate::error::{GeomError, Result};
use crate::geometry::{build_angle_index, cutoff_graph, AugmentationMode, Conformation, EdgeList};
use crate::so3::Vec3;

/// Triplets `k -> j -> i` as batch edge indices.
#[derive(Debug, Clone)]
pub struct TripletIndex {
    pub edge_kj: Rc<[usize]>,
    pub edge_ji: Rc<[usize]>,
}

impl TripletIndex {
    pub fn len(&self) -> usize {
        self.edge_kj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_kj.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub num_nodes: usize,
    pub num_graphs: usize,
    pub atomic_numbers: Rc<[usize]>,
    pub node_graph: Rc<[usize]>,
    pub atoms_per_graph: Vec<usize>,
    /// Messages flow `src -> dst`.
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// `shift · lattice` per edge, `[E, 3]`.
    pub shift_offset: Tensor,
    pub triplets: TripletIndex,
    pub positions: Tensor,
    pub energy: Option<Tensor>,
    pub forces: Option<Tensor>,
}

impl GraphBatch {
    /// Builds cutoff graphs (gathered mode for periodic cells) and stacks them.
    pub fn new(confs: &[Conformation], cutoff: f64) -> Result<Self> {
        let graphs = confs
            .iter()
            .map(|c| cutoff_graph(c, cutoff, AugmentationMode::Gathered))
            .collect::<Result<Vec<_>>>()?;
        Self::from_graphs(confs, &graphs)
    }

    pub fn from_graphs(confs: &[Conformation], graphs: &[EdgeList]) -> Result<Self> {
        if confs.is_empty() {
            return Err(GeomError::Contract("empty batch".into()));
        }
        if confs.len() != graphs.len() {
            return Err(GeomError::Contract("one edge list per conformation".into()));
        }
        let mut z = Vec::new();
        let mut node_graph = Vec::new();
        let mut pos = Vec::new();
        let (mut src, mut dst, mut off) = (Vec::new(), Vec::new(), Vec::new());
        let (mut kj, mut ji) = (Vec::new(), Vec::new());
        let mut atoms_per_graph = Vec::with_capacity(confs.len());
        let has_energy = confs.iter().all(|c| c.energy.is_some());
        let has_forces = confs.iter().all(|c| c.forces.is_some());
        let (mut energy, mut forces) = (Vec::new(), Vec::new());
        for (g, (conf, edges)) in confs.iter().zip(graphs).enumerate() {
            let (n0, e0) = (z.len(), src.len());
            edges.validate(conf.len(), None)?;
            z.extend(conf.atomic_numbers.iter().map(|&a| a as usize));
            node_graph.extend(std::iter::repeat_n(g, conf.len()));
            pos.extend(conf.positions.iter().flatten().copied());
            atoms_per_graph.push(conf.len());
            for e in 0..edges.len() {
                src.push(n0 + edges.src[e]);
                dst.push(n0 + edges.dst[e]);
                let s = edges.shift[e];
                let o: Vec3 = match &conf.lattice {
                    Some(l) => std::array::from_fn(|k| (0..3).map(|a| s[a] as f64 * l[a][k]).sum()),
                    None => [0.0; 3],
                };
                off.extend(o);
            }
            let angles = build_angle_index(edges);
            kj.extend(angles.edge_kj.iter().map(|e| e0 + e));
            ji.extend(angles.edge_ji.iter().map(|e| e0 + e));
            if has_energy {
                energy.push(conf.energy.unwrap_or(0.0));
            }
            if has_forces {
                forces.extend(conf.forces.iter().flatten().flatten().copied());
            }
        }
        let n = z.len();
        let e = src.len();
        Ok(Self {
            num_nodes: n,
            num_graphs: confs.len(),
            atomic_numbers: z.into(),
            node_graph: node_graph.into(),
            atoms_per_graph,
            src: src.into(),
            dst: dst.into(),
            shift_offset: Tensor::new(vec![e, 3], off)?,
            triplets: TripletIndex {
                edge_kj: kj.into(),
                edge_ji: ji.into(),
            },
            positions: Tensor::new(vec![n, 3], pos)?,
            energy: has_energy.then(|| Tensor::vector(energy)),
            forces: if has_forces {
                Some(Tensor::new(vec![n, 3], forces)?)
            } else {
                None
            },
        })
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    /// Same topology with replaced positions, `[N, 3]`.
    pub fn with_positions(&self, positions: Tensor) -> Result<Self> {
        if positions.shape() != [self.num_nodes, 3] {
            return Err(GeomError::Shape(format!(
                "positions {:?} for {} nodes",
                positions.shape(),
                self.num_nodes
            )));
        }
        Ok(Self {
            positions,
            ..self.clone()
        })
    }

    /// Receiving-node in-degree.
    pub fn in_degree(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_nodes];
        for &i in self.dst.iter() {
            d[i] += 1;
        }
        d
    }
}

/// Edge vectors and lengths recorded on the tape.
#[derive(Debug, Clone, Copy)]
pub struct EdgeGeometry<'t> {
    /// `pos[dst] + offset - pos[src]`, `[E, 3]`.
    pub rel: Var<'t>,
    /// `[E, 1]`.
    pub dist: Var<'t>,
}

impl<'t> EdgeGeometry<'t> {
    pub fn new(batch: &GraphBatch, pos: Var<'t>) -> Result<Self> {
        if pos.shape() != [batch.num_nodes, 3] {
            return Err(GeomError::Shape(format!(
                "position variable {:?} for {} nodes",
                pos.shape(),
                batch.num_nodes
            )));
        }
        let tape = pos.tape();
        let off = tape.constant(batch.shift_offset.clone())?;
        let rel = pos
            .gather_rows(batch.dst.clone())?
            .add(&off)?
            .sub(&pos.gather_rows(batch.src.clone())?)?;
        let dist = rel.norm(0.0)?.reshape(&[batch.num_edges(), 1])?;
        Ok(Self { rel, dist })
    }

    pub fn unit(&self) -> Result<Var<'t>> {
        Ok(self.rel.div(&self.dist)?)
    }
}
