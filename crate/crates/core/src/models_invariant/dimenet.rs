use geomrl_tensor::{Activation, MlpSpec, ParamSet, ParamVars, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::{spherical_basis_var, RadialBasisSpec};
use super::EdgeFeatures;
use crate::batch::{GraphBatch, TripletIndex};
use crate::error::{GeomError, Result};
use crate::nn::{embed, init_embedding};

fn default_l_max() -> usize {
    2
}

fn default_n_max() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimeNetSpec {
    pub hidden: usize,
    pub blocks: usize,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub radial: RadialBasisSpec,
}

impl DimeNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.blocks == 0 || self.n_max == 0 {
            return Err(GeomError::Contract("dimenet widths must be positive".into()));
        }
        if self.l_max > 3 {
            return Err(GeomError::Contract(format!("sbf degree {} exceeds 3", self.l_max)));
        }
        self.radial.validate()
    }

    pub fn sbf_width(&self) -> usize {
        (self.l_max + 1) * self.n_max
    }

    pub fn triplet_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![self.hidden + self.radial.count + self.sbf_width(), self.hidden, self.hidden],
            activation: Activation::Silu,
        }
    }

    fn edge_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![2 * self.hidden + self.radial.count, self.hidden, self.hidden],
            activation: Activation::Silu,
        }
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        init_embedding(params, self.hidden, rng);
        self.edge_mlp().init("dimenet.edge", params, rng)?;
        for b in 0..self.blocks {
            self.triplet_mlp().init(&format!("dimenet{b}"), params, rng)?;
        }
        Ok(())
    }

    /// `[T, sbf_width]` basis of `(d_kj, angle at j)` per triplet.
    pub fn triplet_basis<'t>(&self, edges: &EdgeFeatures<'t>, triplets: &TripletIndex) -> Result<Var<'t>> {
        let t = triplets.len();
        let a = edges.geom.rel.gather_rows(triplets.edge_kj.clone())?;
        let b = edges.geom.rel.gather_rows(triplets.edge_ji.clone())?;
        let d_kj = edges.geom.dist.gather_rows(triplets.edge_kj.clone())?;
        let d_ji = edges.geom.dist.gather_rows(triplets.edge_ji.clone())?;
        // k - j = -rel_kj and i - j = rel_ji
        let cos = a
            .mul(&b)?
            .sum_axis(1)?
            .reshape(&[t, 1])?
            .div(&d_kj.mul(&d_ji)?)?
            .neg()?;
        spherical_basis_var(self.l_max, self.n_max, self.radial.cutoff, &d_kj, &cos)
    }

    /// Edge embedding, residual two-hop blocks, then envelope-weighted
    /// aggregation of incoming messages onto nodes. Returns `[N, hidden]`.
    pub fn node_features<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<Var<'t>> {
        let edges = EdgeFeatures::new(&self.radial, batch, pos)?;
        let h = embed(vars, batch.atomic_numbers.clone())?;
        let pair = Var::concat(
            &[
                h.gather_rows(edges.src.clone())?,
                h.gather_rows(edges.dst.clone())?,
                edges.rbf,
            ],
            1,
        )?;
        let mut m = self.edge_mlp().forward("dimenet.edge", vars, pair)?;
        let sbf = self.triplet_basis(&edges, &batch.triplets)?;
        for b in 0..self.blocks {
            let upd = dimenet_layer(self, vars, &format!("dimenet{b}"), &m, &edges, &batch.triplets, &sbf)?;
            m = m.add(&upd)?;
        }
        let node = m.mul(&edges.env)?.scatter_sum(edges.dst.clone(), batch.num_nodes)?;
        Ok(h.add(&node)?)
    }
}

/// `m_ji <- Σ_{k ∈ N(j) \ {i}} env(d_kj) MLP([m_ji, rbf(d_ji), sbf(d_kj, α)])`.
pub fn dimenet_layer<'t>(
    spec: &DimeNetSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    m: &Var<'t>,
    edges: &EdgeFeatures<'t>,
    triplets: &TripletIndex,
    sbf: &Var<'t>,
) -> Result<Var<'t>> {
    let e = edges.src.len();
    if m.shape() != [e, spec.hidden] {
        return Err(GeomError::Shape(format!(
            "dimenet messages {:?} for {e} edges of width {}",
            m.shape(),
            spec.hidden
        )));
    }
    if sbf.shape() != [triplets.len(), spec.sbf_width()] {
        return Err(GeomError::Shape(format!(
            "triplet basis {:?} for {} triplets",
            sbf.shape(),
            triplets.len()
        )));
    }
    if triplets.edge_kj.iter().chain(triplets.edge_ji.iter()).any(|&x| x >= e) {
        return Err(GeomError::Contract("triplet references a missing edge".into()));
    }
    let inp = Var::concat(
        &[
            m.gather_rows(triplets.edge_ji.clone())?,
            edges.rbf.gather_rows(triplets.edge_ji.clone())?,
            *sbf,
        ],
        1,
    )?;
    let t = spec
        .triplet_mlp()
        .forward(prefix, vars, inp)?
        .mul(&edges.env.gather_rows(triplets.edge_kj.clone())?)?;
    Ok(t.scatter_sum(triplets.edge_ji.clone(), e)?)
}
