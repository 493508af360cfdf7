use geomrl_tensor::{Activation, MlpSpec, ParamSet, ParamVars, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::nn::{embed, init_embedding};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgnnSpec {
    pub hidden: usize,
    pub layers: usize,
    #[serde(default = "default_true")]
    pub update_coords: bool,
}

impl EgnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 {
            return Err(GeomError::Contract("egnn widths must be positive".into()));
        }
        Ok(())
    }

    fn edge_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![2 * self.hidden + 1, self.hidden, self.hidden],
            activation: Activation::Silu,
        }
    }

    fn coord_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![self.hidden, self.hidden, 1],
            activation: Activation::Silu,
        }
    }

    fn node_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![2 * self.hidden, self.hidden, self.hidden],
            activation: Activation::Silu,
        }
    }

    /// Registers `{prefix}.edge.*`, `{prefix}.coord.*`, `{prefix}.node.*`.
    pub fn init_layer(&self, prefix: &str, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.edge_mlp().init(&format!("{prefix}.edge"), params, rng)?;
        self.coord_mlp().init(&format!("{prefix}.coord"), params, rng)?;
        self.node_mlp().init(&format!("{prefix}.node"), params, rng)?;
        Ok(())
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        init_embedding(params, self.hidden, rng);
        for t in 0..self.layers {
            self.init_layer(&format!("egnn{t}"), params, rng)?;
        }
        Ok(())
    }

    /// Returns final node features `[N, hidden]` and coordinates `[N, 3]`.
    pub fn forward<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let mut h = embed(vars, batch.atomic_numbers.clone())?;
        let mut x = pos;
        for t in 0..self.layers {
            (h, x) = egnn_layer(self, vars, &format!("egnn{t}"), &h, &x, batch)?;
        }
        Ok((h, x))
    }
}

/// One EGNN update with receivers `i = dst`, senders `j = src`:
///
/// ```text
/// m_ij = φ_e(h_i, h_j, |x_i - x_j|²)
/// x_i' = x_i + Σ_j (x_i - x_j) φ_x(m_ij)
/// h_i' = φ_h(h_i, Σ_j m_ij)
/// ```
pub fn egnn_layer<'t>(
    spec: &EgnnSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    h: &Var<'t>,
    x: &Var<'t>,
    batch: &GraphBatch,
) -> Result<(Var<'t>, Var<'t>)> {
    let n = batch.num_nodes;
    if h.shape() != [n, spec.hidden] || x.shape() != [n, 3] {
        return Err(GeomError::Shape(format!(
            "egnn inputs {:?} and {:?} for {n} nodes of width {}",
            h.shape(),
            x.shape(),
            spec.hidden
        )));
    }
    let e = batch.num_edges();
    let off = x.tape().constant(batch.shift_offset.clone())?;
    let rel = x
        .gather_rows(batch.dst.clone())?
        .add(&off)?
        .sub(&x.gather_rows(batch.src.clone())?)?;
    let d2 = rel.mul(&rel)?.sum_axis(1)?.reshape(&[e, 1])?;
    let inp = Var::concat(
        &[h.gather_rows(batch.dst.clone())?, h.gather_rows(batch.src.clone())?, d2],
        1,
    )?;
    let m = spec.edge_mlp().forward(&format!("{prefix}.edge"), vars, inp)?.silu()?;
    let x_new = if spec.update_coords {
        let w = spec.coord_mlp().forward(&format!("{prefix}.coord"), vars, m)?;
        x.add(&rel.mul(&w)?.scatter_sum(batch.dst.clone(), n)?)?
    } else {
        *x
    };
    let agg = if e == 0 {
        h.tape().constant(Tensor::zeros(&[n, spec.hidden]))?
    } else {
        m.scatter_sum(batch.dst.clone(), n)?
    };
    let h_new = spec
        .node_mlp()
        .forward(&format!("{prefix}.node"), vars, Var::concat(&[*h, agg], 1)?)?;
    Ok((h_new, x_new))
}
