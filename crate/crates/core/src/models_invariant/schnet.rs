use geomrl_tensor::{Activation, MlpSpec, ParamSet, ParamVars, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::RadialBasisSpec;
use super::EdgeFeatures;
use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::nn::{embed, init_embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchNetSpec {
    pub hidden: usize,
    pub layers: usize,
    pub radial: RadialBasisSpec,
}

impl SchNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 {
            return Err(GeomError::Contract("schnet widths must be positive".into()));
        }
        self.radial.validate()
    }

    pub fn filter_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![self.radial.count, self.hidden, self.hidden],
            activation: Activation::Silu,
        }
    }

    fn atom_mlp(&self) -> MlpSpec {
        MlpSpec {
            widths: vec![self.hidden, self.hidden, self.hidden],
            activation: Activation::Silu,
        }
    }

    /// Registers the weights of interaction layer `prefix`:
    /// `{prefix}.filter.*`, `{prefix}.w_in`, `{prefix}.w_out`.
    pub fn init_layer(&self, prefix: &str, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.filter_mlp().init(&format!("{prefix}.filter"), params, rng)?;
        params.insert_glorot(&format!("{prefix}.w_in"), self.hidden, self.hidden, rng);
        params.insert_glorot(&format!("{prefix}.w_out"), self.hidden, self.hidden, rng);
        Ok(())
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        init_embedding(params, self.hidden, rng);
        for t in 0..self.layers {
            self.init_layer(&format!("schnet{t}"), params, rng)?;
            self.atom_mlp().init(&format!("schnet{t}.atom"), params, rng)?;
        }
        Ok(())
    }

    /// Embedding, then interaction layers each followed by an atomwise
    /// residual MLP. Returns `[N, hidden]`.
    pub fn node_features<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<Var<'t>> {
        let edges = EdgeFeatures::new(&self.radial, batch, pos)?;
        let mut h = embed(vars, batch.atomic_numbers.clone())?;
        for t in 0..self.layers {
            h = schnet_layer(self, vars, &format!("schnet{t}"), &h, &edges)?;
            let u = self.atom_mlp().forward(&format!("schnet{t}.atom"), vars, h)?;
            h = h.add(&u)?;
        }
        Ok(h)
    }
}

/// `h_i <- h_i + Σ_j env(d_ij) ((h_j W_in) ⊙ Filter(rbf_ij)) W_out`, with
/// messages flowing `src -> dst`.
pub fn schnet_layer<'t>(
    spec: &SchNetSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    h: &Var<'t>,
    edges: &EdgeFeatures<'t>,
) -> Result<Var<'t>> {
    let n = h.shape()[0];
    if h.shape() != [n, spec.hidden] {
        return Err(GeomError::Shape(format!(
            "schnet features {:?}, expected width {}",
            h.shape(),
            spec.hidden
        )));
    }
    let filt = spec
        .filter_mlp()
        .forward(&format!("{prefix}.filter"), vars, edges.rbf)?
        .mul(&edges.env)?;
    let x = h.matmul(&vars.get(&format!("{prefix}.w_in"))?)?;
    let msg = x.gather_rows(edges.src.clone())?.mul(&filt)?;
    let agg = msg.scatter_sum(edges.dst.clone(), n)?;
    Ok(h.add(&agg.matmul(&vars.get(&format!("{prefix}.w_out"))?)?)?)
}
