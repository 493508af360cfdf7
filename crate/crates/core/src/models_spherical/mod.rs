//! Spherical-frame equivariant layers over steerable features: tensor field
//! convolutions and SE(3) attention.

mod attention;
mod tfn;

pub use attention::{se3_attention, AttentionOutput, AttentionSpec};
pub use tfn::{
    aggregate, assemble, block, edge_messages, tfn_conv, tfn_filter, SphericalEdges, TfnLayerSpec,
    TfnPath, LAYER_L_MAX,
};

use geomrl_tensor::{ParamSet, ParamVars, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::models_invariant::RadialBasisSpec;
use crate::nn::{channel_mix, embed, init_embedding};
use crate::so3::IrrepsLayout;

fn default_filter_degrees() -> Vec<usize> {
    vec![0, 1, 2]
}

/// Stack of TFN convolutions or attention layers sharing one hidden layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalSpec {
    pub layout: IrrepsLayout,
    pub layers: usize,
    pub radial: RadialBasisSpec,
    pub radial_hidden: usize,
    #[serde(default = "default_filter_degrees")]
    pub filter_degrees: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphericalLayer {
    Convolution,
    Attention,
}

pub struct SphericalOutput<'t> {
    /// `[N, scalar_width]` invariant channels.
    pub scalars: Var<'t>,
    /// `[N, 3]` Cartesian vector per node, when the layout has a degree-1 block.
    pub vectors: Option<Var<'t>>,
}

impl SphericalSpec {
    pub fn scalar_width(&self) -> Result<usize> {
        let b = self
            .layout
            .block_of_degree(0)
            .ok_or_else(|| GeomError::Contract("hidden layout needs a degree-0 block".into()))?;
        Ok(self.layout.blocks()[b].mult)
    }

    pub fn layer_spec(&self, t: usize) -> Result<TfnLayerSpec> {
        let input = if t == 0 {
            IrrepsLayout::scalars(self.scalar_width()?)?
        } else {
            self.layout.clone()
        };
        Ok(TfnLayerSpec {
            input,
            output: self.layout.clone(),
            filter_degrees: self.filter_degrees.clone(),
            radial: self.radial,
            radial_hidden: self.radial_hidden,
        })
    }

    fn attention_spec(&self, t: usize) -> Result<AttentionSpec> {
        let value = self.layer_spec(t)?;
        let key_layout = IrrepsLayout::new(
            self.layout
                .blocks()
                .iter()
                .filter(|b| value.input.block_of_degree(b.l).is_some())
                .map(|b| (b.mult, b.l))
                .collect(),
        )?;
        Ok(AttentionSpec { value, key_layout })
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(GeomError::Contract("layer count must be positive".into()));
        }
        self.scalar_width()?;
        for t in 0..self.layers.min(2) {
            self.layer_spec(t)?.validate()?;
        }
        Ok(())
    }

    pub fn init(&self, kind: SphericalLayer, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        init_embedding(params, self.scalar_width()?, rng);
        for t in 0..self.layers {
            match kind {
                SphericalLayer::Convolution => self.layer_spec(t)?.init(&format!("tfn{t}"), params, rng)?,
                SphericalLayer::Attention => self.attention_spec(t)?.init(&format!("att{t}"), params, rng)?,
            }
        }
        if let Some(b) = self.layout.block_of_degree(1) {
            params.insert_glorot("vector_out", self.layout.blocks()[b].mult, 1, rng);
        }
        Ok(())
    }

    pub fn forward<'t>(
        &self,
        kind: SphericalLayer,
        vars: &ParamVars<'t>,
        batch: &GraphBatch,
        pos: Var<'t>,
    ) -> Result<SphericalOutput<'t>> {
        let edges = SphericalEdges::new(&self.radial, batch, pos)?;
        let mut v = embed(vars, batch.atomic_numbers.clone())?;
        for t in 0..self.layers {
            v = match kind {
                SphericalLayer::Convolution => tfn_conv(&self.layer_spec(t)?, vars, &format!("tfn{t}"), &v, &edges)?,
                SphericalLayer::Attention => {
                    se3_attention(&self.attention_spec(t)?, vars, &format!("att{t}"), &v, &edges)?.features
                }
            };
            v = scalar_silu(&self.layout, &v)?;
        }
        let s = self.layout.block_of_degree(0).expect("validated");
        let n = batch.num_nodes;
        let scalars = block(&self.layout, &v, s)?.reshape(&[n, self.layout.blocks()[s].mult])?;
        let vectors = match self.layout.block_of_degree(1) {
            Some(b) => {
                let yzx = channel_mix(&block(&self.layout, &v, b)?, &vars.get("vector_out")?)?.reshape(&[n, 3])?;
                Some(Var::concat(&[yzx.slice(1, 2, 1)?, yzx.slice(1, 0, 2)?], 1)?)
            }
            None => None,
        };
        Ok(SphericalOutput { scalars, vectors })
    }
}

/// SiLU on degree-0 blocks; higher degrees pass through.
fn scalar_silu<'t>(layout: &IrrepsLayout, v: &Var<'t>) -> Result<Var<'t>> {
    let parts = (0..layout.blocks().len())
        .map(|k| {
            let x = block(layout, v, k)?;
            if layout.blocks()[k].l == 0 {
                Ok(x.silu()?)
            } else {
                Ok(x)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(&parts)
}
