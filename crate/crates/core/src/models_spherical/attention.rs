use geomrl_tensor::{ParamSet, ParamVars, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tfn::{aggregate, block, edge_messages, SphericalEdges, TfnLayerSpec};
use crate::error::{GeomError, Result};
use crate::nn::channel_mix;
use crate::so3::IrrepsLayout;

/// Values follow `value`; keys are TFN messages into `value.input`-degree
/// blocks of `key_layout`, queries are per-degree linear maps of the node
/// features onto the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSpec {
    pub value: TfnLayerSpec,
    pub key_layout: IrrepsLayout,
}

pub struct AttentionOutput<'t> {
    pub features: Var<'t>,
    /// `[E, 1, 1]` softmax weights per edge.
    pub alpha: Var<'t>,
}

impl AttentionSpec {
    pub fn key_spec(&self) -> TfnLayerSpec {
        TfnLayerSpec {
            output: self.key_layout.clone(),
            ..self.value.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.value.validate()?;
        self.key_spec().validate()?;
        for kb in self.key_layout.blocks() {
            if self.value.input.block_of_degree(kb.l).is_none() {
                return Err(GeomError::Contract(format!(
                    "no input block of degree {} to build queries from",
                    kb.l
                )));
            }
        }
        Ok(())
    }

    pub fn init(&self, prefix: &str, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        self.value.init(&format!("{prefix}.value"), params, rng)?;
        self.key_spec().init(&format!("{prefix}.key"), params, rng)?;
        for (kb, b) in self.key_layout.blocks().iter().enumerate() {
            let ib = self.value.input.block_of_degree(b.l).expect("validated");
            let m_in = self.value.input.blocks()[ib].mult;
            params.insert_glorot(&format!("{prefix}.query{kb}"), m_in, b.mult, rng);
        }
        Ok(())
    }
}

/// Attention-weighted TFN update; every receiving node needs a neighbor.
pub fn se3_attention<'t>(
    spec: &AttentionSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    v: &Var<'t>,
    edges: &SphericalEdges<'t>,
) -> Result<AttentionOutput<'t>> {
    let n = v.shape()[0];
    let dst = edges.feats.dst.clone();
    let mut deg = vec![0usize; n];
    for &i in dst.iter() {
        deg[i] += 1;
    }
    if let Some(i) = deg.iter().position(|&d| d == 0) {
        return Err(GeomError::Contract(format!("node {i} has no neighbors to attend over")));
    }
    let e = dst.len();
    let key_spec = spec.key_spec();
    let key_prefix = format!("{prefix}.key");
    let key_msgs = edge_messages(&key_spec, vars, &key_prefix, v, edges)?;
    let mut score: Option<Var<'t>> = None;
    let mut key_width = 0;
    for (kb, (b, msg)) in spec.key_layout.blocks().iter().zip(&key_msgs).enumerate() {
        let k = channel_mix(msg, &vars.get(&format!("{key_prefix}.si{kb}"))?)?;
        let ib = spec.value.input.block_of_degree(b.l).expect("validated");
        let q = channel_mix(
            &block(&spec.value.input, v, ib)?,
            &vars.get(&format!("{prefix}.query{kb}"))?,
        )?
        .gather_rows(dst.clone())?;
        let s = q.mul(&k)?.reshape(&[e, b.width()])?.sum_axis(1)?;
        key_width += b.width();
        score = Some(match score {
            Some(acc) => acc.add(&s)?,
            None => s,
        });
    }
    let score = score
        .expect("key layout is non-empty")
        .scale(1.0 / (key_width as f64).sqrt())?;

    // subtract the per-receiver max as a constant
    let sv = score.value();
    let mut max = vec![f64::NEG_INFINITY; n];
    for (k, &i) in dst.iter().enumerate() {
        max[i] = max[i].max(sv.values()[k]);
    }
    let shift: Vec<f64> = dst.iter().map(|&i| max[i]).collect();
    let ex = score.sub(&v.tape().constant(Tensor::vector(shift))?)?.exp()?;
    let denom = ex.reshape(&[e, 1])?.scatter_sum(dst.clone(), n)?.gather_rows(dst)?;
    let alpha = ex.reshape(&[e, 1])?.div(&denom)?.reshape(&[e, 1, 1])?;

    let value_prefix = format!("{prefix}.value");
    let msgs = edge_messages(&spec.value, vars, &value_prefix, v, edges)?;
    let features = aggregate(&spec.value, vars, &value_prefix, v, &msgs, edges, Some(&alpha))?;
    Ok(AttentionOutput { features, alpha })
}
