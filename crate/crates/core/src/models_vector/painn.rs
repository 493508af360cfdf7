use geomrl_tensor::{Activation, MlpSpec, ParamSet, ParamVars, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::models_invariant::{EdgeFeatures, RadialBasisSpec};
use crate::nn::{embed, init_embedding};

/// Added under the square root of vector norms so gradients stay finite at zero.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PainnSpec {
    pub features: usize,
    pub layers: usize,
    pub radial: RadialBasisSpec,
}

impl PainnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.layers == 0 {
            return Err(GeomError::Contract("painn widths must be positive".into()));
        }
        self.radial.validate()
    }

    fn message_mlp(&self) -> MlpSpec {
        let f = self.features;
        MlpSpec {
            widths: vec![f, f, 3 * f],
            activation: Activation::Silu,
        }
    }

    fn update_mlp(&self) -> MlpSpec {
        let f = self.features;
        MlpSpec {
            widths: vec![2 * f, f, 3 * f],
            activation: Activation::Silu,
        }
    }

    /// Registers `{prefix}.phi.*`, `{prefix}.w_rbf`, `{prefix}.b_rbf`,
    /// `{prefix}.u`, `{prefix}.v`, `{prefix}.update.*`.
    pub fn init_layer(&self, prefix: &str, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        let f = self.features;
        self.message_mlp().init(&format!("{prefix}.phi"), params, rng)?;
        params.insert_glorot(&format!("{prefix}.w_rbf"), self.radial.count, 3 * f, rng);
        params.insert_zeros(&format!("{prefix}.b_rbf"), &[3 * f]);
        params.insert_glorot(&format!("{prefix}.u"), f, f, rng);
        params.insert_glorot(&format!("{prefix}.v"), f, f, rng);
        self.update_mlp().init(&format!("{prefix}.update"), params, rng)?;
        Ok(())
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        init_embedding(params, self.features, rng);
        for t in 0..self.layers {
            self.init_layer(&format!("painn{t}"), params, rng)?;
        }
        params.insert_glorot("vector_out", self.features, 1, rng);
        Ok(())
    }

    /// Returns scalars `[N, F]` and one Cartesian vector per node `[N, 3]`.
    pub fn forward<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let n = batch.num_nodes;
        let f = self.features;
        let edges = EdgeFeatures::new(&self.radial, batch, pos)?;
        let unit = edges.geom.unit()?;
        let mut s = embed(vars, batch.atomic_numbers.clone())?;
        let mut v = pos.tape().constant(Tensor::zeros(&[n, 3, f]))?;
        for t in 0..self.layers {
            (s, v) = painn_layer(self, vars, &format!("painn{t}"), &s, &v, &edges, &unit)?;
        }
        let out = v.reshape(&[n * 3, f])?.matmul(&vars.get("vector_out")?)?.reshape(&[n, 3])?;
        Ok((s, out))
    }
}

/// Message then update block. Vectors `v` are `[N, 3, F]`; `unit` is the
/// `[E, 3]` edge direction.
pub fn painn_layer<'t>(
    spec: &PainnSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    s: &Var<'t>,
    v: &Var<'t>,
    edges: &EdgeFeatures<'t>,
    unit: &Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let f = spec.features;
    let n = s.shape()[0];
    if s.shape() != [n, f] || v.shape() != [n, 3, f] {
        return Err(GeomError::Shape(format!(
            "painn inputs {:?} and {:?} with {f} channels",
            s.shape(),
            v.shape()
        )));
    }
    let e = edges.src.len();

    // message
    let phi = spec
        .message_mlp()
        .forward(&format!("{prefix}.phi"), vars, *s)?
        .gather_rows(edges.src.clone())?;
    let w = edges
        .rbf
        .matmul(&vars.get(&format!("{prefix}.w_rbf"))?)?
        .add(&vars.get(&format!("{prefix}.b_rbf"))?)?
        .mul(&edges.env)?;
    let x = phi.mul(&w)?;
    let (x_s, x_vv, x_vs) = (x.slice(1, 0, f)?, x.slice(1, f, f)?, x.slice(1, 2 * f, f)?);
    let ds = x_s.scatter_sum(edges.dst.clone(), n)?;
    let dv_edge = v
        .gather_rows(edges.src.clone())?
        .mul(&x_vv.reshape(&[e, 1, f])?)?
        .add(&unit.reshape(&[e, 3, 1])?.mul(&x_vs.reshape(&[e, 1, f])?)?)?;
    let dv = dv_edge.scatter_sum(edges.dst.clone(), n)?;
    let s = s.add(&ds)?;
    let v = v.add(&dv)?;

    // update
    let mix = |name: &str| -> Result<Var<'t>> {
        Ok(v.reshape(&[n * 3, f])?
            .matmul(&vars.get(&format!("{prefix}.{name}"))?)?
            .reshape(&[n, 3, f])?)
    };
    let (uv, vv) = (mix("u")?, mix("v")?);
    let vnorm = vv.mul(&vv)?.sum_axis(1)?.add_scalar(NORM_EPS)?.powf(0.5)?;
    let a = spec
        .update_mlp()
        .forward(&format!("{prefix}.update"), vars, Var::concat(&[s, vnorm], 1)?)?;
    let (a_vv, a_sv, a_ss) = (a.slice(1, 0, f)?, a.slice(1, f, f)?, a.slice(1, 2 * f, f)?);
    let inner = uv.mul(&vv)?.sum_axis(1)?;
    let s_new = s.add(&a_ss)?.add(&a_sv.mul(&inner)?)?;
    let v_new = v.add(&uv.mul(&a_vv.reshape(&[n, 1, f])?)?)?;
    Ok((s_new, v_new))
}
