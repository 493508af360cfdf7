//! Building blocks shared by the model families.

use std::rc::Rc;

use geomrl_tensor::{CustomOp, ElementwiseFn, ParamSet, ParamVars, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Rows in the atom-type table; row 0 doubles as the mask token.
pub const EMBEDDING_ROWS: usize = 119;
pub const MASK_TOKEN: usize = 0;

pub struct Sin;
pub struct Cos;
pub struct Sigmoid;

impl ElementwiseFn for Sin {
    fn name(&self) -> &'static str {
        "sin"
    }
    fn value(&self, x: f64) -> f64 {
        x.sin()
    }
    fn derivative(&self, x: f64) -> f64 {
        x.cos()
    }
}

impl ElementwiseFn for Cos {
    fn name(&self) -> &'static str {
        "cos"
    }
    fn value(&self, x: f64) -> f64 {
        x.cos()
    }
    fn derivative(&self, x: f64) -> f64 {
        -x.sin()
    }
}

impl ElementwiseFn for Sigmoid {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn value(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }
    fn derivative(&self, x: f64) -> f64 {
        let s = self.value(x);
        s * (1.0 - s)
    }
}

pub fn sin<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    Ok(x.map(Rc::new(Sin))?)
}

pub fn cos<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    Ok(x.map(Rc::new(Cos))?)
}

pub fn sigmoid<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    Ok(x.map(Rc::new(Sigmoid))?)
}

/// `[A, B, C] -> [A, C, B]`.
struct SwapLast;

fn swap_last(t: &Tensor) -> Result<Tensor, TensorError> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(TensorError::Shape {
            op: "swap_last",
            detail: format!("rank-3 input expected, got {s:?}"),
        });
    }
    let (a, b, c) = (s[0], s[1], s[2]);
    let v = t.values();
    let mut out = vec![0.0; v.len()];
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                out[(i * c + k) * b + j] = v[(i * b + j) * c + k];
            }
        }
    }
    Tensor::new(vec![a, c, b], out)
}

impl CustomOp for SwapLast {
    fn name(&self) -> &'static str {
        "swap_last"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, TensorError> {
        swap_last(inputs[0])
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, grad_out: &Tensor) -> Result<Vec<Tensor>, TensorError> {
        Ok(vec![swap_last(grad_out)?])
    }
}

pub fn swap_last_axes<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    Ok(x.tape().custom(&[*x], Rc::new(SwapLast))?)
}

/// `x [N, C, M] -> [N, C', M]` with `out[n, c', m] = Σ_c w[c, c'] x[n, c, m]`.
pub fn channel_mix<'t>(x: &Var<'t>, w: &Var<'t>) -> Result<Var<'t>> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(GeomError::Shape(format!("channel_mix input {s:?}")));
    }
    let (n, c, m) = (s[0], s[1], s[2]);
    let c_out = w.shape().get(1).copied().unwrap_or(0);
    if m == 1 {
        return Ok(x.reshape(&[n, c])?.matmul(w)?.reshape(&[n, c_out, 1])?);
    }
    let t = swap_last_axes(x)?.reshape(&[n * m, c])?.matmul(w)?;
    swap_last_axes(&t.reshape(&[n, m, c_out])?)
}

pub fn init_embedding(params: &mut ParamSet, width: usize, rng: &mut impl rand::Rng) {
    use rand_distr::{Distribution, StandardNormal};
    let values = (0..EMBEDDING_ROWS * width)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            g
        })
        .collect();
    params.insert(
        "embed",
        Tensor::new(vec![EMBEDDING_ROWS, width], values).expect("embedding shape"),
    );
}

pub fn embed<'t>(vars: &ParamVars<'t>, atomic_numbers: Rc<[usize]>) -> Result<Var<'t>> {
    Ok(vars.get("embed")?.gather_rows(atomic_numbers)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Sum,
    Mean,
}

/// Pools node rows `[N, D]` into graph rows `[G, D]`.
pub fn readout<'t>(h: &Var<'t>, node_graph: Rc<[usize]>, num_graphs: usize, mode: Pooling) -> Result<Var<'t>> {
    let pooled = h.scatter_sum(node_graph.clone(), num_graphs)?;
    match mode {
        Pooling::Sum => Ok(pooled),
        Pooling::Mean => {
            let mut counts = vec![0.0; num_graphs];
            for &g in node_graph.iter() {
                counts[g] += 1.0;
            }
            if counts.contains(&0.0) {
                return Err(GeomError::Contract("mean readout over an empty graph".into()));
            }
            let inv = Tensor::new(vec![num_graphs, 1], counts.iter().map(|c| 1.0 / c).collect())?;
            Ok(pooled.mul(&h.tape().constant(inv)?)?)
        }
    }
}
