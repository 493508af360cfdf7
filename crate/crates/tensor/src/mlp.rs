use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, TensorError};
use crate::params::{ParamSet, ParamVars};
use crate::tape::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Identity,
}

/// Layer widths `[d_in, h_1, ..., d_out]`; activation between affine layers,
/// none after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self { widths, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(TensorError::Contract(
                "mlp needs at least input and output widths".into(),
            ));
        }
        if self.widths.contains(&0) {
            return Err(TensorError::Contract("mlp widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Registers Glorot-uniform weights `{prefix}.w{k}` and zero biases
    /// `{prefix}.b{k}`.
    pub fn init(&self, prefix: &str, params: &mut ParamSet, rng: &mut impl rand::Rng) -> Result<()> {
        self.validate()?;
        for k in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[k], self.widths[k + 1]);
            params.insert_glorot(&format!("{prefix}.w{k}"), fan_in, fan_out, rng);
            params.insert_zeros(&format!("{prefix}.b{k}"), &[fan_out]);
        }
        Ok(())
    }

    /// Looks up the layer weights registered by [`MlpSpec::init`].
    pub fn bind<'t>(&self, prefix: &str, vars: &ParamVars<'t>) -> Result<Vec<(Var<'t>, Var<'t>)>> {
        (0..self.layers())
            .map(|k| {
                Ok((
                    vars.get(&format!("{prefix}.w{k}"))?,
                    vars.get(&format!("{prefix}.b{k}"))?,
                ))
            })
            .collect()
    }

    pub fn forward<'t>(&self, prefix: &str, vars: &ParamVars<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let weights = self.bind(prefix, vars)?;
        mlp_apply(self, &weights, x)
    }
}

pub fn mlp_apply<'t>(spec: &MlpSpec, weights: &[(Var<'t>, Var<'t>)], x: Var<'t>) -> Result<Var<'t>> {
    spec.validate()?;
    if weights.len() != spec.layers() {
        return Err(shape_err(
            "mlp",
            format!("{} layers in spec, {} weight pairs", spec.layers(), weights.len()),
        ));
    }
    let xs = x.shape();
    if xs.len() != 2 || xs[1] != spec.input_width() {
        return Err(shape_err(
            "mlp",
            format!("input {xs:?} vs width {}", spec.input_width()),
        ));
    }
    let mut h = x;
    for (k, (w, b)) in weights.iter().enumerate() {
        let expect = [spec.widths[k], spec.widths[k + 1]];
        if w.shape() != expect || b.shape() != [spec.widths[k + 1]] {
            return Err(shape_err(
                "mlp",
                format!("layer {k}: weight {:?}, bias {:?}, expected {expect:?}", w.shape(), b.shape()),
            ));
        }
        h = h.matmul(w)?.add(b)?;
        if k + 1 < weights.len() && spec.activation == Activation::Silu {
            h = h.silu()?;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, Tensor};

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(vec![3, 3], Activation::Identity).unwrap();
        let tape = Tape::new();
        let w = tape.var(Tensor::eye(3)).unwrap();
        let b = tape.var(Tensor::zeros(&[3])).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1., -2., 3., 0.5, 0., -1.]).unwrap();
        let xv = tape.constant(x.clone()).unwrap();
        let y = mlp_apply(&spec, &[(w, b)], xv).unwrap();
        assert_eq!(y.value().as_ref(), &x);
    }

    #[test]
    fn zero_weights_give_zeros() {
        let spec = MlpSpec::new(vec![2, 4, 3], Activation::Silu).unwrap();
        let tape = Tape::new();
        let layers = vec![
            (tape.var(Tensor::zeros(&[2, 4])).unwrap(), tape.var(Tensor::zeros(&[4])).unwrap()),
            (tape.var(Tensor::zeros(&[4, 3])).unwrap(), tape.var(Tensor::zeros(&[3])).unwrap()),
        ];
        let x = tape.constant(Tensor::new(vec![1, 2], vec![5., -7.]).unwrap()).unwrap();
        let y = mlp_apply(&spec, &layers, x).unwrap();
        assert_eq!(y.value().as_ref(), &Tensor::zeros(&[1, 3]));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let spec = MlpSpec::new(vec![2, 3], Activation::Identity).unwrap();
        let tape = Tape::new();
        let w = tape.var(Tensor::zeros(&[3, 3])).unwrap();
        let b = tape.var(Tensor::zeros(&[3])).unwrap();
        let x = tape.constant(Tensor::zeros(&[1, 2])).unwrap();
        assert!(matches!(mlp_apply(&spec, &[(w, b)], x), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn rejects_empty_widths() {
        assert!(MlpSpec::new(vec![4], Activation::Silu).is_err());
        assert!(MlpSpec::new(vec![4, 0, 1], Activation::Silu).is_err());
    }
}
