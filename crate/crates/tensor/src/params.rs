//! Named parameter storage and the JSON checkpoint format.
//!
//! A checkpoint is one JSON object `{name: {"shape": [...], "values": [...]}}`
//! with keys in sorted order, so identical parameters always serialize to
//! identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.entries.insert(name.to_string(), value);
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, shape `[fan_in, fan_out]`.
    pub fn insert_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        self.insert(
            name,
            Tensor::from_matrix(fan_in, fan_out, values).expect("sized above"),
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Places every parameter on `tape` as a gradient-carrying leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Result<ParamVars<'t>> {
        self.bind_with(tape, true)
    }

    /// Places every parameter on `tape` as a constant.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Result<ParamVars<'t>> {
        self.bind_with(tape, false)
    }

    fn bind_with<'t>(&self, tape: &'t Tape, trainable: bool) -> Result<ParamVars<'t>> {
        let mut vars = BTreeMap::new();
        for (name, value) in &self.entries {
            let v = if trainable {
                tape.var(value.clone())?
            } else {
                tape.constant(value.clone())?
            };
            vars.insert(name.clone(), v);
        }
        Ok(ParamVars { vars })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensors serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: ParamSet =
            serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        for (name, t) in &set.entries {
            let n: usize = t.shape().iter().product();
            if n != t.len() {
                return Err(TensorError::Checkpoint(format!(
                    "`{name}`: shape {:?} holds {n} values, found {}",
                    t.shape(),
                    t.len()
                )));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Parameters bound onto a tape for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct ParamVars<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> ParamVars<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    /// Collects per-parameter gradients, in parameter-name order.
    pub fn gradients(&self, grads: &Gradients) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (name, v) in &self.vars {
            let g = match grads.get(v) {
                Some(g) => g.clone(),
                None => Tensor::zeros(&v.shape()),
            };
            out.insert(name, g);
        }
        Ok(out)
    }
}
