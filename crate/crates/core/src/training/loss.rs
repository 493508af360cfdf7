use geomrl_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mae,
    Mse,
}

impl Reduction {
    fn value(self, r: f64) -> f64 {
        match self {
            Self::Mae => r.abs(),
            Self::Mse => r * r,
        }
    }

    fn derivative(self, r: f64) -> f64 {
        match self {
            Self::Mae => r.signum() * (r != 0.0) as u8 as f64,
            Self::Mse => 2.0 * r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub energy: f64,
    pub forces: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy >= 0.0 && self.forces >= 0.0) || self.energy + self.forces == 0.0 {
            return Err(GeomError::Contract(format!(
                "loss weights must be non-negative and not both zero, got ({}, {})",
                self.energy, self.forces
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            energy: 1.0,
            forces: 1.0,
        }
    }
}

/// Loss value with its derivatives with respect to the predictions.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub energy_term: f64,
    pub force_term: f64,
    /// `∂L/∂E_g`.
    pub d_energy: Vec<f64>,
    /// `∂L/∂F`, `[N, 3]`; absent when the force term is off.
    pub d_forces: Option<Tensor>,
}

/// `ρ_E·mean_g L(E) + ρ_F·mean_components L(F)`.
pub fn energy_force_loss(
    pred_energy: &[f64],
    pred_forces: Option<&Tensor>,
    target_energy: &[f64],
    target_forces: Option<&Tensor>,
    weights: LossWeights,
    reduction: Reduction,
) -> Result<LossValue> {
    weights.validate()?;
    if pred_energy.len() != target_energy.len() || pred_energy.is_empty() {
        return Err(GeomError::Shape(format!(
            "{} energy predictions for {} targets",
            pred_energy.len(),
            target_energy.len()
        )));
    }
    let g = pred_energy.len() as f64;
    let mut energy_term = 0.0;
    let mut d_energy = Vec::with_capacity(pred_energy.len());
    for (p, t) in pred_energy.iter().zip(target_energy) {
        energy_term += reduction.value(p - t) / g;
        d_energy.push(weights.energy * reduction.derivative(p - t) / g);
    }
    let (mut force_term, mut d_forces) = (0.0, None);
    if weights.forces > 0.0 {
        let (Some(p), Some(t)) = (pred_forces, target_forces) else {
            return Err(GeomError::Contract("force loss needs predicted and target forces".into()));
        };
        if p.shape() != t.shape() {
            return Err(GeomError::Shape(format!("forces {:?} vs targets {:?}", p.shape(), t.shape())));
        }
        let m = p.len().max(1) as f64;
        let mut d = Vec::with_capacity(p.len());
        for (a, b) in p.values().iter().zip(t.values()) {
            force_term += reduction.value(a - b) / m;
            d.push(weights.forces * reduction.derivative(a - b) / m);
        }
        d_forces = Some(Tensor::new(p.shape().to_vec(), d)?);
    }
    Ok(LossValue {
        value: weights.energy * energy_term + weights.forces * force_term,
        energy_term,
        force_term,
        d_energy,
        d_forces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let f = Tensor::zeros(&[2, 3]);
        let t = Tensor::full(&[2, 3], 2.0);
        let l = energy_force_loss(&[1.0], Some(&f), &[0.0], Some(&t), LossWeights::default(), Reduction::Mae).unwrap();
        assert_eq!(l.value, 3.0);
    }

    #[test]
    fn perfect_and_energy_only() {
        let f = Tensor::full(&[1, 3], 0.5);
        let l = energy_force_loss(&[2.0], Some(&f), &[2.0], Some(&f), LossWeights::default(), Reduction::Mse).unwrap();
        assert_eq!(l.value, 0.0);
        let w = LossWeights {
            energy: 1.0,
            forces: 0.0,
        };
        let l = energy_force_loss(&[3.0, 1.0], None, &[1.0, 1.0], None, w, Reduction::Mse).unwrap();
        assert_eq!(l.value, 2.0);
        assert!(l.d_forces.is_none());
    }

    #[test]
    fn rejects_bad_weights_and_shapes() {
        let w = LossWeights {
            energy: 0.0,
            forces: 0.0,
        };
        assert!(energy_force_loss(&[1.0], None, &[1.0], None, w, Reduction::Mae).is_err());
        assert!(energy_force_loss(&[1.0], None, &[1.0, 2.0], None, LossWeights::default(), Reduction::Mae).is_err());
    }
}
