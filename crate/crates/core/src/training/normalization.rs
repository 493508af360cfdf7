use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::geometry::Conformation;

/// Affine energy rescaling `ŷ = y·force_mean + energy_mean·N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Mean over conformations of `E / N`.
    pub energy_mean: f64,
    /// Mean absolute force component.
    pub force_mean: f64,
}

impl NormalizationStats {
    pub fn new(energy_mean: f64, force_mean: f64) -> Result<Self> {
        let s = Self {
            energy_mean,
            force_mean,
        };
        s.validate()?;
        Ok(s)
    }

    /// Statistics of a labelled training split; every record needs energy and forces.
    pub fn from_dataset(confs: &[Conformation]) -> Result<Self> {
        if confs.is_empty() {
            return Err(GeomError::Contract("normalization over an empty split".into()));
        }
        let (mut per_atom, mut abs_sum, mut count) = (0.0, 0.0, 0usize);
        for c in confs {
            let (Some(e), Some(f)) = (c.energy, &c.forces) else {
                return Err(GeomError::Contract(format!(
                    "normalization needs energy and forces, `{}` lacks them",
                    c.id
                )));
            };
            per_atom += e / c.len() as f64;
            for row in f {
                abs_sum += row.iter().map(|x| x.abs()).sum::<f64>();
                count += 3;
            }
        }
        Self::new(per_atom / confs.len() as f64, abs_sum / count.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.force_mean > 0.0 && self.force_mean.is_finite() && self.energy_mean.is_finite()) {
            return Err(GeomError::Contract(format!(
                "force mean must be positive and finite, got {}",
                self.force_mean
            )));
        }
        Ok(())
    }

    pub fn apply(&self, y: f64, n_atoms: usize) -> f64 {
        y * self.force_mean + self.energy_mean * n_atoms as f64
    }

    pub fn invert(&self, energy: f64, n_atoms: usize) -> f64 {
        (energy - self.energy_mean * n_atoms as f64) / self.force_mean
    }
}

pub fn apply_normalization(y: f64, stats: &NormalizationStats, n_atoms: usize) -> Result<f64> {
    stats.validate()?;
    Ok(stats.apply(y, n_atoms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        let s = NormalizationStats::new(1.0, 3.0).unwrap();
        assert_eq!(apply_normalization(2.0, &s, 5).unwrap(), 11.0);
        assert_eq!(s.apply(0.0, 5), 5.0);
    }

    #[test]
    fn zero_force_mean_rejected() {
        assert!(NormalizationStats::new(1.0, 0.0).is_err());
        let s = NormalizationStats {
            energy_mean: 1.0,
            force_mean: 0.0,
        };
        assert!(apply_normalization(1.0, &s, 2).is_err());
    }
}
