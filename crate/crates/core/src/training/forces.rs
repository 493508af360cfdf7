use geomrl_tensor::{ParamVars, Tape, Tensor, Var};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::model::Model;

use super::normalization::NormalizationStats;

/// Per-graph energies with forces `-∂E/∂R`.
#[derive(Debug, Clone)]
pub struct EnergyForces {
    pub energy: Vec<f64>,
    /// `[N, 3]`.
    pub forces: Tensor,
}

/// Evaluates `energy_fn` at `positions` and differentiates the summed energy
/// with respect to them.
pub fn energy_and_forces<F>(positions: &Tensor, energy_fn: F) -> Result<EnergyForces>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let pos = tape.var(positions.clone())?;
    let e = energy_fn(pos)?;
    let energy = e.value().values().to_vec();
    let grads = tape.backward(&e.sum()?)?;
    let forces = grads.wrt(&pos)?.scale(-1.0);
    if !forces.is_finite() {
        return Err(GeomError::Tensor(geomrl_tensor::TensorError::NonFinite {
            op: "force",
        }));
    }
    Ok(EnergyForces { energy, forces })
}

/// Energy as the training target sees it: raw head output, or its
/// normalized image `y·force_mean + energy_mean·N`.
pub fn predict_energy<'t>(
    model: &Model,
    vars: &ParamVars<'t>,
    batch: &GraphBatch,
    pos: Var<'t>,
    stats: Option<&NormalizationStats>,
) -> Result<Var<'t>> {
    let y = model.energy(vars, batch, pos)?;
    match stats {
        None => Ok(y),
        Some(s) => {
            let base = Tensor::vector(batch.atoms_per_graph.iter().map(|&n| s.energy_mean * n as f64).collect());
            Ok(y.scale(s.force_mean)?.add(&pos.tape().constant(base)?)?)
        }
    }
}

/// Energies and forces of `batch` at its stored positions.
pub fn force_from_energy(model: &Model, batch: &GraphBatch, stats: Option<&NormalizationStats>) -> Result<EnergyForces> {
    energy_and_forces(&batch.positions, |pos| {
        let vars = model.params.bind_frozen(pos.tape())?;
        predict_energy(model, &vars, batch, pos, stats)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_toy() {
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0]]);
        let out = energy_and_forces(&x, |p| Ok(p.mul(&p)?.sum()?.reshape(&[1])?)).unwrap();
        assert_eq!(out.energy, vec![14.0]);
        assert_eq!(out.forces.values(), &[-2.0, -4.0, -6.0]);
    }
}
