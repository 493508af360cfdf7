use geomrl_tensor::{ParamSet, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::geometry::Conformation;
use crate::model::Model;

use super::forces::{force_from_energy, predict_energy};
use super::loss::{energy_force_loss, LossValue, LossWeights, Reduction};
use super::normalization::NormalizationStats;
use super::optim::{Adam, ScheduleSpec};

fn default_fd_step() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub steps: usize,
    /// Conformations per step; the whole split when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub weights: LossWeights,
    pub reduction: Reduction,
    pub normalize: bool,
    pub seed: u64,
    /// Displacement (Å) of the central difference used for the force-term parameter gradient.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.weights.validate()?;
        if self.batch_size == Some(0) {
            return Err(GeomError::Contract("batch size must be positive".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(GeomError::Contract("finite-difference step must be positive".into()));
        }
        Ok(())
    }
}

/// Loss of one batch and its parameter gradient.
#[derive(Debug, Clone)]
pub struct StepGradient {
    pub loss: LossValue,
    pub grads: ParamSet,
}

fn axpy(acc: &mut ParamSet, a: f64, x: &ParamSet) -> Result<()> {
    for (name, t) in acc.iter_mut() {
        if let Some(g) = x.get(name) {
            t.add_assign(&g.scale(a))?;
        }
    }
    Ok(())
}

/// Parameter gradient of the summed energy with positions held fixed.
fn energy_param_grad(model: &Model, batch: &GraphBatch, positions: Tensor, stats: Option<&NormalizationStats>) -> Result<ParamSet> {
    let tape = Tape::new();
    let vars = model.params.bind(&tape)?;
    let pos = tape.constant(positions)?;
    let e = predict_energy(model, &vars, batch, pos, stats)?;
    let grads = tape.backward(&e.sum()?)?;
    Ok(vars.gradients(&grads)?)
}

/// Energy/force loss and its exact energy-term gradient. The force term's
/// parameter gradient `Σ g·∂F/∂θ` is the directional derivative of `∇_θ E`
/// along `u = g/|g|_∞`, taken by a central difference of step `fd_step`.
pub fn loss_and_gradient(
    model: &Model,
    batch: &GraphBatch,
    stats: Option<&NormalizationStats>,
    weights: LossWeights,
    reduction: Reduction,
    fd_step: f64,
) -> Result<StepGradient> {
    let target_e = batch
        .energy
        .as_ref()
        .ok_or_else(|| GeomError::Contract("training batch lacks energies".into()))?;
    let tape = Tape::new();
    let vars = model.params.bind(&tape)?;
    let pos = tape.var(batch.positions.clone())?;
    let e = predict_energy(model, &vars, batch, pos, stats)?;
    let pred_e = e.value().values().to_vec();
    let use_forces = weights.forces > 0.0;
    let pred_f = if use_forces {
        let g = tape.backward(&e.sum()?)?;
        Some(g.wrt(&pos)?.scale(-1.0))
    } else {
        None
    };
    let loss = energy_force_loss(
        &pred_e,
        pred_f.as_ref(),
        target_e.values(),
        batch.forces.as_ref(),
        weights,
        reduction,
    )?;
    let d_e = tape.constant(Tensor::vector(loss.d_energy.clone()))?;
    let root = e.mul(&d_e)?.sum()?;
    let mut grads = vars.gradients(&tape.backward(&root)?)?;

    if let Some(g) = &loss.d_forces {
        let scale = g.max_abs();
        if scale > 0.0 {
            let u = g.scale(fd_step / scale);
            let mut plus = batch.positions.clone();
            plus.add_assign(&u)?;
            let mut minus = batch.positions.clone();
            minus.add_assign(&u.scale(-1.0))?;
            let gp = energy_param_grad(model, batch, plus, stats)?;
            let gm = energy_param_grad(model, batch, minus, stats)?;
            let c = -scale / (2.0 * fd_step);
            axpy(&mut grads, c, &gp)?;
            axpy(&mut grads, -c, &gm)?;
        }
    }
    if grads.iter().any(|(_, t)| !t.is_finite()) {
        return Err(GeomError::Tensor(geomrl_tensor::TensorError::NonFinite {
            op: "parameter gradient",
        }));
    }
    Ok(StepGradient { loss, grads })
}

/// Seeded shuffle, then fixed chunks of `batch_size`.
pub fn make_batches(model: &Model, confs: &[Conformation], batch_size: Option<usize>, seed: u64) -> Result<Vec<GraphBatch>> {
    if confs.is_empty() {
        return Err(GeomError::Contract("no conformations to batch".into()));
    }
    let mut order: Vec<usize> = (0..confs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = batch_size.unwrap_or(confs.len()).min(confs.len());
    order
        .chunks(size)
        .map(|ids| {
            let chunk: Vec<Conformation> = ids.iter().map(|&i| confs[i].clone()).collect();
            model.batch(&chunk)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub step: Vec<usize>,
    pub train_loss: Vec<f64>,
}

/// Runs `settings.steps` Adam updates. `progress` sees each step's loss.
pub fn train(
    model: &mut Model,
    data: &[Conformation],
    settings: &TrainSettings,
    stats: Option<&NormalizationStats>,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainHistory> {
    settings.validate()?;
    let batches = make_batches(model, data, settings.batch_size, settings.seed)?;
    let mut adam = Adam::new(&model.params);
    let mut history = TrainHistory::default();
    for step in 0..settings.steps {
        let batch = &batches[step % batches.len()];
        let sg = loss_and_gradient(model, batch, stats, settings.weights, settings.reduction, settings.fd_step)?;
        adam.step_with(&mut model.params, &sg.grads, &settings.schedule)?;
        history.step.push(step);
        history.train_loss.push(sg.loss.value);
        progress(step, sg.loss.value);
    }
    Ok(history)
}

/// Mean loss over `batches` at the current parameters.
pub fn dataset_loss(
    model: &Model,
    batches: &[GraphBatch],
    stats: Option<&NormalizationStats>,
    weights: LossWeights,
    reduction: Reduction,
) -> Result<f64> {
    let mut total = 0.0;
    for b in batches {
        let ef = force_from_energy(model, b, stats)?;
        let target = b
            .energy
            .as_ref()
            .ok_or_else(|| GeomError::Contract("evaluation batch lacks energies".into()))?;
        let l = energy_force_loss(&ef.energy, Some(&ef.forces), target.values(), b.forces.as_ref(), weights, reduction)?;
        total += l.value;
    }
    Ok(total / batches.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mae_energy: f64,
    /// Absent when the split has no force labels.
    pub mae_force: Option<f64>,
}

pub fn evaluate(model: &Model, confs: &[Conformation], stats: Option<&NormalizationStats>) -> Result<EvalMetrics> {
    if confs.is_empty() {
        return Err(GeomError::Contract("empty evaluation split".into()));
    }
    let (mut e_abs, mut e_n, mut f_abs, mut f_n) = (0.0, 0usize, 0.0, 0usize);
    let mut all_forces = true;
    for chunk in confs.chunks(64) {
        let batch = model.batch(chunk)?;
        let ef = force_from_energy(model, &batch, stats)?;
        let target = batch
            .energy
            .as_ref()
            .ok_or_else(|| GeomError::Contract("evaluation split lacks energies".into()))?;
        for (p, t) in ef.energy.iter().zip(target.values()) {
            e_abs += (p - t).abs();
            e_n += 1;
        }
        match &batch.forces {
            Some(tf) => {
                for (p, t) in ef.forces.values().iter().zip(tf.values()) {
                    f_abs += (p - t).abs();
                    f_n += 1;
                }
            }
            None => all_forces = false,
        }
    }
    Ok(EvalMetrics {
        mae_energy: e_abs / e_n as f64,
        mae_force: (all_forces && f_n > 0).then(|| f_abs / f_n as f64),
    })
}
