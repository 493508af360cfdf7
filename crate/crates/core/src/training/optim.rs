use std::f64::consts::PI;

use geomrl_tensor::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max) || self.total_steps == 0 {
            return Err(GeomError::Contract(format!(
                "schedule needs 0 <= lr_min <= lr_max and T >= 1, got ({}, {}, {})",
                self.lr_min, self.lr_max, self.total_steps
            )));
        }
        Ok(())
    }

    pub fn lr(&self, step: usize) -> f64 {
        let t = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (PI * t).cos())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: usize,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || {
            let mut z = ParamSet::new();
            for (name, t) in params.iter() {
                z.insert(name, Tensor::zeros(t.shape()));
            }
            z
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn moments(&self) -> (&ParamSet, &ParamSet) {
        (&self.m, &self.v)
    }

    /// One update with learning rate `lr`. Parameters without a gradient entry are left alone.
    pub fn update(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.shape() != p.shape() {
                return Err(GeomError::Shape(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m.get_mut(name).ok_or_else(|| GeomError::Contract(format!("no moment for `{name}`")))?;
            let v = self.v.get_mut(name).ok_or_else(|| GeomError::Contract(format!("no moment for `{name}`")))?;
            let (mv, vv, pv) = (m.values_mut(), v.values_mut(), p.values_mut());
            for (k, &gk) in g.values().iter().enumerate() {
                mv[k] = self.beta1 * mv[k] + (1.0 - self.beta1) * gk;
                vv[k] = self.beta2 * vv[k] + (1.0 - self.beta2) * gk * gk;
                let mh = mv[k] / b1t;
                let vh = vv[k] / b2t;
                pv[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Update at the schedule's rate for the current step counter.
    pub fn step_with(&mut self, params: &mut ParamSet, grads: &ParamSet, schedule: &ScheduleSpec) -> Result<()> {
        let lr = schedule.lr(self.step);
        self.update(params, grads, lr)
    }
}

/// Adds newly registered parameters (e.g. a pretraining head) to the moment buffers.
pub fn extend_moments(adam: &mut Adam, params: &ParamSet) {
    for (name, t) in params.iter() {
        if adam.m.get(name).is_none() {
            adam.m.insert(name, Tensor::zeros(t.shape()));
            adam.v.insert(name, Tensor::zeros(t.shape()));
        }
    }
}
