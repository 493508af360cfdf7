//! Supervised energy/force training, normalization, optimization and
//! self-supervised pretraining objectives.

mod ablation;
mod data;
mod forces;
mod loss;
mod normalization;
mod optim;
mod pretrain;
mod trainer;

pub use ablation::{normalization_ablation, AblationReport, AblationRow, AblationTask};
pub use data::{morse_dataset, random_cluster, split, template_dataset, Morse};
pub use forces::{energy_and_forces, force_from_energy, predict_energy, EnergyForces};
pub use loss::{energy_force_loss, LossValue, LossWeights, Reduction};
pub use normalization::{apply_normalization, NormalizationStats};
pub use optim::{extend_moments, Adam, ScheduleSpec};
pub use pretrain::{
    cross_entropy, denoise_loss, gaussian_noise, info_nce_loss, init_pretrain_head, pretrain, pretrain_eval,
    pretrain_loss, regression_loss, PretrainKind, PretrainSample, PretrainSettings, DEFAULT_VIEW_SIGMA, MASK_RATIO,
    NUM_ELEMENTS,
};
pub use trainer::{
    dataset_loss, evaluate, loss_and_gradient, make_batches, train, EvalMetrics, StepGradient, TrainHistory,
    TrainSettings,
};
