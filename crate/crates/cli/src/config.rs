use std::path::{Path, PathBuf};

use geomrl_core::model::ModelConfig;
use geomrl_core::training::{LossWeights, PretrainKind, Reduction, ScheduleSpec, DEFAULT_VIEW_SIGMA};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "energy")]
    Energy,
    #[serde(rename = "energy+force")]
    EnergyForce,
    #[serde(rename = "pretrain:type")]
    PretrainType,
    #[serde(rename = "pretrain:distance")]
    PretrainDistance,
    #[serde(rename = "pretrain:angle")]
    PretrainAngle,
    #[serde(rename = "pretrain:denoise")]
    PretrainDenoise,
    #[serde(rename = "pretrain:contrastive")]
    PretrainContrastive,
}

impl Task {
    pub fn pretrain_kind(self) -> Option<PretrainKind> {
        match self {
            Self::Energy | Self::EnergyForce => None,
            Self::PretrainType => Some(PretrainKind::Type),
            Self::PretrainDistance => Some(PretrainKind::Distance),
            Self::PretrainAngle => Some(PretrainKind::Angle),
            Self::PretrainDenoise => Some(PretrainKind::Denoise),
            Self::PretrainContrastive => Some(PretrainKind::Contrastive),
        }
    }
}

fn default_fractions() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fractions: default_fractions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub lr_max: f64,
    #[serde(default)]
    pub lr_min: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl OptimizerConfig {
    pub fn schedule(&self) -> ScheduleSpec {
        ScheduleSpec {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            total_steps: self.steps.max(1),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn mae() -> Reduction {
    Reduction::Mae
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "mae")]
    pub reduction: Reduction,
    #[serde(default = "one")]
    pub energy_weight: f64,
    #[serde(default = "one")]
    pub force_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            reduction: Reduction::Mae,
            energy_weight: 1.0,
            force_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn weights(&self, task: Task) -> LossWeights {
        LossWeights {
            energy: self.energy_weight,
            forces: if task == Task::EnergyForce { self.force_weight } else { 0.0 },
        }
    }
}

fn default_sigma() -> f64 {
    0.1
}

fn default_view_sigma() -> f64 {
    DEFAULT_VIEW_SIGMA
}

fn default_tau() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainOptions {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_view_sigma")]
    pub view_sigma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            view_sigma: default_view_sigma(),
            tau: default_tau(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

/// A training or pretraining run. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub model: ModelConfig,
    pub task: Task,
    #[serde(default)]
    pub split: SplitConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pretrain: PretrainOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

pub const SEED_ENV: &str = "GEOM_SEED";

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses, applies the seed override and checks field contracts.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={s} is not an unsigned integer")))?;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset = resolve(base, &cfg.dataset);
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        let f = self.split.fractions;
        if f.iter().any(|x| *x < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return usage(format!("split fractions {f:?} must be non-negative and sum to 1"));
        }
        if !self.dataset.is_file() {
            return usage(format!("dataset not found: {}", self.dataset.display()));
        }
        self.model.spec().map_err(|e| CliError::Usage(format!("model: {e}")))?;
        self.optimizer
            .schedule()
            .validate()
            .map_err(|e| CliError::Usage(format!("optimizer: {e}")))?;
        if self.optimizer.batch_size == Some(0) {
            return usage("optimizer: batch_size must be positive".into());
        }
        if self.task.pretrain_kind().is_none() {
            self.loss
                .weights(self.task)
                .validate()
                .map_err(|e| CliError::Usage(format!("loss: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted) JSON of the effective config.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

/// A bare model config, or the `model` field of a run config.
pub fn load_model_config(path: &Path) -> Result<ModelConfig, CliError> {
    let text = read(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let model = match value.get("model") {
        Some(m) if value.get("family").is_none() => m.clone(),
        _ => value,
    };
    let cfg: ModelConfig =
        serde_json::from_value(model).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    cfg.spec().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}
