use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::geometry::Conformation;
use crate::model::{Model, ModelConfig};

use super::normalization::NormalizationStats;
use super::trainer::{evaluate, train, EvalMetrics, TrainSettings};

/// A named train/test pair for the ablation grid.
#[derive(Debug, Clone)]
pub struct AblationTask {
    pub name: String,
    pub train: Vec<Conformation>,
    pub test: Vec<Conformation>,
}

/// Test errors of one (model, task) cell trained with and without normalization
/// from the same initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub family: String,
    pub task: String,
    pub stats: NormalizationStats,
    pub without: EvalMetrics,
    pub with: EvalMetrics,
}

impl AblationRow {
    /// `MAE(force, w/o) - MAE(force, w/)`; positive when normalization helps.
    pub fn force_gap(&self) -> Option<f64> {
        Some(self.without.mae_force? - self.with.mae_force?)
    }

    pub fn energy_gap(&self) -> f64 {
        self.without.mae_energy - self.with.mae_energy
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Gap matrix indexed `[family][task]`, in first-seen order.
    pub fn force_gaps(&self) -> (Vec<String>, Vec<String>, Vec<Vec<Option<f64>>>) {
        let mut families: Vec<String> = Vec::new();
        let mut tasks: Vec<String> = Vec::new();
        for r in &self.rows {
            if !families.contains(&r.family) {
                families.push(r.family.clone());
            }
            if !tasks.contains(&r.task) {
                tasks.push(r.task.clone());
            }
        }
        let mut gaps = vec![vec![None; tasks.len()]; families.len()];
        for r in &self.rows {
            let f = families.iter().position(|x| *x == r.family).unwrap_or_default();
            let t = tasks.iter().position(|x| *x == r.task).unwrap_or_default();
            gaps[f][t] = r.force_gap();
        }
        (families, tasks, gaps)
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (families, tasks, gaps) = self.force_gaps();
        writeln!(f, "force MAE gap (w/o - w/)")?;
        write!(f, "{:<10}", "")?;
        for t in &tasks {
            write!(f, " {t:>12}")?;
        }
        writeln!(f)?;
        for (fam, row) in families.iter().zip(&gaps) {
            write!(f, "{fam:<10}")?;
            for g in row {
                match g {
                    Some(g) => write!(f, " {g:>12.4e}")?,
                    None => write!(f, " {:>12}", "-")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Trains every config on every task twice, once on raw energies and once
/// through `ŷ = y·force_mean + energy_mean·N` with statistics of the task's
/// training split, and scores both on the task's test split.
pub fn normalization_ablation(
    configs: &[ModelConfig],
    tasks: &[AblationTask],
    settings: &TrainSettings,
) -> Result<AblationReport> {
    if configs.is_empty() || tasks.is_empty() {
        return Err(GeomError::Contract("ablation needs at least one model and one task".into()));
    }
    let mut report = AblationReport::default();
    for cfg in configs {
        for task in tasks {
            let stats = NormalizationStats::from_dataset(&task.train)?;
            let run = |stats: Option<&NormalizationStats>| -> Result<EvalMetrics> {
                let mut model = Model::init(cfg.clone(), settings.seed)?;
                train(&mut model, &task.train, settings, stats, |_, _| {})?;
                evaluate(&model, &task.test, stats)
            };
            report.rows.push(AblationRow {
                family: cfg.family().to_string(),
                task: task.name.clone(),
                stats,
                without: run(None)?,
                with: run(Some(&stats))?,
            });
        }
    }
    Ok(report)
}
