use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use geomrl_core::audit::{audit_conformation, check_equivariance};
use geomrl_core::geometry::{load_dataset, periodic_radius_graph, radius_graph, AugmentationMode, Conformation, EdgeList};
use geomrl_core::model::Model;
use geomrl_core::training::{
    evaluate, pretrain, split, train, NormalizationStats, PretrainSettings, TrainHistory, TrainSettings,
};
use geomrl_tensor::ParamSet;
use serde::Serialize;
use serde_json::json;

use crate::config::{load_model_config, RunConfig};
use crate::exit::CliError;

/// Contents of `metrics.json`.
#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub step: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub val_mae_energy: Option<f64>,
    pub val_mae_force: Option<f64>,
    pub wall_seconds: f64,
    pub config_hash: String,
    pub version: &'static str,
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

struct Splits {
    train: Vec<Conformation>,
    val: Vec<Conformation>,
    test: Vec<Conformation>,
}

fn load_splits(cfg: &RunConfig) -> Result<Splits, CliError> {
    let data = load_dataset(&cfg.dataset)?;
    let [train, val, test] = split(&data, cfg.split.fractions, cfg.split.seed)?;
    if train.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: training split is empty ({} records)",
            cfg.dataset.display(),
            data.len()
        )));
    }
    Ok(Splits { train, val, test })
}

fn stats_for(cfg: &RunConfig, train: &[Conformation]) -> Result<Option<NormalizationStats>, CliError> {
    if cfg.normalize && cfg.task.pretrain_kind().is_none() {
        Ok(Some(NormalizationStats::from_dataset(train)?))
    } else {
        Ok(None)
    }
}

fn progress(total: usize) -> impl FnMut(usize, f64) {
    let every = (total / 10).max(1);
    move |step, loss| {
        if step % every == 0 || step + 1 == total {
            eprintln!("step {step:>6}  loss {loss:.6}");
        }
    }
}

/// `train` and `pretrain`: fits the model and writes `checkpoint.json` and `metrics.json`.
pub fn cmd_train(path: &Path, require_pretrain: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = RunConfig::load(path)?;
    let kind = cfg.task.pretrain_kind();
    if require_pretrain && kind.is_none() {
        return Err(CliError::Usage("pretrain needs a task of the form `pretrain:<kind>`".into()));
    }
    let splits = load_splits(&cfg)?;
    let mut model = Model::init(cfg.model.clone(), cfg.seed)?;
    let stats = stats_for(&cfg, &splits.train)?;
    let steps = cfg.optimizer.steps;
    let history: TrainHistory = match kind {
        None => {
            let settings = TrainSettings {
                steps,
                batch_size: cfg.optimizer.batch_size,
                schedule: cfg.optimizer.schedule(),
                weights: cfg.loss.weights(cfg.task),
                reduction: cfg.loss.reduction,
                normalize: cfg.normalize,
                seed: cfg.seed,
                fd_step: 1e-4,
            };
            train(&mut model, &splits.train, &settings, stats.as_ref(), progress(steps))?
        }
        Some(kind) => {
            let settings = PretrainSettings {
                kind,
                steps,
                batch_size: cfg.optimizer.batch_size,
                schedule: cfg.optimizer.schedule(),
                seed: cfg.seed,
                sigma: cfg.pretrain.sigma,
                view_sigma: cfg.pretrain.view_sigma,
                tau: cfg.pretrain.tau,
            };
            pretrain(&mut model, &splits.train, &settings, progress(steps))?
        }
    };
    if history.train_loss.iter().any(|l| !l.is_finite()) {
        return Err(CliError::Numeric("training loss became non-finite".into()));
    }
    let val = match (kind, splits.val.is_empty()) {
        (None, false) => Some(evaluate(&model, &splits.val, stats.as_ref())?),
        _ => None,
    };
    create_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("checkpoint.json"), &model.params.to_json())?;
    if let Some(s) = &stats {
        write(
            &cfg.output_dir.join("normalization.json"),
            &serde_json::to_string_pretty(s).expect("stats serialize"),
        )?;
    }
    let report = MetricsReport {
        step: history.step,
        train_loss: history.train_loss,
        val_mae_energy: val.map(|m| m.mae_energy),
        val_mae_force: val.and_then(|m| m.mae_force),
        wall_seconds: start.elapsed().as_secs_f64(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write(
        &cfg.output_dir.join("metrics.json"),
        &serde_json::to_string_pretty(&report).expect("metrics serialize"),
    )?;
    eprintln!("wrote {}", cfg.output_dir.display());
    Ok(())
}

/// `eval`: scores a checkpoint on one split and writes `eval.json`.
pub fn cmd_eval(path: &Path, checkpoint: Option<PathBuf>, which: &str) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    if cfg.task.pretrain_kind().is_some() {
        return Err(CliError::Usage("eval scores energy/force tasks only".into()));
    }
    let splits = load_splits(&cfg)?;
    let ckpt = checkpoint.unwrap_or_else(|| cfg.output_dir.join("checkpoint.json"));
    let params = ParamSet::load(&ckpt).map_err(|e| CliError::Usage(e.to_string()))?;
    let model = Model::with_params(cfg.model.clone(), params)?;
    let stats = stats_for(&cfg, &splits.train)?;
    let confs = match which {
        "train" => &splits.train,
        "val" => &splits.val,
        "test" => &splits.test,
        other => return Err(CliError::Usage(format!("unknown split `{other}`"))),
    };
    let m = evaluate(&model, confs, stats.as_ref())?;
    if !m.mae_energy.is_finite() {
        return Err(CliError::Numeric("non-finite energy error".into()));
    }
    create_dir(&cfg.output_dir)?;
    let out = json!({
        "split": which,
        "count": confs.len(),
        "mae_energy": m.mae_energy,
        "mae_force": m.mae_force,
    });
    write(
        &cfg.output_dir.join("eval.json"),
        &serde_json::to_string_pretty(&out).expect("json"),
    )?;
    eprintln!("{which}: energy MAE {:.6}", m.mae_energy);
    Ok(())
}

/// `check-equiv`: randomized symmetry audit of a freshly initialized model.
pub fn cmd_check_equiv(path: &Path, trials: usize, tolerance: f64, seed: u64, atoms: usize) -> Result<(), CliError> {
    let cfg = load_model_config(path)?;
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let model = Model::init(cfg.clone(), seed)?;
    let conf = audit_conformation(atoms, cfg.cutoff(), seed)?;
    let report = check_equivariance(&model, &conf, cfg.cutoff(), trials, tolerance, seed)?;
    println!("family {}  trials {trials}  tolerance {tolerance:e}", cfg.family());
    print!("{report}");
    let failing: Vec<&str> = report.violations().map(|c| c.name).collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(failing.join(", ")))
    }
}

#[derive(Serialize)]
struct EdgeLine {
    id: String,
    src: Vec<usize>,
    dst: Vec<usize>,
    dist: Vec<f64>,
    shift: Vec<[i32; 3]>,
    /// Expanded mode: original atom of every node index.
    #[serde(skip_serializing_if = "Option::is_none")]
    image_of: Option<Vec<usize>>,
}

impl EdgeLine {
    fn new(conf: &Conformation, edges: EdgeList, image_of: Option<Vec<usize>>) -> Self {
        Self {
            id: conf.id.clone(),
            src: edges.src,
            dst: edges.dst,
            dist: edges.dist,
            shift: edges.shift,
            image_of,
        }
    }
}

/// `build-graph`: one JSON line of edges per input conformation.
pub fn cmd_build_graph(input: &Path, cutoff: f64, periodic: Option<AugmentationMode>, output: &Path) -> Result<(), CliError> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(CliError::Usage(format!("cutoff must be positive, got {cutoff}")));
    }
    let confs = load_dataset(input)?;
    let mut lines = String::new();
    for conf in &confs {
        let line = match (&conf.lattice, periodic) {
            (Some(_), mode) => {
                let g = periodic_radius_graph(conf, cutoff, mode.unwrap_or(AugmentationMode::Gathered))?;
                EdgeLine::new(conf, g.edges, g.nodes.map(|n| n.image_of))
            }
            (None, _) => EdgeLine::new(conf, radius_graph(conf, cutoff)?, None),
        };
        lines.push_str(&serde_json::to_string(&line).expect("edge line serializes"));
        lines.push('\n');
    }
    write(output, &lines)?;
    eprintln!("wrote {} graphs to {}", confs.len(), output.display());
    Ok(())
}
