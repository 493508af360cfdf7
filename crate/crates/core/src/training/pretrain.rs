use geomrl_tensor::{Activation, MlpSpec, ParamVars, Tape, Tensor, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::geometry::Conformation;
use crate::model::Model;
use crate::nn::{readout, Pooling, MASK_TOKEN};

use super::optim::{Adam, ScheduleSpec};
use super::trainer::{make_batches, TrainHistory};

pub const NUM_ELEMENTS: usize = 118;
pub const MASK_RATIO: f64 = 0.15;
/// Perturbation scale (Å) of the second contrastive view.
pub const DEFAULT_VIEW_SIGMA: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainKind {
    Type,
    Distance,
    Angle,
    Denoise,
    Contrastive,
}

impl PretrainKind {
    pub const ALL: [PretrainKind; 5] = [Self::Type, Self::Distance, Self::Angle, Self::Denoise, Self::Contrastive];
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
pub struct PretrainSettings {
    pub kind: PretrainKind,
    pub steps: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub schedule: ScheduleSpec,
    pub seed: u64,
    /// Denoising noise scale (Å).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_view_sigma")]
    pub view_sigma: f64,
    /// InfoNCE temperature.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl PretrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.sigma >= 0.0 && self.view_sigma >= 0.0 && self.tau > 0.0) {
            return Err(GeomError::Contract("noise scales must be >= 0 and tau > 0".into()));
        }
        Ok(())
    }
}

fn pair_mlp(d: usize, inputs: usize) -> MlpSpec {
    MlpSpec {
        widths: vec![inputs * d, d, 1],
        activation: Activation::Silu,
    }
}

fn proj_mlp(d: usize) -> MlpSpec {
    MlpSpec {
        widths: vec![d, d, d],
        activation: Activation::Silu,
    }
}

/// Registers the head parameters the objective needs (`pretrain.*`).
pub fn init_pretrain_head(kind: PretrainKind, model: &mut Model, seed: u64) -> Result<()> {
    let d = model.spec.scalar_width()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_4ead);
    let p = &mut model.params;
    match kind {
        PretrainKind::Type => {
            p.insert_glorot("pretrain.type.w", d, NUM_ELEMENTS, &mut rng);
            p.insert_zeros("pretrain.type.b", &[NUM_ELEMENTS]);
        }
        PretrainKind::Distance => pair_mlp(d, 2).init("pretrain.distance", p, &mut rng)?,
        PretrainKind::Angle => pair_mlp(d, 3).init("pretrain.angle", p, &mut rng)?,
        PretrainKind::Denoise => {
            if !model.spec.has_vectors() {
                return Err(GeomError::Contract(format!(
                    "denoising needs a vector output; `{}` has none",
                    model.config.family()
                )));
            }
        }
        PretrainKind::Contrastive => proj_mlp(d).init("pretrain.proj", p, &mut rng)?,
    }
    Ok(())
}

/// Random choices of one objective evaluation, drawn from topology only.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSample {
    pub masked_nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub triplets: Vec<usize>,
    /// `[N, 3]` displacement for denoising or the second contrastive view.
    pub noise: Option<Tensor>,
}

fn subset(rng: &mut impl Rng, total: usize, fraction: f64) -> Vec<usize> {
    let k = ((total as f64 * fraction).ceil() as usize).clamp(1, total);
    let mut ids = sample(rng, total, k).into_vec();
    ids.sort_unstable();
    ids
}

pub fn gaussian_noise(rng: &mut impl Rng, n: usize, sigma: f64) -> Result<Tensor> {
    let dist = Normal::new(0.0, sigma).map_err(|e| GeomError::Contract(e.to_string()))?;
    Ok(Tensor::new(vec![n, 3], (0..3 * n).map(|_| dist.sample(rng)).collect())?)
}

impl PretrainSample {
    pub fn draw(kind: PretrainKind, batch: &GraphBatch, settings: &PretrainSettings, rng: &mut impl Rng) -> Result<Self> {
        let mut s = Self {
            masked_nodes: Vec::new(),
            edges: Vec::new(),
            triplets: Vec::new(),
            noise: None,
        };
        let empty = |what: &str| GeomError::Contract(format!("no {what} to sample"));
        match kind {
            PretrainKind::Type => {
                if batch.num_nodes == 0 {
                    return Err(empty("atoms"));
                }
                s.masked_nodes = subset(rng, batch.num_nodes, MASK_RATIO);
            }
            PretrainKind::Distance => {
                if batch.num_edges() == 0 {
                    return Err(empty("edges"));
                }
                s.edges = subset(rng, batch.num_edges(), 0.5);
            }
            PretrainKind::Angle => {
                if batch.triplets.is_empty() {
                    return Err(empty("triplets"));
                }
                s.triplets = subset(rng, batch.triplets.len(), 0.5);
            }
            PretrainKind::Denoise => s.noise = Some(gaussian_noise(rng, batch.num_nodes, settings.sigma)?),
            PretrainKind::Contrastive => s.noise = Some(gaussian_noise(rng, batch.num_nodes, settings.view_sigma)?),
        }
        Ok(s)
    }
}

/// Mean cross-entropy of `logits [M, K]` against class ids.
pub fn cross_entropy<'t>(logits: &Var<'t>, targets: &[usize]) -> Result<Var<'t>> {
    let shape = logits.shape();
    let [m, k] = shape[..] else {
        return Err(GeomError::Shape(format!("logits must be [M, K], got {shape:?}")));
    };
    if m != targets.len() || m == 0 {
        return Err(GeomError::Shape(format!("{m} logit rows for {} targets", targets.len())));
    }
    let mut onehot = Tensor::zeros(&[m, k]);
    for (r, &t) in targets.iter().enumerate() {
        if t >= k {
            return Err(GeomError::Contract(format!("class {t} outside {k} classes")));
        }
        onehot.values_mut()[r * k + t] = 1.0;
    }
    let tape = logits.tape();
    let lse = log_sum_exp_rows(logits)?;
    let picked = logits.mul(&tape.constant(onehot)?)?.sum_axis(1)?;
    Ok(lse.sub(&picked)?.mean()?)
}

/// Row-wise `log Σ exp`, shifted by the (constant) row maximum.
fn log_sum_exp_rows<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    let v = x.value();
    let m = v.rows();
    let max: Vec<f64> = (0..m)
        .map(|r| v.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shift = x.tape().constant(Tensor::new(vec![m, 1], max.clone())?)?;
    let s = x.sub(&shift)?.exp()?.sum_axis(1)?.log()?;
    Ok(s.add(&x.tape().constant(Tensor::vector(max))?)?)
}

pub fn regression_loss<'t>(pred: &Var<'t>, target: &[f64]) -> Result<Var<'t>> {
    if pred.shape() != [target.len()] || target.is_empty() {
        return Err(GeomError::Shape(format!("{:?} predictions for {} targets", pred.shape(), target.len())));
    }
    let t = pred.tape().constant(Tensor::vector(target.to_vec()))?;
    let r = pred.sub(&t)?;
    Ok(r.mul(&r)?.mean()?)
}

fn normalize_rows<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    let v = x.value();
    let b = v.rows();
    if (0..b).any(|r| v.row(r).iter().all(|&c| c == 0.0)) {
        return Err(GeomError::Contract("zero-norm embedding".into()));
    }
    let n = x.mul(x)?.sum_axis(1)?.reshape(&[b, 1])?.powf(0.5)?;
    Ok(x.div(&n)?)
}

/// InfoNCE with cosine similarity and in-batch negatives.
pub fn info_nce_loss<'t>(anchors: &Var<'t>, positives: &Var<'t>, tau: f64) -> Result<Var<'t>> {
    let shape = anchors.shape();
    let [b, d] = shape[..] else {
        return Err(GeomError::Shape(format!("embeddings must be [B, D], got {shape:?}")));
    };
    if positives.shape() != shape {
        return Err(GeomError::Shape(format!("anchors {shape:?} vs positives {:?}", positives.shape())));
    }
    if b < 2 || !(tau > 0.0) {
        return Err(GeomError::Contract(format!("InfoNCE needs B >= 2 and tau > 0, got B={b}, tau={tau}")));
    }
    let a = normalize_rows(anchors)?.reshape(&[b, 1, d])?;
    let p = normalize_rows(positives)?.reshape(&[1, b, d])?;
    let sim = a.mul(&p)?.sum_axis(2)?.scale(1.0 / tau)?;
    let diag = sim.mul(&anchors.tape().constant(Tensor::eye(b))?)?.sum_axis(1)?;
    Ok(log_sum_exp_rows(&sim)?.sub(&diag)?.mean()?)
}

fn masked_batch(batch: &GraphBatch, masked: &[usize]) -> GraphBatch {
    let mut z = batch.atomic_numbers.to_vec();
    for &i in masked {
        z[i] = MASK_TOKEN;
    }
    GraphBatch {
        atomic_numbers: z.into(),
        ..batch.clone()
    }
}

fn edge_distance(batch: &GraphBatch, e: usize) -> f64 {
    let p = &batch.positions;
    let (s, d) = (batch.src[e], batch.dst[e]);
    let off = batch.shift_offset.row(e);
    (0..3)
        .map(|k| {
            let r = p.row(d)[k] + off[k] - p.row(s)[k];
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

fn edge_rel(batch: &GraphBatch, e: usize) -> [f64; 3] {
    let p = &batch.positions;
    let (s, d) = (batch.src[e], batch.dst[e]);
    let off = batch.shift_offset.row(e);
    std::array::from_fn(|k| p.row(d)[k] + off[k] - p.row(s)[k])
}

/// Angle at the shared node `j` of triplet `k → j → i`.
fn triplet_angle(batch: &GraphBatch, t: usize) -> f64 {
    let a = edge_rel(batch, batch.triplets.edge_kj[t]);
    let b = edge_rel(batch, batch.triplets.edge_ji[t]);
    let dot: f64 = (0..3).map(|k| -a[k] * b[k]).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Graph embeddings `[G, D]` for the contrastive objective.
fn graph_embedding<'t>(model: &Model, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<Var<'t>> {
    let d = model.spec.scalar_width()?;
    let h = model.node_outputs(vars, batch, pos)?.scalars;
    let pooled = readout(&h, batch.node_graph.clone(), batch.num_graphs, Pooling::Mean)?;
    Ok(proj_mlp(d).forward("pretrain.proj", vars, pooled)?)
}

/// Denoising loss: vectors predicted at `R + noise` regress `noise`.
pub fn denoise_loss<'t>(model: &Model, vars: &ParamVars<'t>, batch: &GraphBatch, noise: &Tensor) -> Result<Var<'t>> {
    let tape = vars.get("embed")?.tape();
    let mut noisy = batch.positions.clone();
    noisy.add_assign(noise)?;
    let pos = tape.constant(noisy)?;
    let v = model
        .node_outputs(vars, batch, pos)?
        .vectors
        .ok_or_else(|| GeomError::Contract("denoising needs a vector output".into()))?;
    let r = v.sub(&tape.constant(noise.clone())?)?;
    Ok(r.mul(&r)?.mean()?)
}

/// One objective evaluation on `tape`.
pub fn pretrain_loss<'t>(
    kind: PretrainKind,
    model: &Model,
    vars: &ParamVars<'t>,
    batch: &GraphBatch,
    sample: &PretrainSample,
    settings: &PretrainSettings,
) -> Result<Var<'t>> {
    let tape = vars.get("embed")?.tape();
    let pos = || tape.constant(batch.positions.clone());
    match kind {
        PretrainKind::Type => {
            if sample.masked_nodes.is_empty() {
                return Err(GeomError::Contract("empty mask set".into()));
            }
            let masked = masked_batch(batch, &sample.masked_nodes);
            let h = model.node_outputs(vars, &masked, pos()?)?.scalars;
            let ids: std::rc::Rc<[usize]> = sample.masked_nodes.clone().into();
            let logits = h
                .gather_rows(ids)?
                .matmul(&vars.get("pretrain.type.w")?)?
                .add(&vars.get("pretrain.type.b")?)?;
            let targets = sample
                .masked_nodes
                .iter()
                .map(|&i| match batch.atomic_numbers[i] {
                    z @ 1..=NUM_ELEMENTS => Ok(z - 1),
                    z => Err(GeomError::Contract(format!("atomic number {z} has no type class"))),
                })
                .collect::<Result<Vec<_>>>()?;
            cross_entropy(&logits, &targets)
        }
        PretrainKind::Distance => {
            if sample.edges.is_empty() {
                return Err(GeomError::Contract("empty edge sample".into()));
            }
            let d = model.spec.scalar_width()?;
            let h = model.node_outputs(vars, batch, pos()?)?.scalars;
            let src: std::rc::Rc<[usize]> = sample.edges.iter().map(|&e| batch.src[e]).collect();
            let dst: std::rc::Rc<[usize]> = sample.edges.iter().map(|&e| batch.dst[e]).collect();
            let (hi, hj) = (h.gather_rows(dst)?, h.gather_rows(src)?);
            let feats = Var::concat(&[hi.add(&hj)?, hi.mul(&hj)?], 1)?;
            let pred = pair_mlp(d, 2)
                .forward("pretrain.distance", vars, feats)?
                .reshape(&[sample.edges.len()])?;
            let target: Vec<f64> = sample.edges.iter().map(|&e| edge_distance(batch, e)).collect();
            regression_loss(&pred, &target)
        }
        PretrainKind::Angle => {
            if sample.triplets.is_empty() {
                return Err(GeomError::Contract("empty triplet sample".into()));
            }
            let d = model.spec.scalar_width()?;
            let h = model.node_outputs(vars, batch, pos()?)?.scalars;
            let tr = &batch.triplets;
            let k: std::rc::Rc<[usize]> = sample.triplets.iter().map(|&t| batch.src[tr.edge_kj[t]]).collect();
            let j: std::rc::Rc<[usize]> = sample.triplets.iter().map(|&t| batch.dst[tr.edge_kj[t]]).collect();
            let i: std::rc::Rc<[usize]> = sample.triplets.iter().map(|&t| batch.dst[tr.edge_ji[t]]).collect();
            let (hk, hj, hi) = (h.gather_rows(k)?, h.gather_rows(j)?, h.gather_rows(i)?);
            let feats = Var::concat(&[hk.add(&hi)?, hk.mul(&hi)?, hj], 1)?;
            let pred = pair_mlp(d, 3)
                .forward("pretrain.angle", vars, feats)?
                .reshape(&[sample.triplets.len()])?;
            let target: Vec<f64> = sample.triplets.iter().map(|&t| triplet_angle(batch, t)).collect();
            regression_loss(&pred, &target)
        }
        PretrainKind::Denoise => {
            let noise = sample
                .noise
                .as_ref()
                .ok_or_else(|| GeomError::Contract("denoising sample lacks noise".into()))?;
            denoise_loss(model, vars, batch, noise)
        }
        PretrainKind::Contrastive => {
            let noise = sample
                .noise
                .as_ref()
                .ok_or_else(|| GeomError::Contract("contrastive sample lacks a view".into()))?;
            let mut view = batch.positions.clone();
            view.add_assign(noise)?;
            let a = graph_embedding(model, vars, batch, pos()?)?;
            let p = graph_embedding(model, vars, batch, tape.constant(view)?)?;
            info_nce_loss(&a, &p, settings.tau)
        }
    }
}

/// Mean objective over `batches` with samples drawn from `seed`.
pub fn pretrain_eval(model: &Model, batches: &[GraphBatch], settings: &PretrainSettings, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for b in batches {
        let sample = PretrainSample::draw(settings.kind, b, settings, &mut rng)?;
        let tape = Tape::new();
        let vars = model.params.bind_frozen(&tape)?;
        total += pretrain_loss(settings.kind, model, &vars, b, &sample, settings)?.item()?;
    }
    Ok(total / batches.len() as f64)
}

/// Self-supervised training. Registers the objective's head first.
pub fn pretrain(
    model: &mut Model,
    data: &[Conformation],
    settings: &PretrainSettings,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainHistory> {
    settings.validate()?;
    init_pretrain_head(settings.kind, model, settings.seed)?;
    let batches = make_batches(model, data, settings.batch_size, settings.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut adam = Adam::new(&model.params);
    let mut history = TrainHistory::default();
    for step in 0..settings.steps {
        let batch = &batches[step % batches.len()];
        let sample = PretrainSample::draw(settings.kind, batch, settings, &mut rng)?;
        let tape = Tape::new();
        let vars = model.params.bind(&tape)?;
        let loss = pretrain_loss(settings.kind, model, &vars, batch, &sample, settings)?;
        let grads = vars.gradients(&tape.backward(&loss)?)?;
        let value = loss.item()?;
        adam.step_with(&mut model.params, &grads, &settings.schedule)?;
        history.step.push(step);
        history.train_loss.push(value);
        progress(step, value);
    }
    Ok(history)
}
