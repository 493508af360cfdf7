//! Family-dispatching model wrapper with a shared energy head.

use geomrl_tensor::{ParamSet, ParamVars, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::models_invariant::{BasisKind, DimeNetSpec, Envelope, RadialBasisSpec, SchNetSpec};
use crate::models_spherical::{SphericalLayer, SphericalSpec};
use crate::models_vector::{EgnnSpec, PainnSpec};
use crate::nn::{readout, Pooling};
use crate::so3::IrrepsLayout;

fn default_envelope() -> Envelope {
    Envelope::Cosine
}

/// The `basis` object of a model config; the cutoff comes from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    pub count: usize,
    #[serde(default = "default_envelope")]
    pub envelope: Envelope,
}

impl BasisConfig {
    pub fn with_cutoff(&self, cutoff: f64) -> Result<RadialBasisSpec> {
        RadialBasisSpec::new(self.kind, self.count, cutoff, self.envelope)
    }
}

fn default_gaussian() -> BasisConfig {
    BasisConfig {
        kind: BasisKind::Gaussian,
        count: 16,
        envelope: Envelope::Cosine,
    }
}

fn default_bessel() -> BasisConfig {
    BasisConfig {
        kind: BasisKind::Bessel,
        count: 8,
        envelope: Envelope::Cosine,
    }
}

fn default_l_max() -> usize {
    2
}

fn default_n_max() -> usize {
    4
}

fn default_radial_hidden() -> usize {
    16
}

fn default_filter_degrees() -> Vec<usize> {
    vec![0, 1, 2]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantConfig {
    pub hidden: usize,
    pub layers: usize,
    pub cutoff: f64,
    #[serde(default = "default_gaussian")]
    pub basis: BasisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimeNetConfig {
    pub hidden: usize,
    pub layers: usize,
    pub cutoff: f64,
    #[serde(default = "default_bessel")]
    pub basis: BasisConfig,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphericalConfig {
    pub layout: IrrepsLayout,
    pub layers: usize,
    pub cutoff: f64,
    #[serde(default = "default_gaussian")]
    pub basis: BasisConfig,
    #[serde(default = "default_radial_hidden")]
    pub radial_hidden: usize,
    #[serde(default = "default_filter_degrees")]
    pub filter_degrees: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgnnConfig {
    pub hidden: usize,
    pub layers: usize,
    pub cutoff: f64,
    #[serde(default = "default_true")]
    pub update_coords: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PainnConfig {
    pub hidden: usize,
    pub layers: usize,
    pub cutoff: f64,
    #[serde(default = "default_bessel")]
    pub basis: BasisConfig,
}

/// JSON model description, tagged by `"family"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelConfig {
    Schnet(InvariantConfig),
    Dimenet(DimeNetConfig),
    Tfn(SphericalConfig),
    Se3attn(SphericalConfig),
    Egnn(EgnnConfig),
    Painn(PainnConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Scalars invariant under rotations, translations and reflections.
    E3,
    /// Scalars invariant under proper rotations and translations only.
    Se3,
}

/// Resolved architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    SchNet(SchNetSpec),
    DimeNet(DimeNetSpec),
    Spherical(SphericalSpec, SphericalLayer),
    Egnn(EgnnSpec),
    Painn(PainnSpec),
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GeomError::Contract(format!("model config: {e}")))
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Schnet(_) => "schnet",
            Self::Dimenet(_) => "dimenet",
            Self::Tfn(_) => "tfn",
            Self::Se3attn(_) => "se3attn",
            Self::Egnn(_) => "egnn",
            Self::Painn(_) => "painn",
        }
    }

    pub fn cutoff(&self) -> f64 {
        match self {
            Self::Schnet(c) => c.cutoff,
            Self::Dimenet(c) => c.cutoff,
            Self::Tfn(c) | Self::Se3attn(c) => c.cutoff,
            Self::Egnn(c) => c.cutoff,
            Self::Painn(c) => c.cutoff,
        }
    }

    pub fn symmetry(&self) -> Symmetry {
        match self {
            Self::Tfn(_) | Self::Se3attn(_) => Symmetry::Se3,
            _ => Symmetry::E3,
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let spec = match self {
            Self::Schnet(c) => ModelSpec::SchNet(SchNetSpec {
                hidden: c.hidden,
                layers: c.layers,
                radial: c.basis.with_cutoff(c.cutoff)?,
            }),
            Self::Dimenet(c) => ModelSpec::DimeNet(DimeNetSpec {
                hidden: c.hidden,
                blocks: c.layers,
                l_max: c.l_max,
                n_max: c.n_max,
                radial: c.basis.with_cutoff(c.cutoff)?,
            }),
            Self::Tfn(c) | Self::Se3attn(c) => {
                let kind = if matches!(self, Self::Tfn(_)) {
                    SphericalLayer::Convolution
                } else {
                    SphericalLayer::Attention
                };
                ModelSpec::Spherical(
                    SphericalSpec {
                        layout: c.layout.clone(),
                        layers: c.layers,
                        radial: c.basis.with_cutoff(c.cutoff)?,
                        radial_hidden: c.radial_hidden,
                        filter_degrees: c.filter_degrees.clone(),
                    },
                    kind,
                )
            }
            Self::Egnn(c) => ModelSpec::Egnn(EgnnSpec {
                hidden: c.hidden,
                layers: c.layers,
                update_coords: c.update_coords,
            }),
            Self::Painn(c) => {
                if c.basis.kind != BasisKind::Bessel {
                    return Err(GeomError::Contract("painn filters use the bessel basis".into()));
                }
                ModelSpec::Painn(PainnSpec {
                    features: c.hidden,
                    layers: c.layers,
                    radial: c.basis.with_cutoff(c.cutoff)?,
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::SchNet(s) => s.validate(),
            Self::DimeNet(s) => s.validate(),
            Self::Spherical(s, _) => s.validate(),
            Self::Egnn(s) => s.validate(),
            Self::Painn(s) => s.validate(),
        }
    }

    /// Width of the invariant node representation.
    pub fn scalar_width(&self) -> Result<usize> {
        match self {
            Self::SchNet(s) => Ok(s.hidden),
            Self::DimeNet(s) => Ok(s.hidden),
            Self::Spherical(s, _) => s.scalar_width(),
            Self::Egnn(s) => Ok(s.hidden),
            Self::Painn(s) => Ok(s.features),
        }
    }

    pub fn has_vectors(&self) -> bool {
        match self {
            Self::SchNet(_) | Self::DimeNet(_) => false,
            Self::Spherical(s, _) => s.layout.block_of_degree(1).is_some(),
            Self::Egnn(s) => s.update_coords,
            Self::Painn(_) => true,
        }
    }

    pub fn init_backbone(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) -> Result<()> {
        match self {
            Self::SchNet(s) => s.init(params, rng),
            Self::DimeNet(s) => s.init(params, rng),
            Self::Spherical(s, kind) => s.init(*kind, params, rng),
            Self::Egnn(s) => s.init(params, rng),
            Self::Painn(s) => s.init(params, rng),
        }
    }

    pub fn node_outputs<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<NodeOutputs<'t>> {
        Ok(match self {
            Self::SchNet(s) => NodeOutputs {
                scalars: s.node_features(vars, batch, pos)?,
                vectors: None,
            },
            Self::DimeNet(s) => NodeOutputs {
                scalars: s.node_features(vars, batch, pos)?,
                vectors: None,
            },
            Self::Spherical(s, kind) => {
                let out = s.forward(*kind, vars, batch, pos)?;
                NodeOutputs {
                    scalars: out.scalars,
                    vectors: out.vectors,
                }
            }
            Self::Egnn(s) => {
                let (h, x) = s.forward(vars, batch, pos)?;
                NodeOutputs {
                    scalars: h,
                    vectors: s.update_coords.then(|| x.sub(&pos)).transpose()?,
                }
            }
            Self::Painn(s) => {
                let (h, v) = s.forward(vars, batch, pos)?;
                NodeOutputs {
                    scalars: h,
                    vectors: Some(v),
                }
            }
        })
    }
}

/// Per-node model outputs.
pub struct NodeOutputs<'t> {
    /// Invariant features `[N, D]`.
    pub scalars: Var<'t>,
    /// Equivariant Cartesian vectors `[N, 3]` (EGNN: coordinate displacement).
    pub vectors: Option<Var<'t>>,
}

/// Parameter names of the energy head.
pub const HEAD_PARAMS: [&str; 4] = ["head.w1", "head.b1", "head.w2", "head.b2"];

/// A configured architecture plus its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub spec: ModelSpec,
    pub params: ParamSet,
}

impl Model {
    /// Seeded initialization; identical seeds give identical parameters.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let spec = config.spec()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        spec.init_backbone(&mut params, &mut rng)?;
        let d = spec.scalar_width()?;
        params.insert_glorot("head.w1", d, d, &mut rng);
        params.insert_zeros("head.b1", &[d]);
        params.insert_glorot("head.w2", d, 1, &mut rng);
        params.insert_zeros("head.b2", &[1]);
        Ok(Self { config, spec, params })
    }

    pub fn with_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let spec = config.spec()?;
        let reference = Self::init(config.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(GeomError::Contract(format!(
                        "checkpoint `{name}` has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(GeomError::Contract(format!("checkpoint lacks `{name}`"))),
            }
        }
        Ok(Self { config, spec, params })
    }

    pub fn cutoff(&self) -> f64 {
        self.config.cutoff()
    }

    pub fn batch(&self, confs: &[crate::geometry::Conformation]) -> Result<GraphBatch> {
        GraphBatch::new(confs, self.cutoff())
    }

    pub fn node_outputs<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<NodeOutputs<'t>> {
        self.spec.node_outputs(vars, batch, pos)
    }

    /// `silu(h W1 + b1)` summed per graph, then `w2`, `b2`: `[G]`.
    pub fn energy_head<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, h: &Var<'t>) -> Result<Var<'t>> {
        let phi = h.matmul(&vars.get("head.w1")?)?.add(&vars.get("head.b1")?)?.silu()?;
        let pooled = readout(&phi, batch.node_graph.clone(), batch.num_graphs, Pooling::Sum)?;
        Ok(pooled
            .matmul(&vars.get("head.w2")?)?
            .add(&vars.get("head.b2")?)?
            .reshape(&[batch.num_graphs])?)
    }

    /// Raw (unnormalized) per-graph energy `[G]`.
    pub fn energy<'t>(&self, vars: &ParamVars<'t>, batch: &GraphBatch, pos: Var<'t>) -> Result<Var<'t>> {
        let out = self.node_outputs(vars, batch, pos)?;
        self.energy_head(vars, batch, &out.scalars)
    }
}
