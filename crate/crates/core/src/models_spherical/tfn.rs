use geomrl_tensor::{Activation, MlpSpec, ParamSet, ParamVars, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GeomError, Result};
use crate::models_invariant::{EdgeFeatures, RadialBasisSpec};
use crate::nn::channel_mix;
use crate::so3::{clebsch_gordan, sh_offset, spherical_harmonics_var, triangle_ok, IrrepsLayout};

/// Highest degree used by features and filters in these layers.
pub const LAYER_L_MAX: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfnLayerSpec {
    pub input: IrrepsLayout,
    pub output: IrrepsLayout,
    pub filter_degrees: Vec<usize>,
    pub radial: RadialBasisSpec,
    pub radial_hidden: usize,
}

/// One coupling `(input block, filter degree) -> output block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfnPath {
    pub input_block: usize,
    pub l_filter: usize,
    pub output_block: usize,
}

impl TfnLayerSpec {
    pub fn validate(&self) -> Result<()> {
        self.radial.validate()?;
        if self.radial_hidden == 0 {
            return Err(GeomError::Contract("radial hidden width must be positive".into()));
        }
        if self.input.max_degree() > LAYER_L_MAX || self.output.max_degree() > LAYER_L_MAX {
            return Err(GeomError::Contract(format!("layer degrees are capped at {LAYER_L_MAX}")));
        }
        if self.filter_degrees.is_empty() || self.filter_degrees.iter().any(|&l| l > LAYER_L_MAX) {
            return Err(GeomError::Contract(format!(
                "filter degrees must be non-empty and <= {LAYER_L_MAX}"
            )));
        }
        for (ob, b) in self.output.blocks().iter().enumerate() {
            if !self.paths().iter().any(|p| p.output_block == ob) {
                return Err(GeomError::Contract(format!(
                    "output block {ob} (degree {}) is unreachable from the input layout",
                    b.l
                )));
            }
        }
        Ok(())
    }

    /// Every triangle-admissible path, input-major.
    pub fn paths(&self) -> Vec<TfnPath> {
        let mut out = Vec::new();
        for (ib, bi) in self.input.blocks().iter().enumerate() {
            for &lf in &self.filter_degrees {
                for (ob, bo) in self.output.blocks().iter().enumerate() {
                    if triangle_ok(bi.l, lf, bo.l) {
                        out.push(TfnPath {
                            input_block: ib,
                            l_filter: lf,
                            output_block: ob,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn radial_mlp(&self, channels: usize) -> MlpSpec {
        MlpSpec {
            widths: vec![self.radial.count, self.radial_hidden, channels],
            activation: Activation::Silu,
        }
    }

    /// Channels entering output block `ob` before self-interaction.
    pub fn gathered_channels(&self, ob: usize) -> usize {
        self.paths()
            .iter()
            .filter(|p| p.output_block == ob)
            .map(|p| self.input.blocks()[p.input_block].mult)
            .sum()
    }

    /// Registers `{prefix}.lin{ib}`, `{prefix}.path{p}.radial.*`, `{prefix}.si{ob}`.
    pub fn init(&self, prefix: &str, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        for (ib, b) in self.input.blocks().iter().enumerate() {
            params.insert_glorot(&format!("{prefix}.lin{ib}"), b.mult, b.mult, rng);
        }
        for (p, path) in self.paths().iter().enumerate() {
            let c = self.input.blocks()[path.input_block].mult;
            self.radial_mlp(c).init(&format!("{prefix}.path{p}.radial"), params, rng)?;
        }
        for (ob, b) in self.output.blocks().iter().enumerate() {
            params.insert_glorot(&format!("{prefix}.si{ob}"), self.gathered_channels(ob), b.mult, rng);
        }
        Ok(())
    }
}

/// Edge features plus real spherical harmonics of the edge directions.
#[derive(Debug, Clone)]
pub struct SphericalEdges<'t> {
    pub feats: EdgeFeatures<'t>,
    /// `[E, (LAYER_L_MAX + 1)^2]`.
    pub sh: Var<'t>,
}

impl<'t> SphericalEdges<'t> {
    pub fn new(radial: &RadialBasisSpec, batch: &GraphBatch, pos: Var<'t>) -> Result<Self> {
        let feats = EdgeFeatures::new(radial, batch, pos)?;
        if feats.geom.dist.value().values().iter().any(|&d| d == 0.0) {
            return Err(GeomError::Contract("zero-length edge vector".into()));
        }
        let sh = spherical_harmonics_var(LAYER_L_MAX, &feats.geom.unit()?)?;
        Ok(Self { feats, sh })
    }

    /// `[E, 2l+1]` block of degree `l`.
    pub fn degree(&self, l: usize) -> Result<Var<'t>> {
        Ok(self.sh.slice(1, sh_offset(l), 2 * l + 1)?)
    }
}

/// `F = W(|r|) · Y^l(r̂)` per channel: `[E, C] x [E, 2l+1] -> [E, C, 2l+1]`.
pub fn tfn_filter<'t>(radial: &Var<'t>, sh_l: &Var<'t>) -> Result<Var<'t>> {
    let (rs, ys) = (radial.shape(), sh_l.shape());
    if rs.len() != 2 || ys.len() != 2 || rs[0] != ys[0] {
        return Err(GeomError::Shape(format!("filter radial {rs:?} vs harmonics {ys:?}")));
    }
    Ok(radial
        .reshape(&[rs[0], rs[1], 1])?
        .mul(&sh_l.reshape(&[ys[0], 1, ys[1]])?)?)
}

/// Block `ib` of `v [N, width]` as `[N, mult, 2l+1]`.
pub fn block<'t>(layout: &IrrepsLayout, v: &Var<'t>, ib: usize) -> Result<Var<'t>> {
    let b = layout.blocks()[ib];
    let n = v.shape()[0];
    Ok(v
        .slice(1, layout.offset(ib), b.width())?
        .reshape(&[n, b.mult, 2 * b.l + 1])?)
}

/// Concatenates `[N, mult, 2l+1]` blocks back into `[N, width]`.
pub fn assemble<'t>(blocks: &[Var<'t>]) -> Result<Var<'t>> {
    let flat = blocks
        .iter()
        .map(|b| {
            let s = b.shape();
            b.reshape(&[s[0], s[1] * s[2]])
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if flat.len() == 1 {
        return Ok(flat[0]);
    }
    Ok(Var::concat(&flat, 1)?)
}

/// Coupled edge messages per output block, `[E, gathered_channels, 2l+1]`,
/// already divided by the square root of the path count.
pub fn edge_messages<'t>(
    spec: &TfnLayerSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    v: &Var<'t>,
    edges: &SphericalEdges<'t>,
) -> Result<Vec<Var<'t>>> {
    let n = v.shape()[0];
    if v.shape() != [n, spec.input.width()] {
        return Err(GeomError::Shape(format!(
            "feature {:?} does not match layout width {}",
            v.shape(),
            spec.input.width()
        )));
    }
    let e = edges.feats.src.len();
    let mixed = (0..spec.input.blocks().len())
        .map(|ib| {
            let x = block(&spec.input, v, ib)?;
            let w = vars.get(&format!("{prefix}.lin{ib}"))?;
            channel_mix(&x, &w)?.gather_rows(edges.feats.src.clone()).map_err(GeomError::from)
        })
        .collect::<Result<Vec<_>>>()?;
    let paths = spec.paths();
    let mut per_output: Vec<Vec<Var<'t>>> = vec![Vec::new(); spec.output.blocks().len()];
    for (p, path) in paths.iter().enumerate() {
        let bi = spec.input.blocks()[path.input_block];
        let bo = spec.output.blocks()[path.output_block];
        let (n1, n2, n3) = (2 * bi.l + 1, 2 * path.l_filter + 1, 2 * bo.l + 1);
        let c = bi.mult;
        let radial = spec
            .radial_mlp(c)
            .forward(&format!("{prefix}.path{p}.radial"), vars, edges.feats.rbf)?
            .mul(&edges.feats.env)?;
        let y = edges.degree(path.l_filter)?;
        let cg = clebsch_gordan(bi.l, path.l_filter, bo.l)?;
        let cg = v.tape().constant(Tensor::new(vec![n1 * n2, n3], cg.coeffs.clone())?)?;
        let outer = mixed[path.input_block]
            .reshape(&[e, c, n1, 1])?
            .mul(&y.reshape(&[e, 1, 1, n2])?)?
            .reshape(&[e * c, n1 * n2])?;
        let coupled = outer.matmul(&cg)?.reshape(&[e, c, n3])?;
        per_output[path.output_block].push(coupled.mul(&radial.reshape(&[e, c, 1])?)?);
    }
    per_output
        .into_iter()
        .map(|parts| {
            let k = parts.len() as f64;
            let joined = if parts.len() == 1 { parts[0] } else { Var::concat(&parts, 1)? };
            Ok(joined.scale(1.0 / k.sqrt())?)
        })
        .collect()
}

/// Scatters (optionally weighted) edge messages onto receivers, mixes channels
/// and adds the residual on output blocks whose `(mult, l)` appears in the input.
pub fn aggregate<'t>(
    spec: &TfnLayerSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    v: &Var<'t>,
    messages: &[Var<'t>],
    edges: &SphericalEdges<'t>,
    weights: Option<&Var<'t>>,
) -> Result<Var<'t>> {
    let n = v.shape()[0];
    let mut used = vec![false; spec.input.blocks().len()];
    let mut out = Vec::with_capacity(messages.len());
    for (ob, msg) in messages.iter().enumerate() {
        let bo = spec.output.blocks()[ob];
        let msg = match weights {
            Some(a) => msg.mul(a)?,
            None => *msg,
        };
        let agg = msg.scatter_sum(edges.feats.dst.clone(), n)?;
        let mut y = channel_mix(&agg, &vars.get(&format!("{prefix}.si{ob}"))?)?;
        let residual = spec
            .input
            .blocks()
            .iter()
            .enumerate()
            .position(|(ib, bi)| !used[ib] && bi.mult == bo.mult && bi.l == bo.l);
        if let Some(ib) = residual {
            used[ib] = true;
            y = y.add(&block(&spec.input, v, ib)?)?;
        }
        out.push(y);
    }
    assemble(&out)
}

/// `v_i <- v_i + Σ_j F(r_ij) ⊗ v_j`, per the layer's path set.
pub fn tfn_conv<'t>(
    spec: &TfnLayerSpec,
    vars: &ParamVars<'t>,
    prefix: &str,
    v: &Var<'t>,
    edges: &SphericalEdges<'t>,
) -> Result<Var<'t>> {
    let msgs = edge_messages(spec, vars, prefix, v, edges)?;
    aggregate(spec, vars, prefix, v, &msgs, edges, None)
}
