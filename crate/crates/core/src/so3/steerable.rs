use geomrl_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::harmonics::L_MAX;
use super::rotation::Rotation;
use super::wigner::wigner_d;
use crate::error::{GeomError, Result};

/// One block of a layout: `mult` channels of degree `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Irrep {
    pub mult: usize,
    pub l: usize,
}

impl Irrep {
    pub fn width(&self) -> usize {
        self.mult * (2 * self.l + 1)
    }
}

/// Ordered `(multiplicity, degree)` blocks. Within a block the data is
/// channel-major: component `m` of channel `c` sits at `c * (2l+1) + m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct IrrepsLayout {
    blocks: Vec<Irrep>,
}

impl IrrepsLayout {
    pub fn new(blocks: Vec<(usize, usize)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(GeomError::Contract("empty irreps layout".into()));
        }
        let blocks = blocks
            .into_iter()
            .map(|(mult, l)| {
                if mult == 0 {
                    Err(GeomError::Contract("multiplicity must be >= 1".into()))
                } else if l > L_MAX {
                    Err(GeomError::Contract(format!("degree {l} exceeds cap {L_MAX}")))
                } else {
                    Ok(Irrep { mult, l })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn scalars(mult: usize) -> Result<Self> {
        Self::new(vec![(mult, 0)])
    }

    pub fn blocks(&self) -> &[Irrep] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(Irrep::width).sum()
    }

    /// Start column of block `k`.
    pub fn offset(&self, k: usize) -> usize {
        self.blocks[..k].iter().map(Irrep::width).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.blocks.iter().map(|b| b.l).max().unwrap_or(0)
    }

    pub fn block_of_degree(&self, l: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.l == l)
    }
}

impl TryFrom<Vec<(usize, usize)>> for IrrepsLayout {
    type Error = GeomError;
    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IrrepsLayout> for Vec<(usize, usize)> {
    fn from(layout: IrrepsLayout) -> Self {
        layout.blocks.iter().map(|b| (b.mult, b.l)).collect()
    }
}

/// Per-node features organized by layout; `data` is `[N, layout.width()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerableFeature {
    pub layout: IrrepsLayout,
    pub data: Tensor,
}

impl SteerableFeature {
    pub fn new(layout: IrrepsLayout, data: Tensor) -> Result<Self> {
        let s = data.shape();
        if s.len() != 2 || s[1] != layout.width() {
            return Err(GeomError::Contract(format!(
                "feature shape {s:?} does not match layout width {}",
                layout.width()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn norm(&self) -> f64 {
        self.data.values().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Applies `D^l(R)` to every channel of every degree-`l` block.
pub fn rotate_steerable(f: &SteerableFeature, rotation: &Rotation) -> Result<SteerableFeature> {
    let ds = (0..=f.layout.max_degree())
        .map(|l| wigner_d(l, rotation))
        .collect::<Result<Vec<_>>>()?;
    let width = f.layout.width();
    let mut out = f.data.clone();
    let rows = f.data.rows();
    for r in 0..rows {
        let row = &f.data.values()[r * width..(r + 1) * width];
        let dst = &mut out.values_mut()[r * width..(r + 1) * width];
        let mut off = 0;
        for b in f.layout.blocks() {
            let n = 2 * b.l + 1;
            for c in 0..b.mult {
                let s = off + c * n;
                let rotated = ds[b.l].apply(&row[s..s + n]);
                dst[s..s + n].copy_from_slice(&rotated);
            }
            off += b.width();
        }
    }
    SteerableFeature::new(f.layout.clone(), out)
}
