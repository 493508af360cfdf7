use crate::error::{GeomError, Result};
use crate::so3::Vec3;

use super::conformation::Conformation;
use super::graph::{radius_graph, EdgeList};

/// One-letter residue codes; residue `k` maps to node type `21 + k`.
pub const RESIDUE_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWY";
pub const RESIDUE_TYPE_BASE: u32 = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct ProteinBackbone {
    pub residues: Vec<char>,
    pub n: Vec<Vec3>,
    pub ca: Vec<Vec3>,
    pub c: Vec<Vec3>,
}

impl ProteinBackbone {
    pub fn new(residues: &str, n: Vec<Vec3>, ca: Vec<Vec3>, c: Vec<Vec3>) -> Result<Self> {
        let residues: Vec<char> = residues.chars().collect();
        let len = residues.len();
        if n.len() != len || ca.len() != len || c.len() != len {
            return Err(GeomError::Contract("backbone arrays differ in length".into()));
        }
        if let Some(r) = residues.iter().find(|r| !RESIDUE_ALPHABET.contains(**r)) {
            return Err(GeomError::Contract(format!("unknown residue code `{r}`")));
        }
        if n.iter().chain(&ca).chain(&c).flatten().any(|v| !v.is_finite()) {
            return Err(GeomError::Contract("non-finite backbone coordinate".into()));
        }
        Ok(Self { residues, n, ca, c })
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

pub fn residue_type(code: char) -> Option<u32> {
    RESIDUE_ALPHABET
        .find(code)
        .map(|k| RESIDUE_TYPE_BASE + k as u32)
}

/// Residue-level graph: one node per residue at its Cα atom.
pub fn backbone_graph(protein: &ProteinBackbone, cutoff: f64) -> Result<(Conformation, EdgeList)> {
    if protein.is_empty() {
        return Err(GeomError::Contract("empty backbone".into()));
    }
    let types = protein
        .residues
        .iter()
        .map(|&r| residue_type(r).ok_or_else(|| GeomError::Contract(format!("unknown residue `{r}`"))))
        .collect::<Result<Vec<_>>>()?;
    let conf = Conformation::new("backbone", types, protein.ca.clone())?;
    let edges = radius_graph(&conf, cutoff)?;
    Ok((conf, edges))
}
