//! Invariant message passing over type-0 features: radial and spherical
//! Bessel bases, SchNet-style continuous filters and DimeNet-style two-hop
//! messages.

mod basis;
mod dimenet;
mod schnet;

use std::rc::Rc;

use geomrl_tensor::Var;

pub use basis::{
    bessel_roots, envelope_var, radial_basis, radial_basis_var, spherical_basis_2d,
    spherical_basis_var, spherical_bessel, spherical_bessel_derivative, BasisKind, Envelope,
    RadialBasisSpec,
};
pub use dimenet::{dimenet_layer, DimeNetSpec};
pub use schnet::{schnet_layer, SchNetSpec};

pub use crate::nn::{readout, Pooling};

use crate::batch::{EdgeGeometry, GraphBatch};
use crate::error::Result;

/// Per-edge geometry with its radial expansion and envelope.
#[derive(Debug, Clone)]
pub struct EdgeFeatures<'t> {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub geom: EdgeGeometry<'t>,
    /// `[E, count]`.
    pub rbf: Var<'t>,
    /// `[E, 1]`.
    pub env: Var<'t>,
}

impl<'t> EdgeFeatures<'t> {
    pub fn new(spec: &RadialBasisSpec, batch: &GraphBatch, pos: Var<'t>) -> Result<Self> {
        let geom = EdgeGeometry::new(batch, pos)?;
        Ok(Self {
            src: batch.src.clone(),
            dst: batch.dst.clone(),
            rbf: radial_basis_var(spec, &geom.dist)?,
            env: envelope_var(spec, &geom.dist)?,
            geom,
        })
    }
}
