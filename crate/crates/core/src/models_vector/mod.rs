//! Vector-frame equivariant models: EGNN, PaiNN and per-edge orthonormal
//! frames with scalarization.

mod egnn;
mod frames;
mod painn;

pub use egnn::{egnn_layer, EgnnSpec};
pub use frames::{build_edge_frame, build_edge_frame_or_fallback, scalarize, EdgeFrame, DEGENERATE_TOL};
pub use painn::{painn_layer, PainnSpec, NORM_EPS};
