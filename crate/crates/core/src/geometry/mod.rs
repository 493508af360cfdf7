//! Conformations, cutoff graphs (molecular, periodic, residue-level) and the
//! JSON Lines dataset format.

mod conformation;
mod graph;
mod periodic;
mod protein;

pub use conformation::{
    load_dataset, parse_record, read_dataset, to_json_line, write_dataset, Conformation,
    MAX_ATOMIC_NUMBER,
};
pub use graph::{build_angle_index, radius_graph, AngleIndex, EdgeList};
pub use periodic::{
    periodic_radius_graph, shift_range, AugmentationMode, ExpandedNodes, PeriodicGraph,
};
pub use protein::{backbone_graph, residue_type, ProteinBackbone, RESIDUE_ALPHABET, RESIDUE_TYPE_BASE};

/// Builds the cutoff graph appropriate to `conf`: periodic in the requested
/// mode when a lattice is present, plain radius graph otherwise.
pub fn cutoff_graph(conf: &Conformation, cutoff: f64, mode: AugmentationMode) -> crate::Result<EdgeList> {
    if conf.lattice.is_some() {
        Ok(periodic_radius_graph(conf, cutoff, mode)?.edges)
    } else {
        radius_graph(conf, cutoff)
    }
}
