pub mod audit;
pub mod batch;
pub mod error;
pub mod geometry;
pub mod model;
pub mod models_invariant;
pub mod models_spherical;
pub mod models_vector;
pub mod nn;
pub mod so3;
pub mod training;

pub use error::{GeomError, Result};
