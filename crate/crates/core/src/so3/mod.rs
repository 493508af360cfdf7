//! SO(3) machinery: rotations, real spherical harmonics, Wigner-D matrices,
//! Clebsch–Gordan couplings and steerable features.

mod clebsch;
mod harmonics;
mod rotation;
mod steerable;
mod wigner;

pub use clebsch::{clebsch_gordan, triangle_ok, CgTensor};
pub use harmonics::{
    real_spherical_harmonics, sh_flat, sh_offset, spherical_harmonic, spherical_harmonics_var, Dual3,
    Field, L_MAX,
};
pub use rotation::{
    add, cross, det, dot, mat_mul, mat_vec, norm, random_rotation, scale, sub, transpose, Mat3,
    Rotation, Vec3,
};
pub use steerable::{rotate_steerable, Irrep, IrrepsLayout, SteerableFeature};
pub use wigner::{wigner_d, WignerD};
