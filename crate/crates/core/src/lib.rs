//! Laguerre nets: quad meshes of planes, cones and spheres in oriented
//! contact, fitted to positively curved B-spline surfaces.
//!
//! The pipeline runs surface → L-conjugate frame field → aligned quad grid →
//! initial net → sparse Levenberg-Marquardt refinement → tessellation.

pub mod conjugacy;
pub mod error;
pub mod field;
pub mod geom;
pub mod lnet;
pub mod optimize;
pub mod pipeline;
pub mod surface;

pub use error::{Error, Result};
