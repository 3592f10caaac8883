//! Upper-body 3D pose tracking from 2D joint measurements.
//!
//! Poses are tracked in the image plane as stacked `(u/λ, v/λ, λ)` joint
//! states, with a Gaussian-mixture pose prior folded into a random-walk
//! transition model. Five filters are provided: three particle-filter
//! variants and two mixture-Kalman-filter variants. Estimates are lifted
//! back to 3D through the known camera.

pub mod association;
pub mod bodymodel;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod geometry;
pub mod linalg;
pub mod pipeline;
pub mod trackers;

pub use error::{Error, ErrorKind, Result};
