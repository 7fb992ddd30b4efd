//! Steady states, accumulation times and reduced dynamics for diffusion in
//! 2D and 3D domains that contain a few small interior compartments.

pub mod accumulation;
pub mod asymptotic2d;
pub mod asymptotic3d;
pub mod error;
pub mod geometry;
pub mod greens;
pub mod kinetics;
pub mod linalg;
pub mod oracle;
pub mod pdeode;
pub mod quad;
pub mod ripening;
pub mod special;

pub use error::{Error, Result};
