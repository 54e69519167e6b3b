//! Gaussian directional encoding toolkit.
//!
//! A numerical toolkit for view-dependent appearance modeling built around a
//! learnable 3D Gaussian ray encoding: closed-form ray projection with
//! analytic gradients, a preconvolved light-field initialization stage, a
//! desk-scale volumetric renderer/trainer with diffuse + specular
//! decomposition, and analytic toy scenes for probing the encoding.

pub mod error;
pub mod field;
pub mod gde;
pub mod geom;
pub mod optim;
pub mod rng;
pub mod toy;

pub use error::{Error, Result};
pub use geom::{Camera, ImageBuffer, Mat3, Quaternion, Ray, Vec3};
