//! Shared geometric and image primitives.

pub mod camera;
pub mod image;
pub mod metrics;
pub mod pfm;
pub mod png;
pub mod quat;
pub mod sh;
pub mod stereo;
pub mod vec3;

pub use camera::{generate_rays, Camera, Ray};
pub use image::ImageBuffer;
pub use metrics::{mae_degrees, psnr, ssim, PSNR_CAP_DB};
pub use quat::{quat_rotate, Quaternion};
pub use sh::sh_basis;
pub use stereo::{stereographic_project, stereographic_unproject};
pub use vec3::{Mat3, Vec3};
