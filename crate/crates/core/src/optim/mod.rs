//! Optimization machinery: Adam, loss terms, Gaussian pyramids, the ray
//! dataset and the light-field initialization trainer.

pub mod adam;
pub mod dataset;
pub mod lightfield;
pub mod losses;
pub mod mlp;
pub mod pyramid;

pub use adam::{load_opt_checkpoint, save_opt_checkpoint, AdamState};
pub use dataset::{build_ray_dataset, RayDataset, RayRecord, MAX_INIT_IMAGE_SIDE};
pub use lightfield::{fit_light_field, FitConfig, InitTrainer, SpecularDecoder};
pub use losses::{
    combined_loss, loss_distortion, loss_l1_color, loss_mono_normal, loss_normal_pred, LossParts,
    LossWeights, G_EPS,
};
pub use mlp::{Activation, Mlp, MlpTrace};
pub use pyramid::{
    build_pyramid, gaussian_blur, kernel_sigma_px, kernel_to_roughness, PyramidLevel,
    PYRAMID_KERNELS,
};
