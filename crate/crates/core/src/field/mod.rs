//! Volumetric scene field and renderer with diffuse + specular
//! decomposition, plus the joint training loop.

pub mod check;
pub mod grid;
pub mod render;
pub mod scene;
pub mod train;

pub use check::{tiny_gradient_check, TinyCheckReport};
pub use grid::Grid3;
pub use render::{
    backward_ray, correct_normal, density_gradient_numeric, ray_bbox_range, reflect, shade_pixel,
    trace_ray, volume_render, GradSink, RayState, RayUpstream, RenderOutput, RenderParams,
};
pub use scene::{FieldConfig, SampleAttributes, SceneField};
pub use train::{
    render_view, render_view_buffers, FieldTrainer, RenderBuffers, TrainConfig, TrainMetrics,
    TrainSet, TrainView,
};
