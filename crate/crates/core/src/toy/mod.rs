//! Analytic toy environments: the probe experiment with its brute-force
//! preconvolution oracle, SH-vs-Gaussian coefficient fitting, and the
//! synthetic glossy-room generator.

pub mod fit;
pub mod lights;
pub mod preconv;
pub mod room;

pub use fit::{
    basis_row, fibonacci_hemisphere, fit_coefficients, fit_targets, gaussians_from_lights,
    render_stereographic, variation_score, EncodingKind, FitReport, TOY_COEFF_COUNT,
};
pub use lights::{probe_track, toy_env_radiance, toy_light_layout, LightShape, ToyLight};
pub use preconv::{preconvolve_oracle, sample_vmf};
pub use room::{
    build_room_dataset, default_room_cameras, generate_synthetic_room, load_room_dataset,
    write_room_dataset, RoomConfig, RoomDataset, RoomView,
};
