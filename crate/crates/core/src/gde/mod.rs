//! Gaussian directional encoding: local-frame transform, closed-form
//! maximum-along-ray projection, roughness scaling, batch encoding, analytic
//! gradients and a brute-force oracle.

pub mod encoding;
pub mod gaussian;
pub mod grad;
pub mod oracle;

pub use encoding::{encode, encode_call_count, project_max, to_local, EncodingVector, RHO_MIN};
pub use gaussian::{Bbox, GaussianParams, GaussianSet, DEFAULT_GAUSSIAN_COUNT};
pub use grad::{
    encode_grad, finite_difference_report, finite_difference_report_with, project_max_grad,
    EncodingGrads, GaussianGrad, GradCheckReport,
};
pub use oracle::{brute_force_project, gaussian_value};
