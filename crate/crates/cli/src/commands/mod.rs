pub mod check_gradients;
pub mod eval;
pub mod fit_lightfield;
pub mod gen_synthetic;
pub mod render;
pub mod toy;
pub mod train;
