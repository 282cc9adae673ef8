//! Scalar probability primitives shared by every estimator.

pub mod bivariate;
pub mod normal;
pub mod quadrature;
pub mod rng;

pub use bivariate::{bvn_cdf, Correlation};
pub use normal::{inv_mills, log_normal_cdf, normal_cdf, normal_pdf, normal_quantile};
pub use quadrature::GaussHermite;
pub use rng::{cholesky2, draw_bivariate, draw_std_normal, RngStream, StreamRng};
