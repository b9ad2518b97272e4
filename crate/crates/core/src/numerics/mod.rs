//! Special functions, seeded randomness and the finite-difference oracle.

mod gradcheck;
mod rng;
mod special;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use rng::Rng;
pub use special::{
    erf, erfc, ln_erfc, ln_std_normal_cdf, ln_std_normal_pdf, log_cdf_diff, std_normal_cdf, std_normal_pdf,
    std_normal_quantile, CDF_CLAMP, DIRECT_DIFF_FLOOR,
};
