//! Special functions, quadrature and root finding shared by the rest of the
//! crate. Everything here is pure and allocation-light.

mod bessel;
mod gamma;
mod quadrature;
mod roots;

pub use bessel::{bessel_k, ln_bessel_k};
pub use gamma::{gamma, ln_gamma};
pub(crate) use gamma::ln_gamma_unchecked;
pub use quadrature::{gauss_legendre, integrate_adaptive, integrate_adaptive_points, AdaptiveSettings, QuadratureRule};
pub use roots::find_root_bracketed;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_helpers() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((q_function(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) + q_function(1.0) - 1.0).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_pdf(0.0) - 0.3989422804014327).abs() < 1e-15);
    }
}
