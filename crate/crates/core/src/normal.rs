//! Standard normal density, distribution function and Mills ratio.
//!
//! The distribution function uses the fdlibm complementary error function
//! (via the `libm` port, error below one ulp), which keeps both tails
//! accurate: `Phi(x) = erfc(-x / sqrt 2) / 2`.

use libm::erfc;

/// `1 / sqrt(2 pi)`
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `0.5 * ln(2 pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Mills ratio `Phi(-a) / phi(a)`.
///
/// For `a` beyond the range where both factors are representable the
/// Laplace continued fraction is used instead.
pub fn mills_ratio(a: f64) -> f64 {
    if a < 25.0 {
        return cdf(-a) / pdf(a);
    }
    // R(a) = 1 / (a + 1 / (a + 2 / (a + 3 / (a + ...))))
    let mut tail = a;
    for k in (1..=60).rev() {
        tail = a + k as f64 / tail;
    }
    1.0 / tail
}
