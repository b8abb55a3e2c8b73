//! Scalar special functions shared by the GP and metric code.

#[allow(unused_imports)] // float methods for no_std builds
use num_traits::Float;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Mills ratio `Φ(-x)/φ(x)` for large positive `x`, by continued fraction.
fn mills_ratio(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=120).rev() {
        tail = x + f64::from(k) / tail;
    }
    1.0 / tail
}

/// `s·Φ(s) + φ(s)`, the expected-improvement profile for unit scale.
///
/// Uses the Mills-ratio form in the far left tail, where the direct
/// formula cancels catastrophically.
pub fn ei_profile(s: f64) -> f64 {
    if s < -6.0 {
        let x = -s;
        let v = norm_pdf(s) * (1.0 - x * mills_ratio(x));
        v.max(0.0)
    } else {
        (s * norm_cdf(s) + norm_pdf(s)).max(0.0)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gaussian log-density `log N(y | mean, var)`.
pub fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}
