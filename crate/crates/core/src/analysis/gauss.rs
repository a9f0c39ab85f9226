//! Normal-distribution helpers for binned models.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

pub fn pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

pub fn ln_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal upper tail.
pub fn q(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

pub fn cdf(x: f64, mean: f64, sigma: f64) -> f64 {
    phi((x - mean) / sigma)
}

/// Probability mass of N(mean, sigma) inside `[lo, hi)`, accurate in
/// both tails.
pub fn interval_mass(lo: f64, hi: f64, mean: f64, sigma: f64) -> f64 {
    let a = (lo - mean) / sigma;
    let b = (hi - mean) / sigma;
    if a > 0.0 {
        q(a) - q(b)
    } else {
        phi(b) - phi(a)
    }
}
