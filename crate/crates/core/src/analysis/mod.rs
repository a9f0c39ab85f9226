//! Pulse-height analysis: histograms, calibration fits, Poisson mixture
//! prediction, photon-number classification, flux estimation and excess
//! noise.

pub mod classify;
pub mod fit;
pub mod flux;
pub mod gauss;
pub mod histogram;
pub mod mixture;
pub mod modes;
pub mod noise;

pub use classify::Classifier;
pub use fit::{fit_free_gaussians, fit_two_gaussians, fit_two_gaussians_with, Component, TwoGaussianFit};
pub use flux::{estimate_mu_mle, estimate_mu_p0, MleEstimate, P0Estimate};
pub use histogram::{build_histogram, Histogram};
pub use mixture::{goodness, predict_mixture, MixtureModel};
pub use noise::{excess_noise, noise_curve, NoisePoint};
