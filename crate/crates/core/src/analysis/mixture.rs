//! Poisson-weighted Gaussian mixtures over photon number.

use serde::{Deserialize, Serialize};

use super::gauss::{cdf, interval_mass, pdf};
use super::histogram::Histogram;
use crate::calibration::Calibration;
use crate::error::{Error, Result};

/// Where the N-photon peaks sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanRule {
    /// Measured peak table with linear extrapolation.
    Table,
    /// Equal spacing `v0 + N (v1 - v0)`.
    Ladder,
}

/// How the N-photon widths grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthRule {
    /// `sigma_N = sigma1 sqrt(N)` for N >= 1.
    SqrtN,
    /// `sigma_N^2 = sigma0^2 + N (sigma1^2 - sigma0^2)`.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub n_max: usize,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Poisson probabilities `P(0..n_max; mu)` with the tail `P(>= n_max)`
/// folded into the last entry.
pub fn poisson_weights(mu: f64, n_max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n_max + 1);
    let mut p = (-mu).exp();
    let mut acc = 0.0;
    for n in 0..n_max {
        w.push(p);
        acc += p;
        p *= mu / (n + 1) as f64;
    }
    w.push((1.0 - acc).max(0.0));
    w
}

/// Mixture predicted from a calibration with Poisson areas, table means
/// and sqrt(N) widths. No free parameters besides `mu`.
pub fn predict_mixture(mu: f64, calib: &Calibration, n_max: usize) -> MixtureModel {
    predict_mixture_with(mu, calib, n_max, MeanRule::Table, WidthRule::SqrtN)
}

pub fn predict_mixture_with(
    mu: f64,
    calib: &Calibration,
    n_max: usize,
    means: MeanRule,
    widths: WidthRule,
) -> MixtureModel {
    let n_max = n_max.max(1);
    let weights = poisson_weights(mu.max(0.0), n_max);
    let means = (0..=n_max)
        .map(|n| match means {
            MeanRule::Table => calib.peak_mean(n),
            MeanRule::Ladder => calib.ladder_mean(n),
        })
        .collect();
    let sigmas = (0..=n_max)
        .map(|n| match widths {
            WidthRule::SqrtN => calib.sqrt_n_sigma(n),
            WidthRule::Additive => calib.additive_sigma(n),
        })
        .collect();
    MixtureModel {
        n_max,
        means,
        sigmas,
        weights,
    }
}

/// Components below this weight contribute nothing measurable.
const NEGLIGIBLE_WEIGHT: f64 = 1e-16;

impl MixtureModel {
    fn live(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sigmas)
            .filter(|((w, _), _)| **w > NEGLIGIBLE_WEIGHT)
            .map(|((&w, &m), &s)| (w, m, s))
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.live().map(|(w, m, s)| w * pdf(v, m, s)).sum()
    }

    pub fn cdf(&self, v: f64) -> f64 {
        self.live().map(|(w, m, s)| w * cdf(v, m, s)).sum()
    }

    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        self.live().map(|(w, m, s)| w * interval_mass(lo, hi, m, s)).sum()
    }

    /// Probability of each histogram bin under the model.
    pub fn bin_probabilities(&self, hist: &Histogram) -> Vec<f64> {
        (0..hist.n_bins())
            .map(|i| self.interval_mass(hist.edge(i), hist.edge(i + 1)))
            .collect()
    }

    /// Expected counts given the histogram's in-range total.
    pub fn expected_counts(&self, hist: &Histogram) -> Vec<f64> {
        let probs = self.bin_probabilities(hist);
        let in_range: f64 = probs.iter().sum();
        probs
            .iter()
            .map(|p| hist.total as f64 * p / in_range)
            .collect()
    }
}

/// Reduced chi-square of `hist` against `model`, pooling bins rightward
/// until each group expects at least five entries.
pub fn goodness(hist: &Histogram, model: &MixtureModel, free_params: usize) -> Result<f64> {
    if hist.total == 0 {
        return Err(Error::EmptyInput);
    }
    let probs = model.bin_probabilities(hist);
    let in_range: f64 = probs.iter().sum();
    if !(in_range > 1e-12) {
        return Err(Error::NoQualifyingBins);
    }
    let total = hist.total as f64;
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (i, p) in probs.iter().enumerate() {
        obs += hist.counts[i] as f64;
        exp += total * p / in_range;
        if exp >= 5.0 {
            groups.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = groups.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    if groups.len() <= free_params {
        return Err(Error::NoQualifyingBins);
    }
    let chi2: f64 = groups.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    Ok(chi2 / (groups.len() - free_params) as f64)
}
