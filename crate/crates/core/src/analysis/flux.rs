//! Mean detected photon number from a pulse-height histogram.

use serde::{Deserialize, Serialize};

use super::classify::Classifier;
use super::gauss::{cdf, interval_mass};
use super::histogram::Histogram;
use super::mixture::{goodness, poisson_weights, predict_mixture};
use crate::calibration::Calibration;
use crate::error::{Error, Result};

/// Components used when no explicit photon-number cutoff is given.
pub const DEFAULT_N_MAX: usize = 40;
/// Upper end of the flux search interval.
pub const MU_SEARCH_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P0Estimate {
    /// Flux with 0/1 boundary leakage accounted for.
    pub mu_hat: f64,
    /// Plain `-ln(f0)`.
    pub mu_uncorrected: f64,
    /// Observed fraction classified as 0 photons.
    pub f0: f64,
    pub stderr: f64,
}

/// Fraction classified 0 that a flux `mu` produces when the class-0
/// region ends at `boundary`.
fn zero_class_probability(calib: &Calibration, boundary: f64, mu: f64, n_max: usize) -> f64 {
    poisson_weights(mu, n_max)
        .iter()
        .enumerate()
        .map(|(n, w)| w * cdf(boundary, calib.peak_mean(n), calib.sqrt_n_sigma(n)))
        .sum()
}

fn invert_p0(calib: &Calibration, boundary: f64, f0: f64, entries: f64) -> Result<P0Estimate> {
    if f0 <= 0.0 {
        return Err(Error::FluxTooHigh);
    }
    let n_max = DEFAULT_N_MAX;
    let f = |mu: f64| zero_class_probability(calib, boundary, mu, n_max);
    let uncorrected = -f0.ln();
    let mu_hat = if f0 >= f(0.0) {
        0.0
    } else if f0 <= f(MU_SEARCH_MAX) {
        return Err(Error::FluxTooHigh);
    } else {
        let (mut lo, mut hi) = (0.0, MU_SEARCH_MAX);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > f0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let h = 1e-4;
    let slope = (f(mu_hat + h) - f((mu_hat - h).max(0.0))) / (mu_hat + h - (mu_hat - h).max(0.0));
    let stderr = (f0 * (1.0 - f0) / entries).sqrt() / slope.abs();
    Ok(P0Estimate {
        mu_hat,
        mu_uncorrected: uncorrected.max(0.0),
        f0,
        stderr,
    })
}

/// `mu = -ln f0` from the fraction of histogram entries classified 0,
/// corrected for leakage across the 0/1 boundary. Bins are classified by
/// their centers; under- and overflow count as class 0 and class > 0.
pub fn estimate_mu_p0(hist: &Histogram, calib: &Calibration) -> Result<P0Estimate> {
    let entries = hist.entries();
    if entries == 0 {
        return Err(Error::EmptyInput);
    }
    let b0 = Classifier::new(calib, DEFAULT_N_MAX).boundaries[0];
    let zero_bins = hist.centers().take_while(|&c| c <= b0).count();
    let zero = hist.underflow + hist.counts[..zero_bins].iter().sum::<u64>();
    let f0 = zero as f64 / entries as f64;
    invert_p0(calib, hist.edge(zero_bins), f0, entries as f64)
}

/// Same estimator on unbinned peak voltages.
pub fn estimate_mu_p0_from_peaks(peaks: &[f64], calib: &Calibration) -> Result<P0Estimate> {
    if peaks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let b0 = Classifier::new(calib, DEFAULT_N_MAX).boundaries[0];
    let zero = peaks.iter().filter(|&&v| v <= b0).count();
    invert_p0(calib, b0, zero as f64 / peaks.len() as f64, peaks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub mu_hat: f64,
    pub reduced_chi2: f64,
    pub stderr: f64,
}

/// Binned log-likelihood of the predicted mixture as a function of `mu`,
/// conditional on the histogram range.
struct BinnedLikelihood<'a> {
    hist: &'a Histogram,
    /// masses[n][i]: probability of component n in bin i
    masses: Vec<Vec<f64>>,
    n_max: usize,
}

impl<'a> BinnedLikelihood<'a> {
    fn new(hist: &'a Histogram, calib: &Calibration, n_max: usize) -> Self {
        let masses = (0..=n_max)
            .map(|n| {
                let (m, s) = (calib.peak_mean(n), calib.sqrt_n_sigma(n));
                (0..hist.n_bins())
                    .map(|i| interval_mass(hist.edge(i), hist.edge(i + 1), m, s))
                    .collect()
            })
            .collect();
        Self { hist, masses, n_max }
    }

    fn log_likelihood(&self, mu: f64) -> f64 {
        let w = poisson_weights(mu, self.n_max);
        let mut probs = vec![0.0; self.hist.n_bins()];
        for (wn, row) in w.iter().zip(&self.masses) {
            if *wn < 1e-300 {
                continue;
            }
            for (p, m) in probs.iter_mut().zip(row) {
                *p += wn * m;
            }
        }
        let in_range: f64 = probs.iter().sum();
        self.hist
            .counts
            .iter()
            .zip(&probs)
            .filter(|(&n, _)| n > 0)
            .map(|(&n, &p)| n as f64 * (p.max(1e-300) / in_range).ln())
            .sum()
    }
}

/// Maximum-likelihood flux: a 0.05-step grid over `[0, 20]` followed by
/// golden-section refinement to 1e-4.
pub fn estimate_mu_mle(hist: &Histogram, calib: &Calibration, n_max: usize) -> Result<MleEstimate> {
    if hist.total == 0 {
        return Err(Error::EmptyInput);
    }
    let like = BinnedLikelihood::new(hist, calib, n_max);
    let ll = |mu: f64| like.log_likelihood(mu);

    let step = 0.05;
    let n_grid = (MU_SEARCH_MAX / step).round() as usize;
    let (best, _) = (0..=n_grid)
        .map(|k| (k, ll(k as f64 * step)))
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let mut a = (best as f64 - 1.0).max(0.0) * step;
    let mut b = ((best + 1) as f64 * step).min(MU_SEARCH_MAX);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > 1e-4 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ll(d);
        }
    }
    let mut mu_hat = 0.5 * (a + b);
    if ll(0.0) >= ll(mu_hat) {
        mu_hat = 0.0;
    }

    let h = 1e-3;
    let curvature = if mu_hat > h {
        (ll(mu_hat + h) - 2.0 * ll(mu_hat) + ll(mu_hat - h)) / (h * h)
    } else {
        (ll(mu_hat + 2.0 * h) - 2.0 * ll(mu_hat + h) + ll(mu_hat)) / (h * h)
    };
    let stderr = if curvature < 0.0 {
        (-1.0 / curvature).sqrt()
    } else {
        f64::NAN
    };
    let reduced_chi2 = goodness(hist, &predict_mixture(mu_hat, calib, n_max), 1)?;
    Ok(MleEstimate {
        mu_hat,
        reduced_chi2,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram_from_model(mu: f64, total: f64) -> Histogram {
        let cal = Calibration::reference();
        let mut h = Histogram::empty(3.0, 0.05, 440);
        let m = predict_mixture(mu, &cal, DEFAULT_N_MAX);
        let probs = m.bin_probabilities(&h);
        h.counts = probs.iter().map(|p| (p * total).round() as u64).collect();
        h.underflow = (m.cdf(h.lo) * total).round() as u64;
        h.overflow = ((1.0 - m.cdf(h.hi())) * total).round() as u64;
        h.total = h.counts.iter().sum();
        h
    }

    #[test]
    fn inverse_identity_without_leakage() {
        // A calibration with tiny widths has no boundary leakage.
        let cal = Calibration::from_two_peaks(1.0, 1e-3, 2.0, 2e-3);
        let f0 = (-1.0f64).exp();
        let est = invert_p0(&cal, 1.5, f0, 1e6).unwrap();
        assert!((est.mu_hat - 1.0).abs() < 1e-8);
        assert!((est.mu_uncorrected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_class_gives_zero_flux() {
        let est = estimate_mu_p0_from_peaks(&[4.7; 100], &Calibration::reference()).unwrap();
        assert_eq!(est.mu_hat, 0.0);
        assert_eq!(est.mu_uncorrected, 0.0);
    }

    #[test]
    fn no_zero_class_is_flux_too_high() {
        let err = estimate_mu_p0_from_peaks(&[20.0; 10], &Calibration::reference()).unwrap_err();
        assert!(matches!(err, Error::FluxTooHigh));
    }

    #[test]
    fn mle_recovers_noise_free_histogram() {
        for mu in [0.3, 1.49, 3.0] {
            let h = histogram_from_model(mu, 1e7);
            let est = estimate_mu_mle(&h, &Calibration::reference(), DEFAULT_N_MAX).unwrap();
            assert!((est.mu_hat - mu).abs() < 2e-4, "{mu}: {}", est.mu_hat);
            assert!(est.reduced_chi2 < 0.1);
        }
    }

    #[test]
    fn mle_at_zero_flux() {
        let h = histogram_from_model(0.0, 1e6);
        let est = estimate_mu_mle(&h, &Calibration::reference(), DEFAULT_N_MAX).unwrap();
        assert!(est.mu_hat < 1e-3);
    }

    #[test]
    fn p0_on_noise_free_histogram() {
        let h = histogram_from_model(1.49, 1e8);
        let est = estimate_mu_p0(&h, &Calibration::reference()).unwrap();
        assert!((est.mu_hat - 1.49).abs() < 1e-3, "{}", est.mu_hat);
    }
}
