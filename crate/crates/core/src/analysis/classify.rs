//! Photon-number decisions from a single peak voltage.

use serde::{Deserialize, Serialize};

use super::gauss::{interval_mass, ln_pdf};
use super::histogram::Histogram;
use super::mixture::{poisson_weights, MixtureModel};
use crate::calibration::Calibration;

/// Threshold classifier: class `N` covers `(b[N-1], b[N]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub boundaries: Vec<f64>,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) > 0 >= f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl Classifier {
    /// Equal-prior boundaries: between adjacent components the class
    /// switches where their densities (sqrt(N) widths) are equal.
    pub fn new(calib: &Calibration, n_max: usize) -> Self {
        Self::build(calib, n_max, None)
    }

    /// Boundaries weighted by Poisson priors at flux `mu`.
    pub fn with_prior(calib: &Calibration, n_max: usize, mu: f64) -> Self {
        Self::build(calib, n_max, Some(poisson_weights(mu, n_max)))
    }

    fn build(calib: &Calibration, n_max: usize, priors: Option<Vec<f64>>) -> Self {
        let n_max = n_max.max(1);
        let means: Vec<f64> = (0..=n_max).map(|n| calib.peak_mean(n)).collect();
        let sigmas: Vec<f64> = (0..=n_max).map(|n| calib.sqrt_n_sigma(n)).collect();
        let log_prior = |n: usize| match &priors {
            Some(p) => p[n].max(1e-300).ln(),
            None => 0.0,
        };
        let mut boundaries = Vec::with_capacity(n_max);
        for n in 0..n_max {
            let diff = |v: f64| {
                (log_prior(n) + ln_pdf(v, means[n], sigmas[n]))
                    - (log_prior(n + 1) + ln_pdf(v, means[n + 1], sigmas[n + 1]))
            };
            let (lo, hi) = (means[n], means[n + 1]);
            let b = if diff(lo) <= 0.0 {
                lo
            } else if diff(hi) > 0.0 {
                hi
            } else {
                bisect(lo, hi, diff)
            };
            let floor = boundaries.last().copied().unwrap_or(f64::NEG_INFINITY);
            boundaries.push(b.max(floor));
        }
        Self {
            means,
            sigmas,
            boundaries,
        }
    }

    pub fn n_max(&self) -> usize {
        self.boundaries.len()
    }

    /// Photon number for peak voltage `v`; a value exactly on a boundary
    /// goes to the lower class.
    pub fn classify(&self, v: f64) -> usize {
        self.boundaries.partition_point(|&b| b < v)
    }

    /// Fraction of `peaks` falling into each class `0..=n_max`.
    pub fn class_fractions(&self, peaks: &[f64]) -> Vec<f64> {
        let mut counts = vec![0u64; self.n_max() + 1];
        for &v in peaks {
            counts[self.classify(v)] += 1;
        }
        let n = peaks.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Class fractions of a histogram, classifying each bin by its center.
    /// Underflow counts as class 0 and overflow as the class of the upper
    /// edge.
    pub fn histogram_fractions(&self, hist: &Histogram) -> Vec<f64> {
        let mut counts = vec![0u64; self.n_max() + 1];
        for (i, &c) in hist.counts.iter().enumerate() {
            counts[self.classify(hist.center(i))] += c;
        }
        counts[0] += hist.underflow;
        counts[self.classify(hist.hi())] += hist.overflow;
        let n = hist.entries().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Lower and upper edge of class `n`.
    pub fn class_interval(&self, n: usize) -> (f64, f64) {
        let lo = if n == 0 {
            f64::NEG_INFINITY
        } else {
            self.boundaries[n - 1]
        };
        let hi = self.boundaries.get(n).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// Probability that a draw from `model` lands in each class,
    /// including crosstalk across boundaries.
    pub fn expected_fractions(&self, model: &MixtureModel) -> Vec<f64> {
        (0..=self.n_max())
            .map(|n| {
                let (lo, hi) = self.class_interval(n);
                model
                    .weights
                    .iter()
                    .zip(&model.means)
                    .zip(&model.sigmas)
                    .map(|((w, m), s)| w * interval_mass(lo, hi, *m, *s))
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_means_classify_to_their_own_class() {
        let c = Classifier::new(&Calibration::reference(), 30);
        assert_eq!(c.classify(4.7), 0);
        assert_eq!(c.classify(8.4), 1);
        assert_eq!(c.classify(11.5), 2);
        assert_eq!(c.classify(-100.0), 0);
        assert_eq!(c.classify(1e6), 30);
    }

    #[test]
    fn zero_one_boundary_matches_density_equality() {
        // Oracle: scan the density difference on a fine grid.
        let (m0, s0, m1, s1) = (4.7f64, 0.175f64, 8.4f64, 0.96f64);
        let dens = |v: f64, m: f64, s: f64| (-(v - m).powi(2) / (2.0 * s * s)).exp() / s;
        let mut root = f64::NAN;
        let mut v = m0;
        while v < m1 {
            if dens(v, m0, s0) <= dens(v, m1, s1) {
                root = v;
                break;
            }
            v += 1e-6;
        }
        let c = Classifier::new(&Calibration::reference(), 10);
        assert!((c.boundaries[0] - root).abs() < 2e-6, "{} vs {root}", c.boundaries[0]);
        assert!((c.boundaries[0] - 5.3439).abs() < 1e-3);
    }

    #[test]
    fn boundaries_strictly_increasing() {
        let c = Classifier::new(&Calibration::reference(), 40);
        assert!(c.boundaries.windows(2).all(|w| w[1] > w[0]));
        for (n, b) in c.boundaries.iter().enumerate() {
            assert!(*b > c.means[n] && *b < c.means[n + 1]);
        }
    }

    #[test]
    fn boundary_value_goes_to_lower_class() {
        let c = Classifier::new(&Calibration::reference(), 5);
        let b = c.boundaries[1];
        assert_eq!(c.classify(b), 1);
        assert_eq!(c.classify(f64::from_bits(b.to_bits() + 1)), 2);
    }

    #[test]
    fn prior_mode_pushes_boundaries_toward_rare_classes() {
        let cal = Calibration::reference();
        let flat = Classifier::new(&cal, 10);
        let low_flux = Classifier::with_prior(&cal, 10, 0.05);
        assert!(low_flux.boundaries[0] > flat.boundaries[0]);
        assert!(low_flux.boundaries.windows(2).all(|w| w[1] >= w[0]));
    }
}
