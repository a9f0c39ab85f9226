//! Binned Gaussian-mixture fitting.
//!
//! Expected bin counts are exact bin integrals of the component Gaussians.
//! The fitter is a Levenberg-Marquardt iteration on the Poisson-weighted
//! least-squares normal equations with weights `1 / expected`, refreshed
//! at every step; at convergence this solves the Poisson likelihood
//! equations, so the inverse of `J^T W J` is the parameter covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gauss::interval_mass;
use super::histogram::Histogram;
use crate::calibration::Calibration;
use crate::error::{Error, Result};

/// One Gaussian with its area in counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: f64,
    pub sigma: f64,
    pub area: f64,
}

/// Expected counts of `components` in bins `range` of `hist`.
pub fn expected_counts(hist: &Histogram, range: std::ops::Range<usize>, components: &[Component]) -> Vec<f64> {
    range
        .map(|i| {
            let (lo, hi) = (hist.edge(i), hist.edge(i + 1));
            components
                .iter()
                .map(|c| c.area * interval_mass(lo, hi, c.mean, c.sigma))
                .sum()
        })
        .collect()
}

/// Raw output of [`fit_binned`].
#[derive(Debug, Clone)]
pub struct BinnedFit {
    pub params: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
    /// Poisson deviance over the fitted bins.
    pub deviance: f64,
    /// Pearson chi-square over the fitted bins.
    pub chi2: f64,
    pub n_bins: usize,
    pub iterations: usize,
}

impl BinnedFit {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance
            .as_ref()
            .map(|c| c[(i, i)].max(0.0).sqrt())
            .unwrap_or(f64::NAN)
    }

    pub fn reduced_chi2(&self) -> f64 {
        let dof = self.n_bins.saturating_sub(self.params.len()).max(1);
        self.chi2 / dof as f64
    }
}

pub const MAX_ITERATIONS: usize = 500;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;

/// Contiguous bin span from the first to the last bin holding at least
/// `min_count` entries.
pub fn fit_span(hist: &Histogram, min_count: u64) -> Option<std::ops::Range<usize>> {
    let first = hist.counts.iter().position(|&c| c >= min_count)?;
    let last = hist.counts.iter().rposition(|&c| c >= min_count)?;
    Some(first..last + 1)
}

fn poisson_deviance(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&n, &m)| {
            let m = m.max(1e-300);
            if n > 0.0 {
                2.0 * (m - n + n * (n / m).ln())
            } else {
                2.0 * m
            }
        })
        .sum()
}

/// Fit a parameterized mixture to histogram bins `span`.
///
/// `model` maps a parameter vector to components and returns `None` for
/// parameters outside the model's domain (such steps are rejected).
pub fn fit_binned<F>(hist: &Histogram, span: std::ops::Range<usize>, init: &[f64], model: F) -> Result<BinnedFit>
where
    F: Fn(&[f64]) -> Option<Vec<Component>>,
{
    let observed: Vec<f64> = hist.counts[span.clone()].iter().map(|&c| c as f64).collect();
    let n_par = init.len();
    if observed.len() <= n_par {
        return Err(Error::Fit(format!(
            "{} bins cannot constrain {} parameters",
            observed.len(),
            n_par
        )));
    }
    let eval = |p: &[f64]| -> Option<Vec<f64>> {
        let comps = model(p)?;
        let m = expected_counts(hist, span.clone(), &comps);
        m.iter().all(|x| x.is_finite()).then_some(m)
    };

    let mut params = init.to_vec();
    let mut expected = eval(&params).ok_or_else(|| Error::Fit("initial parameters invalid".into()))?;
    let mut deviance = poisson_deviance(&observed, &expected);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian(&params, &expected, &eval);
        let weights: Vec<f64> = expected.iter().map(|&m| 1.0 / m.max(1.0)).collect();
        let (normal, gradient) = normal_equations(&jac, &weights, &observed, &expected);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = normal.clone();
            for j in 0..n_par {
                damped[(j, j)] += lambda * normal[(j, j)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&gradient) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            if let Some(trial_expected) = eval(&trial) {
                let trial_dev = poisson_deviance(&observed, &trial_expected);
                if trial_dev <= deviance {
                    let rel = step
                        .iter()
                        .zip(&params)
                        .map(|(s, p)| s.abs() / p.abs().max(1e-12))
                        .fold(0.0, f64::max);
                    params = trial;
                    expected = trial_expected;
                    deviance = trial_dev;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < RELATIVE_TOLERANCE {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            best_deviance: deviance,
        });
    }

    let jac = jacobian(&params, &expected, &eval);
    let weights: Vec<f64> = expected.iter().map(|&m| 1.0 / m.max(1e-300)).collect();
    let (normal, _) = normal_equations(&jac, &weights, &observed, &expected);
    let covariance = normal.try_inverse();
    let chi2 = observed
        .iter()
        .zip(&expected)
        .map(|(&n, &m)| (n - m).powi(2) / m.max(1e-300))
        .sum();
    Ok(BinnedFit {
        params,
        covariance,
        deviance,
        chi2,
        n_bins: observed.len(),
        iterations,
    })
}

fn jacobian<E>(params: &[f64], base: &[f64], eval: &E) -> DMatrix<f64>
where
    E: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = base.len();
    let mut jac = DMatrix::zeros(n, params.len());
    let mut p = params.to_vec();
    for j in 0..params.len() {
        let h = 1e-6 * params[j].abs().max(1e-3);
        p[j] = params[j] + h;
        let plus = eval(&p);
        p[j] = params[j] - h;
        let minus = eval(&p);
        p[j] = params[j];
        match (plus, minus) {
            (Some(a), Some(b)) => {
                for i in 0..n {
                    jac[(i, j)] = (a[i] - b[i]) / (2.0 * h);
                }
            }
            (Some(a), None) => {
                for i in 0..n {
                    jac[(i, j)] = (a[i] - base[i]) / h;
                }
            }
            (None, Some(b)) => {
                for i in 0..n {
                    jac[(i, j)] = (base[i] - b[i]) / h;
                }
            }
            (None, None) => {}
        }
    }
    jac
}

fn normal_equations(
    jac: &DMatrix<f64>,
    weights: &[f64],
    observed: &[f64],
    expected: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let w = DVector::from_column_slice(weights);
    let r = DVector::from_iterator(observed.len(), observed.iter().zip(expected).map(|(n, m)| n - m));
    let mut wj = jac.clone();
    for (i, mut row) in wj.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let normal = jac.transpose() * &wj;
    let gradient = wj.transpose() * r;
    (normal, gradient)
}

/// Result of the low-flux 0/1-photon calibration fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGaussianFit {
    pub v0: f64,
    pub sigma0: f64,
    pub a0: f64,
    pub v1: f64,
    pub sigma1: f64,
    pub a1: f64,
    /// Standard errors of `[v0, sigma0, a0, v1, sigma1, a1]`.
    pub stderr: [f64; 6],
    /// Fitted 2-photon mean when the Poisson-tied contamination is modeled.
    pub v2: Option<f64>,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

impl TwoGaussianFit {
    pub fn calibration(&self) -> Calibration {
        Calibration::from_two_peaks(self.v0, self.sigma0, self.v1, self.sigma1)
    }

    pub fn components(&self) -> [Component; 2] {
        [
            Component {
                mean: self.v0,
                sigma: self.sigma0,
                area: self.a0,
            },
            Component {
                mean: self.v1,
                sigma: self.sigma1,
                area: self.a1,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGaussianOptions {
    /// Model the 2-, 3-, ... photon events with Poisson-tied areas
    /// (`a_N = a0 mu^N / N!`, `mu = a1 / a0`) and one extra gain variance
    /// `sigma1^2 - sigma0^2` per photon.
    pub poisson_tail: bool,
    /// Expected 2-photon count above which the 2-photon mean is a free
    /// parameter instead of following the linear ladder.
    pub free_v2_min_count: f64,
    /// Minimum upper-cluster fraction accepted as a second cluster.
    pub min_upper_fraction: f64,
}

impl Default for TwoGaussianOptions {
    fn default() -> Self {
        Self {
            poisson_tail: true,
            free_v2_min_count: 100.0,
            min_upper_fraction: 0.005,
        }
    }
}

/// Starting values: baseline from the fullest bin and its uncontaminated
/// left half-width, upper cluster from the residual above the baseline.
fn initial_guess(hist: &Histogram, min_upper_fraction: f64) -> Result<[f64; 6]> {
    let peak = hist.mode_bin().ok_or(Error::EmptyInput)?;
    let height = hist.counts[peak] as f64;
    let mut left = peak;
    while left > 0 && (hist.counts[left] as f64) > height / 2.0 {
        left -= 1;
    }
    let c_out = hist.counts[left] as f64;
    let half_width = if left < peak && c_out <= height / 2.0 {
        let c_in = hist.counts[left + 1] as f64;
        let pos_half = hist.center(left) + hist.bin_width * (height / 2.0 - c_out) / (c_in - c_out);
        (hist.center(peak) - pos_half).max(hist.bin_width / 2.0)
    } else {
        hist.bin_width / 2.0
    };
    let v0 = hist.center(peak);
    let sigma0 = (half_width / (2.0 * std::f64::consts::LN_2).sqrt()).max(0.5 * hist.bin_width);
    let a0 = height * sigma0 * (2.0 * std::f64::consts::PI).sqrt() / hist.bin_width;

    let mut mass = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..hist.n_bins() {
        let x = hist.center(i);
        if x <= v0 + 3.0 * sigma0 {
            continue;
        }
        let base = a0 * interval_mass(hist.edge(i), hist.edge(i + 1), v0, sigma0);
        let r = (hist.counts[i] as f64 - base).max(0.0);
        mass += r;
        first += r * x;
        second += r * x * x;
    }
    if mass < min_upper_fraction * hist.total as f64 {
        return Err(Error::InsufficientSeparation(format!(
            "upper cluster holds {:.3}% of entries",
            100.0 * mass / hist.total.max(1) as f64
        )));
    }
    let v1 = first / mass;
    let sigma1 = (second / mass - v1 * v1).max(0.0).sqrt().max(1.2 * sigma0);
    Ok([v0, sigma0, a0, v1, sigma1, mass])
}

/// Fit the 0- and 1-photon Gaussians of a low-flux pulse-height histogram.
pub fn fit_two_gaussians(hist: &Histogram) -> Result<TwoGaussianFit> {
    fit_two_gaussians_with(hist, TwoGaussianOptions::default())
}

pub fn fit_two_gaussians_with(hist: &Histogram, opts: TwoGaussianOptions) -> Result<TwoGaussianFit> {
    if hist.total == 0 {
        return Err(Error::EmptyInput);
    }
    let init = initial_guess(hist, opts.min_upper_fraction)?;
    let span = fit_span(hist, 5).ok_or(Error::EmptyInput)?;

    let mu0 = init[5] / init[2];
    let free_v2 = opts.poisson_tail && init[2] * mu0 * mu0 / 2.0 >= opts.free_v2_min_count;
    let mut start = init.to_vec();
    if free_v2 {
        start.push(init[3] + (init[3] - init[0]));
    }
    let poisson_tail = opts.poisson_tail;
    let fit = fit_binned(hist, span, &start, |p| {
        let (v0, s0, a0, v1, s1, a1) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        if !(s0 > 0.0 && s1 > 0.0 && a0 > 0.0 && a1 >= 0.0 && v1 > v0) {
            return None;
        }
        let mut comps = vec![
            Component { mean: v0, sigma: s0, area: a0 },
            Component { mean: v1, sigma: s1, area: a1 },
        ];
        if poisson_tail {
            let mu = a1 / a0;
            let v2 = if free_v2 { p[6] } else { 2.0 * v1 - v0 };
            if v2 <= v1 {
                return None;
            }
            let mut area = a1;
            for n in 2..=8usize {
                area *= mu / n as f64;
                if area < 0.5 {
                    break;
                }
                comps.push(Component {
                    mean: v2 + (n - 2) as f64 * (v2 - v1),
                    sigma: (s0 * s0 + n as f64 * (s1 * s1 - s0 * s0)).max(s0 * s0).sqrt(),
                    area,
                });
            }
        }
        Some(comps)
    })?;

    let p = &fit.params;
    let mut stderr = [0.0; 6];
    for (i, s) in stderr.iter_mut().enumerate() {
        *s = fit.stderr(i);
    }
    Ok(TwoGaussianFit {
        v0: p[0],
        sigma0: p[1],
        a0: p[2],
        v1: p[3],
        sigma1: p[4],
        a1: p[5],
        stderr,
        v2: free_v2.then(|| p[6]),
        reduced_chi2: fit.reduced_chi2(),
        iterations: fit.iterations,
    })
}

/// Fit independent Gaussians (mean, width and area all free) starting
/// from `init`. Component means must stay in their initial order.
pub fn fit_free_gaussians(hist: &Histogram, init: &[Component]) -> Result<(Vec<Component>, BinnedFit)> {
    let span = fit_span(hist, 5).ok_or(Error::EmptyInput)?;
    let start: Vec<f64> = init.iter().flat_map(|c| [c.mean, c.sigma, c.area]).collect();
    let fit = fit_binned(hist, span, &start, |p| {
        let comps: Vec<Component> = p
            .chunks(3)
            .map(|c| Component {
                mean: c[0],
                sigma: c[1],
                area: c[2],
            })
            .collect();
        let ordered = comps.windows(2).all(|w| w[1].mean > w[0].mean);
        (ordered && comps.iter().all(|c| c.sigma > 0.0 && c.area >= 0.0)).then_some(comps)
    })?;
    let comps = fit
        .params
        .chunks(3)
        .map(|c| Component {
            mean: c[0],
            sigma: c[1],
            area: c[2],
        })
        .collect();
    Ok((comps, fit))
}
