//! Mode counting and the photon-number component test used to show that
//! conventional gated-Geiger output carries no photon-number structure.

use serde::{Deserialize, Serialize};

use super::fit::{expected_counts, fit_binned, Component};
use super::histogram::Histogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeOptions {
    /// Gaussian smoothing width, in bins.
    pub smoothing_bins: f64,
    /// Minimum prominence relative to the tallest smoothed bin.
    pub min_relative_prominence: f64,
    /// Minimum prominence in units of the Poisson error of the peak bin.
    pub min_sigmas: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            smoothing_bins: 2.0,
            min_relative_prominence: 0.01,
            min_sigmas: 5.0,
        }
    }
}

/// Significant modes as `(bin center, smoothed height)`, in bin order.
pub fn find_modes(hist: &Histogram, opts: ModeOptions) -> Vec<(f64, f64)> {
    let s = hist.smoothed(opts.smoothing_bins);
    let global = s.iter().cloned().fold(0.0, f64::max);
    let mut modes = Vec::new();
    for i in 0..s.len() {
        let left_ok = i == 0 || s[i - 1] < s[i];
        let right_ok = i + 1 == s.len() || s[i + 1] <= s[i];
        if !(left_ok && right_ok) || s[i] <= 0.0 {
            continue;
        }
        // lowest point on each side before reaching higher ground
        let mut left_min = s[i];
        let mut j = i;
        while j > 0 && s[j - 1] <= s[i] {
            j -= 1;
            left_min = left_min.min(s[j]);
        }
        let mut right_min = s[i];
        let mut k = i;
        while k + 1 < s.len() && s[k + 1] <= s[i] {
            k += 1;
            right_min = right_min.min(s[k]);
        }
        let prominence = s[i] - left_min.max(right_min);
        if prominence >= opts.min_relative_prominence * global
            && prominence >= opts.min_sigmas * s[i].sqrt()
        {
            modes.push((hist.center(i), s[i]));
        }
    }
    modes
}

pub fn count_modes(hist: &Histogram, opts: ModeOptions) -> usize {
    find_modes(hist, opts).len()
}

/// Sample variance of the values above `threshold`.
pub fn variance_above(values: &[f64], threshold: f64) -> f64 {
    let sel: Vec<f64> = values.iter().copied().filter(|&v| v > threshold).collect();
    let n = sel.len() as f64;
    let mean = sel.iter().sum::<f64>() / n;
    sel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Outcome of adding a photon-number component to a two-cluster fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentTest {
    /// Deviance of the two-Gaussian fit.
    pub deviance_two: f64,
    /// Deviance with the additional 2-photon component.
    pub deviance_three: f64,
    /// Fitted area of the added component.
    pub added_area: f64,
    /// AIC(three) - AIC(two); positive means the extra component is not
    /// supported by the data.
    pub delta_aic: f64,
}

impl ComponentTest {
    pub fn third_component_significant(&self) -> bool {
        self.delta_aic < 0.0
    }
}

/// Fit the two tallest clusters over the whole histogram, then refit with
/// a third Gaussian at the position a photon-number-resolving response
/// would put the 2-photon peak (`2 v1 - v0`, width `sqrt(2) sigma1`) and
/// a free area.
pub fn photon_number_component_test(hist: &Histogram) -> Result<ComponentTest> {
    let mut modes = find_modes(hist, ModeOptions::default());
    if modes.len() < 2 {
        return Err(Error::InsufficientSeparation(format!(
            "need two clusters, found {} mode(s)",
            modes.len()
        )));
    }
    modes.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (mut lo, mut hi) = (modes[0].0, modes[1].0);
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let split = 0.5 * (lo + hi);
    let moments = |keep: &dyn Fn(f64) -> bool| {
        let (mut n, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (i, &c) in hist.counts.iter().enumerate() {
            let x = hist.center(i);
            if keep(x) {
                let c = c as f64;
                n += c;
                s1 += c * x;
                s2 += c * x * x;
            }
        }
        let mean = s1 / n;
        (mean, (s2 / n - mean * mean).max(0.0).sqrt().max(hist.bin_width), n)
    };
    let (v0, s0, a0) = moments(&|x| x < split);
    let (v1, s1, a1) = moments(&|x| x >= split);
    let span = 0..hist.n_bins();
    let two = |p: &[f64]| -> Option<Vec<Component>> {
        (p[1] > 0.0 && p[4] > 0.0 && p[2] >= 0.0 && p[5] >= 0.0 && p[3] > p[0]).then(|| {
            vec![
                Component { mean: p[0], sigma: p[1], area: p[2] },
                Component { mean: p[3], sigma: p[4], area: p[5] },
            ]
        })
    };
    let init = [v0, s0, a0, v1, s1, a1];
    let fit_two = fit_binned(hist, span.clone(), &init, two)?;

    let three = |p: &[f64]| -> Option<Vec<Component>> {
        let mut comps = two(&p[..6])?;
        if p[6] < 0.0 {
            return None;
        }
        comps.push(Component {
            mean: 2.0 * p[3] - p[0],
            sigma: p[4] * 2f64.sqrt(),
            area: p[6],
        });
        Some(comps)
    };
    let p = &fit_two.params;
    let (m2, s2) = (2.0 * p[3] - p[0], p[4] * 2f64.sqrt());
    let model_two = two(p).unwrap_or_default();
    let expected = expected_counts(hist, span.clone(), &model_two);
    let residual: f64 = span
        .clone()
        .filter(|&i| (hist.center(i) - m2).abs() < 2.0 * s2)
        .map(|i| hist.counts[i] as f64 - expected[i - span.start])
        .sum();
    let mut init3 = p.clone();
    init3.push(residual.max(0.05 * p[5]));
    let mut fit_three = fit_binned(hist, span.clone(), &init3, three)?;

    // second start: upper cluster placed on the tallest maximum above the baseline
    let floor = p[0] + 3.0 * p[1];
    if let Some(&(v1, _)) = hist.local_maxima(2.0).iter().find(|(c, _)| *c > floor) {
        let step = v1 - p[0];
        let alt = [p[0], p[1], p[2], v1, 0.25 * step, 0.5 * p[5], 0.5 * p[5]];
        if let Ok(f) = fit_binned(hist, span, &alt, three) {
            if f.deviance < fit_three.deviance {
                fit_three = f;
            }
        }
    }
    let deviance_three = fit_three.deviance.min(fit_two.deviance);
    Ok(ComponentTest {
        deviance_two: fit_two.deviance,
        deviance_three,
        added_area: fit_three.params[6],
        delta_aic: (deviance_three + 2.0 * 7.0) - (fit_two.deviance + 2.0 * 6.0),
    })
}
