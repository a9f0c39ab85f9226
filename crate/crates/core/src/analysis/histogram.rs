//! Pulse-height histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bin width for self-differencing pulse heights, mV.
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;
/// Default self-differencing analysis range, mV.
pub const DEFAULT_SD_RANGE: (f64, f64) = (3.0, 25.0);

/// Fixed-width binning over `[lo, lo + counts.len() * bin_width)`.
///
/// Values outside the range are tallied in `underflow` / `overflow` and
/// are not part of `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub lo: f64,
    pub counts: Vec<u64>,
    pub total: u64,
    #[serde(default)]
    pub underflow: u64,
    #[serde(default)]
    pub overflow: u64,
}

/// Bin `peaks`; without a range the histogram spans the data padded by
/// three bins on each side.
pub fn build_histogram(peaks: &[f64], bin_width: f64, range: Option<(f64, f64)>) -> Result<Histogram> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::Usage(format!("bin_width must be > 0, got {bin_width}")));
    }
    if peaks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(hi > lo) {
                return Err(Error::Usage(format!("empty histogram range [{lo}, {hi})")));
            }
            (lo, hi)
        }
        None => {
            let (min, max) = peaks
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (min - 3.0 * bin_width, max + 3.0 * bin_width)
        }
    };
    let n_bins = ((hi - lo) / bin_width).ceil().max(1.0) as usize;
    let mut hist = Histogram {
        bin_width,
        lo,
        counts: vec![0; n_bins],
        total: 0,
        underflow: 0,
        overflow: 0,
    };
    for &v in peaks {
        hist.fill(v);
    }
    Ok(hist)
}

impl Histogram {
    pub fn empty(lo: f64, bin_width: f64, n_bins: usize) -> Self {
        Self {
            bin_width,
            lo,
            counts: vec![0; n_bins],
            total: 0,
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn fill(&mut self, v: f64) {
        let pos = (v - self.lo) / self.bin_width;
        if pos < 0.0 || pos.is_nan() {
            self.underflow += 1;
            return;
        }
        let idx = pos.floor() as usize;
        if idx >= self.counts.len() {
            self.overflow += 1;
        } else {
            self.counts[idx] += 1;
            self.total += 1;
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn hi(&self) -> f64 {
        self.edge(self.counts.len())
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.bin_width
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|i| self.center(i))
    }

    /// Entries including under- and overflow.
    pub fn entries(&self) -> u64 {
        self.total + self.underflow + self.overflow
    }

    /// Index of the fullest bin (lowest index on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        let mut best: Option<(usize, u64)> = None;
        for (i, &c) in self.counts.iter().enumerate() {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best.filter(|&(_, c)| c > 0).map(|(i, _)| i)
    }

    pub fn mean(&self) -> f64 {
        let sum: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * self.center(i))
            .sum();
        sum / self.total as f64
    }

    /// Counts convolved with a Gaussian kernel of `sigma_bins` bins.
    pub fn smoothed(&self, sigma_bins: f64) -> Vec<f64> {
        let raw: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        if sigma_bins <= 0.0 {
            return raw;
        }
        let half = (4.0 * sigma_bins).ceil() as isize;
        let kernel: Vec<f64> = (-half..=half)
            .map(|k| (-0.5 * (k as f64 / sigma_bins).powi(2)).exp())
            .collect();
        let n = raw.len() as isize;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (j, w) in (-half..=half).zip(&kernel) {
                    let k = i + j;
                    if (0..n).contains(&k) {
                        acc += w * raw[k as usize];
                        norm += w;
                    }
                }
                acc / norm
            })
            .collect()
    }

    /// Strict local maxima of the smoothed counts, highest first, as
    /// `(bin center, smoothed height)`. Flat tops report their midpoint.
    pub fn local_maxima(&self, sigma_bins: f64) -> Vec<(f64, f64)> {
        let s = self.smoothed(sigma_bins);
        let mut out = Vec::new();
        let mut i = 0;
        while i < s.len() {
            let mut j = i;
            while j + 1 < s.len() && s[j + 1] == s[i] {
                j += 1;
            }
            let left_lower = i == 0 || s[i - 1] < s[i];
            let right_lower = j + 1 == s.len() || s[j + 1] < s[i];
            if left_lower && right_lower && s[i] > 0.0 && !(i == 0 && j + 1 == s.len()) {
                let mid = (i + j) as f64 / 2.0;
                out.push((self.lo + (mid + 0.5) * self.bin_width, s[i]));
            }
            i = j + 1;
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}
