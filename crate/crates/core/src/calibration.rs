//! The measurable response model of the self-differencing readout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};

/// Per-photon-number peak means plus the 0- and 1-photon widths.
///
/// Means beyond the table are extrapolated linearly with
/// `extrapolation_slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(rename = "v0_mV")]
    pub v0: f64,
    #[serde(rename = "sigma0_mV")]
    pub sigma0: f64,
    #[serde(rename = "v1_mV")]
    pub v1: f64,
    #[serde(rename = "sigma1_mV")]
    pub sigma1: f64,
    #[serde(rename = "peak_table_mV")]
    pub peak_table: Vec<f64>,
    #[serde(rename = "extrapolation_slope_mV")]
    pub extrapolation_slope: f64,
}

impl Calibration {
    /// Peak positions and widths measured at 1.5 V excess bias.
    pub fn reference() -> Self {
        Self {
            v0: 4.7,
            sigma0: 0.175,
            v1: 8.4,
            sigma1: 0.96,
            peak_table: vec![4.7, 8.4, 11.5, 14.6, 17.6],
            extrapolation_slope: 3.0,
        }
    }

    /// Calibration from a 0/1-photon fit alone: the peak ladder is linear.
    pub fn from_two_peaks(v0: f64, sigma0: f64, v1: f64, sigma1: f64) -> Self {
        Self {
            v0,
            sigma0,
            v1,
            sigma1,
            peak_table: vec![v0, v1],
            extrapolation_slope: v1 - v0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut fail = |field: &'static str, message: String| {
            errors.push(FieldError { field, message })
        };
        let finite = [self.v0, self.sigma0, self.v1, self.sigma1, self.extrapolation_slope]
            .iter()
            .chain(&self.peak_table)
            .all(|x| x.is_finite());
        if !finite {
            fail("calibration", "all values must be finite".into());
        }
        if self.v1 <= self.v0 {
            fail("v1_mV", format!("must exceed v0_mV ({} <= {})", self.v1, self.v0));
        }
        if self.sigma0 <= 0.0 {
            fail("sigma0_mV", format!("must be > 0, got {}", self.sigma0));
        }
        if self.sigma1 <= self.sigma0 {
            fail(
                "sigma1_mV",
                format!("must exceed sigma0_mV ({} <= {})", self.sigma1, self.sigma0),
            );
        }
        if self.peak_table.len() < 2 {
            fail("peak_table_mV", "needs at least the 0- and 1-photon means".into());
        } else {
            if self.peak_table[0] != self.v0 || self.peak_table[1] != self.v1 {
                fail("peak_table_mV", "first two entries must equal v0_mV and v1_mV".into());
            }
            if self.peak_table.windows(2).any(|w| w[1] <= w[0]) {
                fail("peak_table_mV", "must be strictly increasing".into());
            }
        }
        if self.extrapolation_slope <= 0.0 {
            fail(
                "extrapolation_slope_mV",
                format!("must be > 0, got {}", self.extrapolation_slope),
            );
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Mean peak voltage for `n` detected carriers.
    pub fn peak_mean(&self, n: usize) -> f64 {
        let last = self.peak_table.len() - 1;
        if n <= last {
            self.peak_table[n]
        } else {
            self.peak_table[last] + self.extrapolation_slope * (n - last) as f64
        }
    }

    /// Mean of a linear ladder through the 0- and 1-photon peaks.
    pub fn ladder_mean(&self, n: usize) -> f64 {
        self.v0 + n as f64 * (self.v1 - self.v0)
    }

    /// Width under per-carrier variance additivity (used for simulation).
    pub fn additive_sigma(&self, n: usize) -> f64 {
        let per_carrier = self.sigma1 * self.sigma1 - self.sigma0 * self.sigma0;
        (self.sigma0 * self.sigma0 + n as f64 * per_carrier).sqrt()
    }

    /// Width under the sqrt(N) scaling rule (used for analysis).
    pub fn sqrt_n_sigma(&self, n: usize) -> f64 {
        if n == 0 {
            self.sigma0
        } else {
            self.sigma1 * (n as f64).sqrt()
        }
    }

    /// Rescale the avalanche part of the response to a new single-photon
    /// amplitude `v1 - v0 = step`, keeping the baseline and the relative
    /// gain spread unchanged.
    pub fn with_single_photon_step(&self, step: f64) -> Self {
        let scale = step / (self.v1 - self.v0);
        let per_carrier = (self.sigma1 * self.sigma1 - self.sigma0 * self.sigma0) * scale * scale;
        let peak_table: Vec<f64> = self
            .peak_table
            .iter()
            .map(|v| self.v0 + (v - self.v0) * scale)
            .collect();
        Self {
            v0: self.v0,
            sigma0: self.sigma0,
            v1: peak_table[1],
            sigma1: (self.sigma0 * self.sigma0 + per_carrier).sqrt(),
            peak_table,
            extrapolation_slope: self.extrapolation_slope * scale,
        }
    }
}
