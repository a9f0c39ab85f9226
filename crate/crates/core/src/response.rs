//! Peak output voltage for a given number of avalanche-triggering carriers,
//! in self-differencing and in conventional gated-Geiger readout, plus the
//! excess-bias maps for efficiency and mean gain.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::Calibration;
use crate::error::{Error, FieldError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseParams {
    pub calib: Calibration,
    /// Saturated conventional-mode output, mV.
    pub vsat_geiger: f64,
    /// Scale of the low-amplitude tail for a single carrier, mV.
    pub geiger_tail_scale: f64,
    pub geiger_baseline_sigma: f64,
    /// Amplitude of the capacitive gate response in the raw output, mV.
    pub cap_response_amp: f64,
}

impl Default for ResponseParams {
    fn default() -> Self {
        Self {
            calib: Calibration::reference(),
            vsat_geiger: 60.0,
            geiger_tail_scale: 10.0,
            geiger_baseline_sigma: 1.0,
            cap_response_amp: 80.0,
        }
    }
}

impl ResponseParams {
    pub fn validate(&self) -> Result<()> {
        self.calib.validate()?;
        let mut errors = Vec::new();
        for (field, value) in [
            ("vsat_geiger", self.vsat_geiger),
            ("geiger_tail_scale", self.geiger_tail_scale),
            ("geiger_baseline_sigma", self.geiger_baseline_sigma),
            ("cap_response_amp", self.cap_response_amp),
        ] {
            if !(value.is_finite() && value > 0.0) {
                errors.push(FieldError {
                    field,
                    message: format!("must be > 0, got {value}"),
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Mean and standard deviation of the self-differencing peak for `k`
    /// carriers.
    pub fn sd_moments(&self, k: u64) -> (f64, f64) {
        let k = k as usize;
        (self.calib.peak_mean(k), self.calib.additive_sigma(k))
    }

    /// Mean of the truncated-exponential tail variable for `k >= 1`.
    fn geiger_tail_mean_scale(&self, k: u64) -> f64 {
        self.geiger_tail_scale / self.vsat_geiger / k as f64
    }

    /// Closed-form mean of the conventional-mode output for `k >= 1`.
    pub fn geiger_mean(&self, k: u64) -> f64 {
        assert!(k >= 1);
        let s = self.geiger_tail_mean_scale(k);
        let e = (-1.0 / s).exp();
        // E[X] for Exp(mean s) truncated to [0, 1]
        let mean_x = s - e / (1.0 - e);
        self.vsat_geiger * (1.0 - mean_x)
    }
}

/// Self-differencing peak voltage: Gaussian about the tabulated mean, with
/// variance growing by one per-carrier gain variance for each carrier.
pub fn sd_peak_voltage<R: Rng + ?Sized>(k: u64, params: &ResponseParams, rng: &mut R) -> f64 {
    let (mean, sigma) = params.sd_moments(k);
    Normal::new(mean, sigma)
        .expect("validated widths are positive")
        .sample(rng)
}

/// Conventional gated-Geiger peak voltage. Any avalanche saturates near
/// `vsat_geiger`; more carriers only shorten the low-amplitude tail.
pub fn geiger_peak_voltage<R: Rng + ?Sized>(k: u64, params: &ResponseParams, rng: &mut R) -> f64 {
    if k == 0 {
        return Normal::new(0.0, params.geiger_baseline_sigma)
            .expect("validated width is positive")
            .sample(rng);
    }
    let s = params.geiger_tail_mean_scale(k);
    let u: f64 = rng.random();
    let mass = -(-1.0 / s).exp_m1();
    let x = -s * (-u * mass).ln_1p();
    params.vsat_geiger * (1.0 - x.clamp(0.0, 1.0))
}

/// Monotone piecewise-linear anchors in excess bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMaps {
    pub efficiency_points: Vec<(f64, f64)>,
    pub gain_points: Vec<(f64, f64)>,
}

impl Default for BiasMaps {
    /// The (1.5 V, 10 %), (2.2 V, 30 %) efficiency points and the
    /// (1.5 V, 1e6) gain point are measured; the 1.0 V anchors extend the
    /// map to low gain.
    fn default() -> Self {
        Self {
            efficiency_points: vec![(1.0, 0.02), (1.5, 0.10), (2.2, 0.30)],
            gain_points: vec![(1.0, 1.0e5), (1.5, 1.0e6), (2.2, 2.0e6)],
        }
    }
}

fn interpolate(points: &[(f64, f64)], x: f64, what: &'static str) -> Result<f64> {
    let lo = points.first().map(|p| p.0).unwrap_or(f64::NAN);
    let hi = points.last().map(|p| p.0).unwrap_or(f64::NAN);
    if !(x >= lo && x <= hi) {
        return Err(Error::OutOfSpan {
            what,
            value: x,
            lo,
            hi,
        });
    }
    let idx = points
        .windows(2)
        .position(|w| x <= w[1].0)
        .unwrap_or(points.len().saturating_sub(2));
    if points.len() == 1 {
        return Ok(points[0].1);
    }
    let (x0, y0) = points[idx];
    let (x1, y1) = points[idx + 1];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

impl BiasMaps {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        for (field, pts) in [
            ("efficiency_points", &self.efficiency_points),
            ("gain_points", &self.gain_points),
        ] {
            if pts.is_empty() {
                errors.push(FieldError {
                    field,
                    message: "needs at least one anchor".into(),
                });
            } else if pts.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
                errors.push(FieldError {
                    field,
                    message: "anchors must be strictly increasing in V_EX and monotone".into(),
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn efficiency(&self, v_ex: f64) -> Result<f64> {
        interpolate(&self.efficiency_points, v_ex, "excess bias")
    }

    pub fn gain(&self, v_ex: f64) -> Result<f64> {
        interpolate(&self.gain_points, v_ex, "excess bias")
    }

    pub fn span(&self) -> (f64, f64) {
        let lo = self.gain_points[0].0.max(self.efficiency_points[0].0);
        let hi = self.gain_points[self.gain_points.len() - 1]
            .0
            .min(self.efficiency_points[self.efficiency_points.len() - 1].0);
        (lo, hi)
    }
}

/// Mean avalanche gain implied by the single-photon peak step.
pub fn mean_gain(calib: &Calibration, electrons_per_mv: f64) -> f64 {
    electrons_per_mv * (calib.v1 - calib.v0)
}

/// Response at another excess bias: the single-photon step follows the
/// gain map while the relative gain spread stays that of `reference`.
pub fn calibration_at_bias(
    reference: &Calibration,
    v_ex: f64,
    maps: &BiasMaps,
    electrons_per_mv: f64,
) -> Result<Calibration> {
    let gain = maps.gain(v_ex)?;
    Ok(reference.with_single_photon_step(gain / electrons_per_mv))
}
