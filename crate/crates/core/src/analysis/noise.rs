//! Excess noise factor of the avalanche gain and its dependence on the
//! mean gain across excess biases.

use serde::{Deserialize, Serialize};

use super::fit::fit_two_gaussians;
use super::histogram::build_histogram;
use crate::calibration::Calibration;
use crate::config::{Detector, Source};
use crate::error::{Error, Result};
use crate::response::{calibration_at_bias, mean_gain, BiasMaps, ResponseParams};
use crate::seed::{split_seed, RunSeed};
use crate::simulate::Simulator;

/// Typical InGaAs linear-mode figure, for comparison: `(M, F)`.
pub const LINEAR_MODE_REFERENCE: (f64, f64) = (10.0, 5.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessNoise {
    pub value: f64,
    /// Set when the 1-photon width did not exceed the baseline width and
    /// the factor was clamped to 1.
    pub clamped: bool,
}

/// `F = <M^2> / <M>^2` read off the single-photon peak: the gain variance
/// is the 1-photon variance minus the baseline variance, and the mean
/// gain is proportional to `v1 - v0`.
pub fn excess_noise(calib: &Calibration) -> Result<ExcessNoise> {
    let step = calib.v1 - calib.v0;
    if !(step > 0.0) {
        return Err(Error::Usage(format!("v1 must exceed v0, got step {step}")));
    }
    let gain_var = calib.sigma1 * calib.sigma1 - calib.sigma0 * calib.sigma0;
    if gain_var <= 0.0 {
        return Ok(ExcessNoise {
            value: 1.0,
            clamped: true,
        });
    }
    Ok(ExcessNoise {
        value: 1.0 + gain_var / (step * step),
        clamped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub v_ex: f64,
    pub mean_gain: f64,
    pub excess_noise: f64,
}

/// One sweep entry; failed points keep their bias and the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurveEntry {
    pub v_ex: f64,
    pub point: Option<NoisePoint>,
    pub log: Option<String>,
}

/// Settings shared by every point of an excess-bias sweep.
#[derive(Debug, Clone)]
pub struct NoiseRun {
    pub detector: Detector,
    pub response: ResponseParams,
    pub maps: BiasMaps,
    /// Low detected flux used for each calibration run.
    pub mu_detected: f64,
    /// Illuminated gates per point.
    pub gates: u64,
    pub seed: RunSeed,
    pub bin_width: f64,
    pub shards: usize,
}

impl NoiseRun {
    /// Simulate a low-flux run at `v_ex`, fit the 0/1-photon peaks and
    /// derive `(<M>, F)` from the fitted calibration.
    pub fn point(&self, v_ex: f64) -> Result<NoisePoint> {
        let kappa = self.detector.electrons_per_mv;
        let calib = calibration_at_bias(&self.response.calib, v_ex, &self.maps, kappa)?;
        let detector = Detector {
            excess_bias: Some(v_ex),
            detection_efficiency: self.maps.efficiency(v_ex)?,
            ..self.detector
        };
        let source = Source {
            mu_detected: self.mu_detected,
            wavelength_nm: 1550.0,
        };
        let response = ResponseParams {
            calib,
            ..self.response.clone()
        };
        let seed = split_seed(self.seed, v_ex.to_bits());
        let sim = Simulator::new(detector, source, response, seed)?;
        let peaks = sim.illuminated_peaks(self.gates, self.shards);
        let hist = build_histogram(&peaks, self.bin_width, None)?;
        let fit = fit_two_gaussians(&hist)?;
        let fitted = fit.calibration();
        Ok(NoisePoint {
            v_ex,
            mean_gain: mean_gain(&fitted, kappa),
            excess_noise: excess_noise(&fitted)?.value,
        })
    }
}

/// Excess noise against mean gain over a list of excess biases, sorted by
/// mean gain. A failing point is annotated and the sweep continues.
pub fn noise_curve(v_ex_list: &[f64], run: &NoiseRun) -> Result<Vec<NoiseCurveEntry>> {
    if v_ex_list.is_empty() {
        return Err(Error::Usage("excess-bias list is empty".into()));
    }
    let (lo, hi) = run.maps.span();
    if let Some(&v) = v_ex_list.iter().find(|&&v| !(v >= lo && v <= hi)) {
        return Err(Error::OutOfSpan {
            what: "excess bias",
            value: v,
            lo,
            hi,
        });
    }
    let mut entries: Vec<NoiseCurveEntry> = v_ex_list
        .iter()
        .map(|&v_ex| match run.point(v_ex) {
            Ok(p) => NoiseCurveEntry {
                v_ex,
                point: Some(p),
                log: None,
            },
            Err(e) => NoiseCurveEntry {
                v_ex,
                point: None,
                log: Some(e.to_string()),
            },
        })
        .collect();
    entries.sort_by(|a, b| {
        let key = |e: &NoiseCurveEntry| e.point.map_or(f64::INFINITY, |p| p.mean_gain);
        key(a).total_cmp(&key(b)).then(a.v_ex.total_cmp(&b.v_ex))
    });
    Ok(entries)
}

/// Least-squares slope of F against log10 of the mean gain.
pub fn log_gain_slope(points: &[NoisePoint]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.mean_gain.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.excess_noise).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.excess_noise - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
