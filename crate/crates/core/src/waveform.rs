//! Sampled output waveform of the gated diode and the self-differencing
//! transform.
//!
//! Each gate period holds `P` samples. The capacitive response is a pair
//! of raised-cosine lobes of width `P/8`, positive at the rising gate edge
//! and negative half a period later. An avalanche is a half-sine of width
//! `P/4` centred on the rising-edge lobe. Self-differencing subtracts the
//! waveform delayed by one period, scaled by `1 + mismatch_delta`; with an
//! arm mismatch the rising-edge lobe survives at `-mismatch_delta * A`,
//! which is the 0-photon level of the extracted peaks.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::{Detector, Mode};
use crate::error::{Error, Result};
use crate::response::ResponseParams;
use crate::seed::{Domain, GateStreams, RunSeed};
use crate::simulate::GateOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub sample_period_ns: f64,
    pub samples: Vec<f64>,
    pub gate_period_samples: usize,
    /// Gate index of the first full period in `samples`.
    pub first_gate: u64,
}

impl Waveform {
    pub fn n_gates(&self) -> usize {
        self.samples.len() / self.gate_period_samples
    }

    pub fn time_ns(&self, i: usize) -> f64 {
        (self.first_gate as f64 * self.gate_period_samples as f64 + i as f64) * self.sample_period_ns
    }

    pub fn peak_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sample grid and pulse placement inside one gate period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformLayout {
    pub samples_per_gate: usize,
    /// Phase of the rising gate edge as a fraction of the period.
    pub edge_phase: f64,
    /// Analysis window width as a fraction of the period, centred on the
    /// avalanche peak.
    pub window: f64,
}

impl Default for WaveformLayout {
    fn default() -> Self {
        Self {
            samples_per_gate: 32,
            edge_phase: 0.25,
            window: 0.25,
        }
    }
}

impl WaveformLayout {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_gate < 8 {
            return Err(Error::Usage(format!(
                "sample rate below 8 samples per gate period ({})",
                self.samples_per_gate
            )));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::Usage(format!("window must lie in (0, 1], got {}", self.window)));
        }
        Ok(())
    }

    fn rise_center(&self) -> f64 {
        self.edge_phase * self.samples_per_gate as f64
    }

    fn fall_center(&self) -> f64 {
        self.rise_center() + 0.5 * self.samples_per_gate as f64
    }

    /// Sample offsets (within a period) covered by the analysis window.
    fn window_range(&self) -> std::ops::Range<usize> {
        let p = self.samples_per_gate as f64;
        let c = self.rise_center();
        let half = 0.5 * self.window * p;
        let lo = (c - half).ceil().max(0.0) as usize;
        let hi = ((c + half).floor() as usize + 1).min(self.samples_per_gate);
        lo..hi
    }

    /// Capacitive response at sample offset `x` within a period.
    fn capacitive(&self, x: f64, amp: f64) -> f64 {
        let p = self.samples_per_gate as f64;
        let width = p / 8.0;
        let lobe = |c: f64| {
            // distance on the periodic grid
            let mut d = (x - c) % p;
            if d > p / 2.0 {
                d -= p;
            } else if d < -p / 2.0 {
                d += p;
            }
            if d.abs() < width / 2.0 {
                0.5 * (1.0 + (2.0 * PI * d / width).cos())
            } else {
                0.0
            }
        };
        amp * (lobe(self.rise_center()) - lobe(self.fall_center()))
    }

    /// Unit-height avalanche pulse at sample offset `x`.
    fn avalanche(&self, x: f64) -> f64 {
        let width = self.samples_per_gate as f64 / 4.0;
        let start = self.rise_center() - width / 2.0;
        let t = (x - start) / width;
        if (0.0..=1.0).contains(&t) {
            (PI * t).sin()
        } else {
            0.0
        }
    }
}

/// Self-differencing arm settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdParams {
    /// Gain imbalance between the direct and the delayed arm.
    pub mismatch_delta: f64,
    /// Delay in gate periods.
    pub delay_periods: usize,
}

impl SdParams {
    pub fn balanced() -> Self {
        Self {
            mismatch_delta: 0.0,
            delay_periods: 1,
        }
    }

    /// Mismatch tuned so that dark gates peak at the calibrated 0-photon
    /// level `v0`.
    pub fn matched(params: &ResponseParams, layout: &WaveformLayout) -> Result<Self> {
        Ok(Self {
            mismatch_delta: solve_mismatch(params.calib.v0, params, layout)?,
            delay_periods: 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mismatch_delta.abs() < 0.1) {
            return Err(Error::Usage(format!(
                "|mismatch_delta| must be < 0.1, got {}",
                self.mismatch_delta
            )));
        }
        if self.delay_periods != 1 {
            return Err(Error::Usage("delay is fixed at one gate period".into()));
        }
        Ok(())
    }
}

/// Sampling noise and layout for waveform synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub layout: WaveformLayout,
    /// White Gaussian noise per raw sample, mV.
    pub noise_sigma: f64,
}

impl SynthOptions {
    /// Raw noise chosen so that, after subtracting a delayed copy scaled
    /// by `1 + delta`, the 0-photon peak width equals `sigma0`.
    pub fn for_readout(params: &ResponseParams, sd: &SdParams, layout: WaveformLayout) -> Self {
        let gain = 1.0 + sd.mismatch_delta;
        Self {
            layout,
            noise_sigma: params.calib.sigma0 / (1.0 + gain * gain).sqrt(),
        }
    }

    pub fn noiseless(layout: WaveformLayout) -> Self {
        Self {
            layout,
            noise_sigma: 0.0,
        }
    }
}

/// Synthesize the raw output for a contiguous run of gates.
///
/// In self-differencing mode each avalanche's height above the baseline
/// is drawn from the per-carrier gain model (mean `V_k - v0`, variance
/// `k (sigma1^2 - sigma0^2)`); in Geiger mode it is the gate's saturated
/// peak value.
pub fn synth_gate_train(
    detector: &Detector,
    outcomes: &[GateOutcome],
    params: &ResponseParams,
    opts: &SynthOptions,
    seed: RunSeed,
) -> Result<Waveform> {
    opts.layout.validate()?;
    let first_gate = outcomes.first().ok_or(Error::EmptyInput)?.gate_index;
    if outcomes
        .windows(2)
        .any(|w| w[1].gate_index != w[0].gate_index + 1)
    {
        return Err(Error::Usage("outcomes must cover consecutive gate indices".into()));
    }
    let p = opts.layout.samples_per_gate;
    let streams = GateStreams::new(seed, Domain::Waveform);
    let calib = &params.calib;
    let per_carrier_var = calib.sigma1 * calib.sigma1 - calib.sigma0 * calib.sigma0;
    let noise = (opts.noise_sigma > 0.0).then(|| Normal::new(0.0, opts.noise_sigma).expect("positive"));

    let samples: Vec<f64> = outcomes
        .par_iter()
        .flat_map_iter(|o| {
            let mut rng = streams.rng(o.gate_index);
            let height = match (detector.mode, o.k_detected) {
                (_, 0) => 0.0,
                (Mode::SelfDifferencing, k) => {
                    let mean = calib.peak_mean(k as usize) - calib.v0;
                    let sd = (k as f64 * per_carrier_var).sqrt();
                    mean + sd * Normal::new(0.0, 1.0).expect("unit").sample(&mut rng)
                }
                (Mode::GatedGeiger, _) => o.peak_mv,
            };
            (0..p)
                .map(|i| {
                    let x = i as f64;
                    let n = noise.map_or(0.0, |d| d.sample(&mut rng));
                    opts.layout.capacitive(x, params.cap_response_amp)
                        + height * opts.layout.avalanche(x)
                        + n
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Waveform {
        sample_period_ns: detector.gate_period_ns() / p as f64,
        samples,
        gate_period_samples: p,
        first_gate,
    })
}

/// `out[i] = w[i] - (1 + delta) w[i - P]`; the first period is dropped.
pub fn self_difference(w: &Waveform, sd: &SdParams) -> Result<Waveform> {
    sd.validate()?;
    let p = w.gate_period_samples * sd.delay_periods;
    if w.samples.len() < 2 * p {
        return Err(Error::Usage("self-differencing needs at least two gate periods".into()));
    }
    let gain = 1.0 + sd.mismatch_delta;
    let samples = w.samples[p..]
        .iter()
        .zip(&w.samples)
        .map(|(now, delayed)| now - gain * delayed)
        .collect();
    Ok(Waveform {
        sample_period_ns: w.sample_period_ns,
        samples,
        gate_period_samples: w.gate_period_samples,
        first_gate: w.first_gate + sd.delay_periods as u64,
    })
}

/// Maximum sample inside each gate's analysis window.
pub fn extract_peaks(w: &Waveform, layout: &WaveformLayout) -> Result<Vec<(u64, f64)>> {
    layout.validate()?;
    let p = w.gate_period_samples;
    let win = layout.window_range();
    Ok(w.samples
        .chunks_exact(p)
        .enumerate()
        .map(|(g, gate)| {
            let peak = gate[win.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (w.first_gate + g as u64, peak)
        })
        .collect())
}

/// Arm mismatch for which a noiseless dark gate peaks at `target` mV
/// after self-differencing, found by bisection on `[-0.1, 0]`.
pub fn solve_mismatch(target: f64, params: &ResponseParams, layout: &WaveformLayout) -> Result<f64> {
    layout.validate()?;
    let p = layout.samples_per_gate;
    let period: Vec<f64> = (0..p)
        .map(|i| layout.capacitive(i as f64, params.cap_response_amp))
        .collect();
    let win = layout.window_range();
    let residual_peak = |delta: f64| {
        win.clone()
            .map(|i| period[i] - (1.0 + delta) * period[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (mut lo, mut hi) = (-0.1, 0.0);
    if !(residual_peak(lo) >= target && residual_peak(hi) <= target) {
        return Err(Error::Usage(format!(
            "a {target} mV residual is out of reach for |delta| < 0.1 at {} mV capacitive amplitude",
            params.cap_response_amp
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual_peak(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Discriminator level needed on a dark waveform: the highest per-phase
/// mean plus five per-phase standard deviations. An avalanche must reach
/// this height to stand 5 sigma clear of the dark response.
pub fn min_detectable_amplitude(dark: &Waveform) -> f64 {
    let p = dark.gate_period_samples;
    let gates = dark.n_gates();
    (0..p)
        .map(|phase| {
            let vals = (0..gates).map(|g| dark.samples[g * p + phase]);
            let n = gates as f64;
            let mean = vals.clone().sum::<f64>() / n;
            let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            mean + 5.0 * var.sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, DetectorConfig, SourceConfig};
    use crate::response::BiasMaps;

    fn detector() -> Detector {
        validate_config(&DetectorConfig::default(), &SourceConfig::default(), &BiasMaps::default())
            .unwrap()
            .0
    }

    fn dark(n: u64) -> Vec<GateOutcome> {
        (0..n)
            .map(|g| GateOutcome {
                gate_index: g,
                n_incident: 0,
                k_detected: 0,
                peak_mv: 0.0,
            })
            .collect()
    }

    #[test]
    fn noiseless_dark_train_is_periodic() {
        let opts = SynthOptions::noiseless(WaveformLayout::default());
        let w = synth_gate_train(&detector(), &dark(6), &ResponseParams::default(), &opts, RunSeed(1))
            .unwrap();
        let p = w.gate_period_samples;
        assert!(w.samples[p..].iter().zip(&w.samples).all(|(a, b)| a == b));
        let sd = self_difference(&w, &SdParams::balanced()).unwrap();
        assert!(sd.peak_abs() <= 1e-9 * w.peak_abs());
    }

    #[test]
    fn gate_period_at_622_mhz() {
        assert!((detector().gate_period_ns() - 1.608).abs() < 1e-3);
    }

    #[test]
    fn avalanche_changes_only_its_own_gate() {
        let opts = SynthOptions::noiseless(WaveformLayout::default());
        let params = ResponseParams::default();
        let base = dark(5);
        let mut lit = base.clone();
        lit[2].k_detected = 1;
        let a = synth_gate_train(&detector(), &base, &params, &opts, RunSeed(2)).unwrap();
        let b = synth_gate_train(&detector(), &lit, &params, &opts, RunSeed(2)).unwrap();
        let p = a.gate_period_samples;
        for (i, (x, y)) in a.samples.iter().zip(&b.samples).enumerate() {
            if i / p != 2 {
                assert_eq!(x, y, "sample {i}");
            }
        }
        assert!(b.samples[2 * p..3 * p] != a.samples[2 * p..3 * p]);

        // after differencing: positive in gate 2, mirrored in gate 3
        let sd = SdParams::balanced();
        let da = self_difference(&a, &sd).unwrap();
        let db = self_difference(&b, &sd).unwrap();
        let diff: Vec<f64> = db.samples.iter().zip(&da.samples).map(|(x, y)| x - y).collect();
        let gate = |g: u64| {
            let off = (g - db.first_gate) as usize * p;
            &diff[off..off + p]
        };
        let max2 = gate(2).iter().cloned().fold(f64::MIN, f64::max);
        let min3 = gate(3).iter().cloned().fold(f64::MAX, f64::min);
        assert!(max2 > 0.0);
        assert!((min3 + max2).abs() < 1e-12);
    }

    #[test]
    fn matched_mismatch_gives_baseline_level() {
        let params = ResponseParams::default();
        let layout = WaveformLayout::default();
        let sd = SdParams::matched(&params, &layout).unwrap();
        assert!(sd.mismatch_delta < 0.0 && sd.mismatch_delta > -0.1);
        let w = synth_gate_train(&detector(), &dark(4), &params, &SynthOptions::noiseless(layout), RunSeed(0))
            .unwrap();
        let out = self_difference(&w, &sd).unwrap();
        for (_, peak) in extract_peaks(&out, &layout).unwrap() {
            assert!((peak - 4.7).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let layout = WaveformLayout {
            samples_per_gate: 6,
            ..WaveformLayout::default()
        };
        let r = synth_gate_train(
            &detector(),
            &dark(3),
            &ResponseParams::default(),
            &SynthOptions::noiseless(layout),
            RunSeed(0),
        );
        assert!(r.is_err());
    }
}
