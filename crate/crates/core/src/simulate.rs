//! Gate-by-gate simulation of a validated detector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Detector, Mode, Source};
use crate::error::Result;
use crate::response::{geiger_peak_voltage, sd_peak_voltage, ResponseParams};
use crate::seed::{Domain, GateStreams, RunSeed};
use crate::source::draw_gate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub gate_index: u64,
    pub n_incident: u64,
    pub k_detected: u64,
    #[serde(rename = "peak_mV")]
    pub peak_mv: f64,
}

#[derive(Clone)]
pub struct Simulator {
    detector: Detector,
    source: Source,
    response: ResponseParams,
    streams: GateStreams,
    mu_incident: f64,
}

impl Simulator {
    pub fn new(
        detector: Detector,
        source: Source,
        response: ResponseParams,
        seed: RunSeed,
    ) -> Result<Self> {
        response.validate()?;
        let mu_incident = source.mu_incident(detector.detection_efficiency);
        Ok(Self {
            detector,
            source,
            response,
            streams: GateStreams::new(seed, Domain::Gates),
            mu_incident,
        })
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn response(&self) -> &ResponseParams {
        &self.response
    }

    pub fn gate(&self, gate_index: u64) -> GateOutcome {
        let mut rng = self.streams.rng(gate_index);
        let draw = draw_gate(
            self.mu_incident,
            self.detector.detection_efficiency,
            self.detector.dark_count_prob,
            self.detector.is_illuminated(gate_index),
            &mut rng,
        )
        .expect("mean validated non-negative");
        let peak_mv = match self.detector.mode {
            Mode::SelfDifferencing => sd_peak_voltage(draw.k_detected, &self.response, &mut rng),
            Mode::GatedGeiger => geiger_peak_voltage(draw.k_detected, &self.response, &mut rng),
        };
        GateOutcome {
            gate_index,
            n_incident: draw.n_incident,
            k_detected: draw.k_detected,
            peak_mv,
        }
    }

    /// Gates `0..gates`, evaluated in `shards` parallel chunks and returned
    /// in gate order. The result does not depend on `shards`.
    pub fn run(&self, gates: u64, shards: usize) -> Vec<GateOutcome> {
        self.run_indices(gates, shards, |i| i)
    }

    /// The first `count` illuminated gates only (indices `0, L, 2L, ...`).
    /// Each outcome equals the corresponding entry of [`Simulator::run`].
    pub fn run_illuminated(&self, count: u64, shards: usize) -> Vec<GateOutcome> {
        let l = self.detector.illumination_decimation;
        self.run_indices(count, shards, |i| i * l)
    }

    fn run_indices(
        &self,
        count: u64,
        shards: usize,
        index: impl Fn(u64) -> u64 + Sync,
    ) -> Vec<GateOutcome> {
        let shards = shards.max(1) as u64;
        let chunk = count.div_ceil(shards).max(1);
        let ranges: Vec<_> = (0..shards)
            .map(|s| (s * chunk).min(count)..((s + 1) * chunk).min(count))
            .collect();
        let parts: Vec<Vec<GateOutcome>> = ranges
            .into_par_iter()
            .map(|r| r.map(|i| self.gate(index(i))).collect())
            .collect();
        parts.concat()
    }

    /// Peak voltages of the first `count` illuminated gates.
    pub fn illuminated_peaks(&self, count: u64, shards: usize) -> Vec<f64> {
        self.run_illuminated(count, shards)
            .into_iter()
            .map(|o| o.peak_mv)
            .collect()
    }
}

/// Default shard count: one per available thread.
pub fn default_shards() -> usize {
    rayon::current_num_threads()
}
