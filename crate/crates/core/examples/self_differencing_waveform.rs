//! Build a gated output waveform, cancel the capacitive transient by
//! subtracting the one-period-delayed copy, and compare detection thresholds.
//!
//! cargo run --release --example self_differencing_waveform

use pnrsim::config::{validate_config, DetectorConfig, SourceConfig};
use pnrsim::response::{BiasMaps, ResponseParams};
use pnrsim::seed::RunSeed;
use pnrsim::simulate::{GateOutcome, Simulator};
use pnrsim::waveform::{
    extract_peaks, min_detectable_amplitude, self_difference, synth_gate_train, SdParams, SynthOptions,
    WaveformLayout,
};

fn main() -> pnrsim::Result<()> {
    let params = ResponseParams::default();
    let layout = WaveformLayout::default();
    let sd = SdParams::matched(&params, &layout)?;
    let opts = SynthOptions::for_readout(&params, &sd, layout);

    let source = SourceConfig {
        mu_detected: 0.5,
        ..SourceConfig::default()
    };
    let (detector, source) = validate_config(&DetectorConfig::default(), &source, &BiasMaps::default())?;
    let outcomes = Simulator::new(detector.clone(), source, params.clone(), RunSeed(3))?.run(4_000, 4);

    let raw = synth_gate_train(&detector, &outcomes, &params, &opts, RunSeed(3))?;
    let diff = self_difference(&raw, &sd)?;
    println!("arm mismatch delta = {:.5}", sd.mismatch_delta);
    println!("samples per gate {}, sample period {} ns", raw.gate_period_samples, raw.sample_period_ns);

    let dark: Vec<_> = outcomes
        .iter()
        .map(|o| GateOutcome {
            k_detected: 0,
            ..o.clone()
        })
        .collect();
    let dark_raw = synth_gate_train(&detector, &dark, &params, &opts, RunSeed(4))?;
    let raw_thr = min_detectable_amplitude(&dark_raw);
    let sd_thr = min_detectable_amplitude(&self_difference(&dark_raw, &sd)?);
    println!("minimum detectable amplitude: raw {raw_thr:.2} mV, self-differenced {sd_thr:.3} mV");

    let peaks = extract_peaks(&diff, &layout)?;
    for (gate, v) in peaks.iter().take(12) {
        let k = outcomes.iter().find(|o| o.gate_index == *gate).map_or(0, |o| o.k_detected);
        println!("gate {gate:>3}: k = {k}, peak {v:.3} mV");
    }
    Ok(())
}
