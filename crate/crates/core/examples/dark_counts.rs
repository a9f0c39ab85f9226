//! Run with no light and count gates that the classifier places above the
//! 0-photon class, next to the configured dark count probability.
//!
//! cargo run --release --example dark_counts

use pnrsim::analysis::classify::Classifier;
use pnrsim::analysis::flux::DEFAULT_N_MAX;
use pnrsim::calibration::Calibration;
use pnrsim::config::{validate_config, DetectorConfig, SourceConfig};
use pnrsim::response::{BiasMaps, ResponseParams};
use pnrsim::seed::RunSeed;
use pnrsim::simulate::Simulator;

fn main() -> pnrsim::Result<()> {
    let source = SourceConfig {
        mu_detected: 0.0,
        ..SourceConfig::default()
    };
    let cfg = DetectorConfig::default();
    let (detector, source) = validate_config(&cfg, &source, &BiasMaps::default())?;
    let gates = 10_000_000;
    let outcomes = Simulator::new(detector, source, ResponseParams::default(), RunSeed(5))?.run(gates, 8);

    let classifier = Classifier::new(&Calibration::reference(), DEFAULT_N_MAX);
    let avalanches = outcomes.iter().filter(|o| o.k_detected > 0).count();
    let nonzero = outcomes.iter().filter(|o| classifier.classify(o.peak_mv) > 0).count();
    println!("0/1 boundary at {:.4} mV", classifier.boundaries[0]);
    println!("dark count probability per gate: {:.2e}", cfg.dark_count_prob);
    println!("avalanching gates: {avalanches} ({:.2e})", avalanches as f64 / gates as f64);
    println!("gates classified >= 1: {nonzero} ({:.2e})", nonzero as f64 / gates as f64);
    Ok(())
}
