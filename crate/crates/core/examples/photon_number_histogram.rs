//! Simulate a self-differencing run at 1.49 photons per pulse, then print
//! the pulse-height histogram, the flux estimate and the class fractions.
//!
//! cargo run --release --example photon_number_histogram

use pnrsim::analysis::classify::Classifier;
use pnrsim::analysis::flux::{estimate_mu_mle, DEFAULT_N_MAX};
use pnrsim::analysis::histogram::{build_histogram, DEFAULT_BIN_WIDTH, DEFAULT_SD_RANGE};
use pnrsim::calibration::Calibration;
use pnrsim::config::{validate_config, DetectorConfig, SourceConfig};
use pnrsim::response::{BiasMaps, ResponseParams};
use pnrsim::seed::RunSeed;
use pnrsim::simulate::Simulator;

fn main() -> pnrsim::Result<()> {
    let source = SourceConfig {
        mu_detected: 1.49,
        ..SourceConfig::default()
    };
    let (detector, source) = validate_config(&DetectorConfig::default(), &source, &BiasMaps::default())?;
    let sim = Simulator::new(detector, source, ResponseParams::default(), RunSeed(7))?;
    let peaks = sim.illuminated_peaks(200_000, 8);
    let hist = build_histogram(&peaks, DEFAULT_BIN_WIDTH, Some(DEFAULT_SD_RANGE))?;

    let rebinned = 10;
    let max = hist.counts.chunks(rebinned).map(|c| c.iter().sum::<u64>()).max().unwrap_or(1);
    for (i, chunk) in hist.counts.chunks(rebinned).enumerate() {
        let n: u64 = chunk.iter().sum();
        let lo = hist.edge(i * rebinned);
        println!("{lo:6.2} mV {:>7} {}", n, "#".repeat((60 * n / max) as usize));
    }

    let cal = Calibration::reference();
    let mle = estimate_mu_mle(&hist, &cal, DEFAULT_N_MAX)?;
    println!("\nmu_hat = {:.4} +/- {:.4}, reduced chi2 = {:.3}", mle.mu_hat, mle.stderr, mle.reduced_chi2);
    let fractions = Classifier::new(&cal, DEFAULT_N_MAX).histogram_fractions(&hist);
    for (k, f) in fractions.iter().enumerate().take(6) {
        println!("P(class {k}) = {f:.4}");
    }
    println!("local maxima (mV): {:?}", hist.local_maxima(2.0).iter().map(|m| m.0).collect::<Vec<_>>());
    Ok(())
}
