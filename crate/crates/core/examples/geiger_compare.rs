//! Conventional gated-Geiger histograms at low and high flux: two modes
//! each, and the light peak narrows instead of splitting.
//!
//! cargo run --release --example geiger_compare [out_dir]

use pnrsim::experiment::{run_geiger_compare, Command, ExperimentSpec};

fn main() -> pnrsim::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/geiger_compare".into());
    let spec = ExperimentSpec::new(Command::GeigerCompare, &out).with_seed(9).with_gates(200_000);
    let (report, _) = run_geiger_compare(&spec)?;
    for h in &report.histograms {
        println!("mu = {}: {} modes at {:?}", h.mu, h.mode_count, h.modes.iter().map(|m| m.0).collect::<Vec<_>>());
        if let Some(v) = h.light_peak_variance {
            println!("  light peak variance {v:.3} mV^2");
        }
        if let Some(t) = &h.component_test {
            println!("  extra photon-number component: delta AIC {:.2}", t.delta_aic);
        }
    }
    println!("light peak narrows: {:?}", report.light_peak_narrows);
    Ok(())
}
