//! Fit the 0- and 1-photon peaks of a weak-illumination run and derive the
//! excess noise factor.
//!
//! cargo run --release --example calibrate_low_flux

use pnrsim::analysis::fit::fit_two_gaussians;
use pnrsim::analysis::noise::excess_noise;
use pnrsim::experiment::{simulate_histogram, Command, ExperimentSpec, DEFAULT_CALIBRATION_MU};

fn main() -> pnrsim::Result<()> {
    let spec = ExperimentSpec::new(Command::Calibrate, std::env::temp_dir())
        .with_seed(42)
        .with_mu(DEFAULT_CALIBRATION_MU)
        .with_gates(1_000_000);
    let run = simulate_histogram(&spec)?;
    let fit = fit_two_gaussians(&run.histogram)?;
    println!("v0     = {:.4} +/- {:.4} mV", fit.v0, fit.stderr[0]);
    println!("sigma0 = {:.4} +/- {:.4} mV", fit.sigma0, fit.stderr[1]);
    println!("v1     = {:.4} +/- {:.4} mV", fit.v1, fit.stderr[3]);
    println!("sigma1 = {:.4} +/- {:.4} mV", fit.sigma1, fit.stderr[4]);
    println!("reduced chi2 = {:.3} after {} iterations", fit.reduced_chi2, fit.iterations);
    let cal = fit.calibration();
    let f = excess_noise(&cal)?;
    println!("excess noise factor F = {:.4}", f.value);
    Ok(())
}
