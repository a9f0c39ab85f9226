//! Simulate and analyse the default flux grid; the 0-photon fraction falls
//! as the flux rises.
//!
//! cargo run --release --example flux_sweep [out_dir]

use pnrsim::experiment::{run_sweep, Command, ExperimentSpec};

fn main() -> pnrsim::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/flux_sweep".into());
    let spec = ExperimentSpec::new(Command::Sweep, &out).with_seed(11).with_gates(200_000);
    let (rows, files) = run_sweep(&spec)?;
    println!("{:>6} {:>8} {:>8} {:>7} {:>7} {:>7}", "mu", "mu_hat", "mu_p0", "chi2", "P(0)", "P(1)");
    for r in &rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:>6} {:>8} {:>8} {:>7} {:>7} {:>7}",
            r.mu,
            f(r.mu_hat),
            f(r.mu_hat_p0),
            f(r.reduced_chi2),
            f(r.fraction_0),
            f(r.fraction_1)
        );
    }
    println!("{} files under {out}", files.len());
    Ok(())
}
