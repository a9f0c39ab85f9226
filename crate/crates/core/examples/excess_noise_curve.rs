//! Excess noise factor against mean gain over a range of excess biases.
//!
//! cargo run --release --example excess_noise_curve [out_dir]

use pnrsim::experiment::{run_noisecurve, Command, ExperimentSpec};

fn main() -> pnrsim::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/excess_noise_curve".into());
    let mut spec = ExperimentSpec::new(Command::Noisecurve, &out)
        .with_seed(13)
        .with_mu(0.15)
        .with_gates(300_000);
    spec.vex_list = Some(vec![1.0, 1.3, 1.5, 1.85, 2.2]);
    let (report, _) = run_noisecurve(&spec)?;
    for e in &report.entries {
        match (&e.point, &e.log) {
            (Some(p), _) => println!("Vex {:.2} V  <M> = {:.3e}  F = {:.4}", p.v_ex, p.mean_gain, p.excess_noise),
            (None, log) => println!("Vex {:.2} V  failed: {}", e.v_ex, log.as_deref().unwrap_or("")),
        }
    }
    if let Some(s) = report.slope_per_decade {
        println!("dF/dlog10<M> = {s:.4}");
    }
    let lin = &report.linear_mode_reference;
    println!("linear-mode reference: <M> = {:.0}, F = {:.2}", lin.mean_gain, lin.excess_noise_f);
    Ok(())
}
