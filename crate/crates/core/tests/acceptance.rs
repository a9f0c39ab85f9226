//! Acceptance criteria 1-10. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::time::Instant;

use pnrsim::analysis::classify::Classifier;
use pnrsim::analysis::fit::{fit_free_gaussians, fit_two_gaussians, Component};
use pnrsim::analysis::flux::{estimate_mu_mle, estimate_mu_p0, DEFAULT_N_MAX};
use pnrsim::analysis::histogram::{build_histogram, DEFAULT_BIN_WIDTH, DEFAULT_SD_RANGE};
use pnrsim::analysis::modes::{count_modes, ModeOptions};
use pnrsim::analysis::noise::{excess_noise, log_gain_slope, LINEAR_MODE_REFERENCE};
use pnrsim::calibration::Calibration;
use pnrsim::config::{validate_config, DetectorConfig, SourceConfig};
use pnrsim::experiment::{
    self, geiger_histogram_report, run_noisecurve, simulate_histogram, Command, ExperimentSpec,
};
use pnrsim::response::{BiasMaps, ResponseParams};
use pnrsim::seed::RunSeed;
use pnrsim::simulate::{default_shards, GateOutcome, Simulator};
use pnrsim::waveform::{
    min_detectable_amplitude, self_difference, synth_gate_train, SdParams, SynthOptions, WaveformLayout,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn simulator(mu: f64, seed: u64) -> Simulator {
    let (det, src) = validate_config(
        &DetectorConfig::default(),
        &SourceConfig {
            mu_detected: mu,
            ..SourceConfig::default()
        },
        &BiasMaps::default(),
    )
    .unwrap();
    Simulator::new(det, src, ResponseParams::default(), RunSeed(seed)).unwrap()
}

fn sd_peaks(mu: f64, gates: u64, seed: u64) -> Vec<f64> {
    simulator(mu, seed).illuminated_peaks(gates, default_shards())
}

fn c1_histogram_peaks_and_flux() -> Outcome {
    let peaks = sd_peaks(1.49, 200_000, 7);
    let hist = build_histogram(&peaks, DEFAULT_BIN_WIDTH, Some(DEFAULT_SD_RANGE)).unwrap();
    let mle = estimate_mu_mle(&hist, &Calibration::reference(), DEFAULT_N_MAX).unwrap();
    let mu_ok = (mle.mu_hat - 1.49).abs() <= 0.03;
    let chi_ok = mle.reduced_chi2 <= 1.5;

    let mut top: Vec<f64> = hist.local_maxima(2.0).iter().take(5).map(|m| m.0).collect();
    top.sort_by(f64::total_cmp);
    let targets = [4.7, 8.4, 11.5, 14.6, 17.6];
    let maxima_ok = top.len() == 5 && top.iter().zip(targets).all(|(m, t)| (m - t).abs() <= 0.15);
    outcome(
        mu_ok && chi_ok && maxima_ok,
        format!(
            "mu_hat={:.4} ({}) reduced_chi2={:.3} ({}) top-5 maxima={:?} ({})",
            mle.mu_hat,
            ok(mu_ok),
            mle.reduced_chi2,
            ok(chi_ok),
            top.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            ok(maxima_ok)
        ),
    )
}

fn c2_calibration_round_trip() -> Outcome {
    let truth = [4.7, 0.175, 8.4, 0.96];
    let seeds = 20u64;
    let mut passes = 0;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let peaks = sd_peaks(0.15, 1_000_000, 1000 + seed);
        let hist = build_histogram(&peaks, DEFAULT_BIN_WIDTH, Some(DEFAULT_SD_RANGE)).unwrap();
        let fit = match fit_two_gaussians(&hist) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let est = [fit.v0, fit.sigma0, fit.v1, fit.sigma1];
        let se = [fit.stderr[0], fit.stderr[1], fit.stderr[3], fit.stderr[4]];
        let pulls: Vec<f64> = (0..4).map(|i| ((est[i] - truth[i]) / se[i]).abs()).collect();
        let max_pull = pulls.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(max_pull);
        if max_pull <= 3.0 {
            passes += 1;
        }
    }
    let rate = passes as f64 / seeds as f64;
    outcome(
        rate >= 0.95,
        format!("{passes}/{seeds} seeds within 3 SE (worst pull {worst:.2})"),
    )
}

fn c3_width_scaling() -> Outcome {
    let cal = Calibration::reference();
    let peaks = sd_peaks(2.0, 1_000_000, 33);
    let hist = build_histogram(&peaks, DEFAULT_BIN_WIDTH, Some((3.0, 40.0))).unwrap();
    let total = peaks.len() as f64;
    let mut p = (-2.0f64).exp();
    let init: Vec<Component> = (0..=8usize)
        .map(|n| {
            if n > 0 {
                p *= 2.0 / n as f64;
            }
            Component {
                mean: cal.peak_mean(n),
                sigma: cal.sqrt_n_sigma(n),
                area: p * total,
            }
        })
        .collect();
    let (comps, _) = match fit_free_gaussians(&hist, &init) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("free fit failed: {e}")),
    };
    let r2 = comps[2].sigma / comps[1].sigma;
    let r3 = comps[3].sigma / comps[1].sigma;
    let ok2 = (r2 / 2f64.sqrt() - 1.0).abs() <= 0.10;
    let ok3 = (r3 / 3f64.sqrt() - 1.0).abs() <= 0.10;
    outcome(
        ok2 && ok3,
        format!("sigma2/sigma1={r2:.4} (sqrt2=1.4142) sigma3/sigma1={r3:.4} (sqrt3=1.7321)"),
    )
}

/// Composite Simpson integral of the generating mixture density over
/// `[lo, hi]`.
fn mixture_mass_simpson(lo: f64, hi: f64, weights: &[f64], means: &[f64], sigmas: &[f64]) -> f64 {
    let lo = lo.max(-50.0);
    let hi = hi.min(300.0);
    if hi <= lo {
        return 0.0;
    }
    let n = 2 * ((hi - lo) / 0.0005).ceil() as usize;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| -> f64 {
        weights
            .iter()
            .zip(means)
            .zip(sigmas)
            .map(|((w, m), s)| {
                let z = (x - m) / s;
                w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum()
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn c4_poisson_area_consistency() -> Outcome {
    let cal = Calibration::reference();
    let classifier = Classifier::new(&cal, DEFAULT_N_MAX);
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (i, mu) in [0.5, 1.49, 3.0].into_iter().enumerate() {
        let peaks = sd_peaks(mu, 1_000_000, 400 + i as u64);
        let empirical = classifier.class_fractions(&peaks);
        let n_max = 40usize;
        let mut weights = Vec::with_capacity(n_max + 1);
        let mut p = (-mu).exp();
        for n in 0..=n_max {
            if n > 0 {
                p *= mu / n as f64;
            }
            weights.push(p);
        }
        let means: Vec<f64> = (0..=n_max).map(|n| cal.peak_mean(n)).collect();
        let sigmas: Vec<f64> = (0..=n_max)
            .map(|n| (cal.sigma0.powi(2) + n as f64 * (cal.sigma1.powi(2) - cal.sigma0.powi(2))).sqrt())
            .collect();
        let mut mu_worst = 0.0f64;
        for class in 0..=12usize {
            let (lo, hi) = classifier.class_interval(class);
            let oracle = mixture_mass_simpson(lo, hi, &weights, &means, &sigmas);
            mu_worst = mu_worst.max((empirical[class] - oracle).abs());
        }
        worst = worst.max(mu_worst);
        details.push(format!("mu={mu}: max|diff|={mu_worst:.5}"));
    }
    outcome(worst <= 0.005, details.join(", "))
}

fn c5_flux_estimators() -> Outcome {
    let cal = Calibration::reference();
    let classifier = Classifier::new(&cal, DEFAULT_N_MAX);
    let grid = [0.2, 0.8, 1.49, 3.0];
    let mut all_ok = true;
    let mut f0 = Vec::new();
    let mut f1 = Vec::new();
    let mut details = Vec::new();
    for (i, &mu) in grid.iter().enumerate() {
        let peaks = sd_peaks(mu, 1_000_000, 500 + i as u64);
        let hist = build_histogram(&peaks, DEFAULT_BIN_WIDTH, Some(DEFAULT_SD_RANGE)).unwrap();
        let mle = estimate_mu_mle(&hist, &cal, DEFAULT_N_MAX).unwrap().mu_hat;
        let p0 = estimate_mu_p0(&hist, &cal).map(|e| e.mu_hat).unwrap_or(f64::NAN);
        let ok_mle = (mle - mu).abs() <= 0.02 * mu;
        let ok_p0 = (p0 - mu).abs() <= 0.05 * mu;
        all_ok &= ok_mle && ok_p0;
        let fr = classifier.histogram_fractions(&hist);
        f0.push(fr[0]);
        f1.push(fr[1]);
        details.push(format!("mu={mu}: mle={mle:.4} p0={p0:.4}"));
    }
    let decreasing = f0.windows(2).all(|w| w[1] < w[0]);
    let argmax = f1
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| grid[i])
        .unwrap();
    let peak_ok = (0.8..=1.6).contains(&argmax);
    outcome(
        all_ok && decreasing && peak_ok,
        format!(
            "{}; f0 decreasing={decreasing}; f1 max at mu={argmax}",
            details.join(", ")
        ),
    )
}

fn c6_excess_noise() -> Outcome {
    let f = excess_noise(&Calibration::reference()).unwrap().value;
    let arith_ok = (f - 1.065).abs() <= 0.001;
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Command::Noisecurve, dir.path())
        .with_seed(66)
        .with_mu(experiment::DEFAULT_CALIBRATION_MU)
        .with_gates(1_000_000);
    spec.vex_list = Some(vec![1.0, 1.3, 1.5, 1.85, 2.2]);
    let (report, _) = match run_noisecurve(&spec) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("noise curve failed: {e}")),
    };
    let points: Vec<_> = report.entries.iter().filter_map(|e| e.point).collect();
    let complete = points.len() == report.entries.len();
    let gains: Vec<f64> = points.iter().map(|p| p.mean_gain).collect();
    let g_min = gains.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_max = gains.iter().cloned().fold(0.0, f64::max);
    let span_ok = g_min <= 1.1e5 && g_max >= 1.9e6;
    let range_ok = points.iter().all(|p| (1.0..=1.3).contains(&p.excess_noise));
    let slope = log_gain_slope(&points);
    let slope_ok = slope.abs() <= 0.05;
    let reference_ok = report.linear_mode_reference.mean_gain == LINEAR_MODE_REFERENCE.0
        && report.linear_mode_reference.excess_noise_f == 5.5;
    outcome(
        arith_ok && complete && span_ok && range_ok && slope_ok && reference_ok,
        format!(
            "F(calibration)={f:.4}; F over <M> in [{g_min:.3e}, {g_max:.3e}] = {:?}; slope={slope:.4}; reference F={} at M={}",
            points.iter().map(|p| (p.excess_noise * 1e4).round() / 1e4).collect::<Vec<_>>(),
            report.linear_mode_reference.excess_noise_f,
            report.linear_mode_reference.mean_gain
        ),
    )
}

fn dark_train(n: u64) -> Vec<GateOutcome> {
    (0..n)
        .map(|g| GateOutcome {
            gate_index: g,
            n_incident: 0,
            k_detected: 0,
            peak_mv: 0.0,
        })
        .collect()
}

fn c7_self_differencing() -> Outcome {
    let params = ResponseParams::default();
    let layout = WaveformLayout::default();
    let (det, _) = validate_config(&DetectorConfig::default(), &SourceConfig::default(), &BiasMaps::default()).unwrap();
    let dark = dark_train(64);
    let clean = synth_gate_train(&det, &dark, &params, &SynthOptions::noiseless(layout), RunSeed(1)).unwrap();
    let diff = self_difference(&clean, &SdParams::balanced()).unwrap();
    let ratio = diff.peak_abs() / clean.peak_abs();
    let cancel_ok = ratio <= 1e-9;

    let sd = SdParams::matched(&params, &layout).unwrap();
    let opts = SynthOptions::for_readout(&params, &sd, layout);
    let noisy = synth_gate_train(&det, &dark_train(20_000), &params, &opts, RunSeed(2)).unwrap();
    let raw_thr = min_detectable_amplitude(&noisy);
    let sd_thr = min_detectable_amplitude(&self_difference(&noisy, &sd).unwrap());
    let gain_ok = sd_thr <= raw_thr / 10.0;
    outcome(
        cancel_ok && gain_ok,
        format!(
            "balanced residual/peak={ratio:.2e}; 5-sigma threshold raw={raw_thr:.3} mV, sd={sd_thr:.3} mV (x{:.1})",
            raw_thr / sd_thr
        ),
    )
}

fn c8_geiger_blindness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut base = ExperimentSpec::new(Command::GeigerCompare, dir.path()).with_seed(88).with_gates(100_000);
    base.detector = experiment::geiger_detector(&base.detector);
    let vsat = base.response.vsat_geiger;
    let reports: Vec<_> = [0.11, 10.6]
        .into_iter()
        .map(|mu| {
            let run = simulate_histogram(&base.clone().with_mu(mu)).unwrap();
            geiger_histogram_report(mu, &run, vsat)
        })
        .collect();
    let modes_ok = reports.iter().all(|r| r.mode_count == 2);
    let (v_lo, v_hi) = (
        reports[0].light_peak_variance.unwrap_or(f64::NAN),
        reports[1].light_peak_variance.unwrap_or(f64::NAN),
    );
    let narrows = v_hi < v_lo;
    let no_third = reports
        .iter()
        .all(|r| r.component_test.is_some_and(|t| !t.third_component_significant()));
    let zero = simulate_histogram(&base.clone().with_mu(0.0)).unwrap();
    let zero_modes = count_modes(&zero.histogram, ModeOptions::default());
    outcome(
        modes_ok && narrows && no_third && zero_modes == 1,
        format!(
            "modes={:?} light variance {v_lo:.3} -> {v_hi:.3}; delta AIC={:?}; mu=0 modes={zero_modes}",
            reports.iter().map(|r| r.mode_count).collect::<Vec<_>>(),
            reports
                .iter()
                .map(|r| r.component_test.map(|t| (t.delta_aic * 1e3).round() / 1e3))
                .collect::<Vec<_>>()
        ),
    )
}

fn c9_dark_counts() -> Outcome {
    let cal = Calibration::reference();
    let classifier = Classifier::new(&cal, DEFAULT_N_MAX);
    let gates = 10_000_000u64;
    let outcomes = simulator(0.0, 99).run(gates, default_shards());
    let nonzero = outcomes.iter().filter(|o| classifier.classify(o.peak_mv) > 0).count();
    let avalanches = outcomes.iter().filter(|o| o.k_detected > 0).count();
    let rate = nonzero as f64 / gates as f64;
    outcome(
        rate <= 5e-6,
        format!(
            "nonzero-class rate={rate:.3e} (limit 5e-6); dark avalanche rate={:.3e}; 0/1 boundary={:.4} mV",
            avalanches as f64 / gates as f64,
            classifier.boundaries[0]
        ),
    )
}

fn c10_determinism() -> Outcome {
    let mut mismatched = Vec::new();
    let commands: Vec<(Command, u64, Option<Vec<f64>>, Option<Vec<f64>>, f64)> = vec![
        (Command::Simulate, 50_000, None, None, 1.49),
        (Command::Waveform, 2_000, None, None, 1.49),
        (Command::Calibrate, 200_000, None, None, 0.15),
        (Command::Analyze, 50_000, None, None, 1.49),
        (Command::Sweep, 20_000, Some(vec![0.4, 1.49]), None, 1.49),
        (Command::Noisecurve, 200_000, None, Some(vec![1.5, 2.2]), 0.15),
        (Command::GeigerCompare, 20_000, None, None, 1.49),
    ];
    for (cmd, gates, mu_list, vex_list, mu) in commands {
        let mut snapshots = Vec::new();
        for shards in [1usize, 1, 7] {
            let dir = tempfile::tempdir().unwrap();
            let mut spec = ExperimentSpec::new(cmd, dir.path()).with_seed(1010).with_gates(gates).with_mu(mu);
            spec.mu_list = mu_list.clone();
            spec.vex_list = vex_list.clone();
            spec.shards = shards;
            let mut files = match experiment::run(&spec) {
                Ok(f) => f,
                Err(e) => {
                    mismatched.push(format!("{cmd}: {e}"));
                    break;
                }
            };
            files.sort();
            let snap: Vec<(String, Vec<u8>)> = files
                .iter()
                .map(|f| {
                    (
                        f.strip_prefix(dir.path()).unwrap().display().to_string(),
                        std::fs::read(f).unwrap(),
                    )
                })
                .collect();
            snapshots.push(snap);
        }
        if snapshots.len() == 3 && !(snapshots[0] == snapshots[1] && snapshots[1] == snapshots[2]) {
            mismatched.push(cmd.to_string());
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "all 7 commands byte-identical across repeats and shard counts 1/7".into()
        } else {
            format!("differences: {mismatched:?}")
        },
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "out of tolerance"
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::args()
        .skip(1)
        .find(|a| !a.starts_with('-'))
        .map(|a| a.split(',').filter_map(|s| s.parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "histogram peaks and flux at mu=1.49", c1_histogram_peaks_and_flux),
        (2, "calibration round-trip over 20 seeds", c2_calibration_round_trip),
        (3, "sqrt(N) width scaling", c3_width_scaling),
        (4, "class fractions vs integrated mixture", c4_poisson_area_consistency),
        (5, "flux estimators and class-fraction trends", c5_flux_estimators),
        (6, "excess noise factor and noise curve", c6_excess_noise),
        (7, "self-differencing cancellation and threshold", c7_self_differencing),
        (8, "gated-Geiger number blindness", c8_geiger_blindness),
        (9, "dark-count classification rate", c9_dark_counts),
        (10, "determinism across repeats and shards", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.is_empty() && !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let r = run();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s]",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            t.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
