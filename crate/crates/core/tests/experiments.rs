//! Whole-command behaviour through the library entry points.

use std::fs;

use pnrsim::config::Mode;
use pnrsim::experiment::{
    run_analyze, run_geiger_compare, run_noisecurve, run_simulate, run_sweep, Command, ExperimentSpec,
    DEFAULT_MU_GRID,
};
use pnrsim::io::{read_histogram, read_noise_curve};
use pnrsim::Error;

#[test]
fn simulate_top_five_maxima_sit_on_the_peak_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::new(Command::Simulate, dir.path()).with_seed(7).with_mu(1.49).with_gates(200_000);
    run_simulate(&spec).unwrap();
    let hist = read_histogram(&dir.path().join("histogram.csv")).unwrap();
    let mut top: Vec<f64> = hist.local_maxima(2.0).iter().take(5).map(|m| m.0).collect();
    top.sort_by(f64::total_cmp);
    let targets = [4.7, 8.4, 11.5, 14.6, 17.6];
    assert_eq!(top.len(), 5, "{top:?}");
    for (m, t) in top.iter().zip(targets) {
        assert!((m - t).abs() <= 0.15, "maxima {top:?} vs {targets:?}");
    }
}

#[test]
fn simulate_single_gate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::new(Command::Simulate, dir.path()).with_seed(1).with_gates(1);
    let (run, _) = run_simulate(&spec).unwrap();
    assert_eq!(run.outcomes.len(), 1);
    assert_eq!(run.summary.gate_count, 1);
    let rows = fs::read_to_string(dir.path().join("outcomes.csv")).unwrap().lines().count();
    assert_eq!(rows, 2);
}

#[test]
fn simulate_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let spec = ExperimentSpec::new(Command::Simulate, d.path()).with_seed(3).with_gates(30_000);
        run_simulate(&spec).unwrap();
    }
    for f in ["histogram.csv", "outcomes.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_requires_seed_and_writable_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::new(Command::Simulate, dir.path()).with_gates(10);
    assert_eq!(run_simulate(&spec).unwrap_err().exit_code(), 2);

    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let spec = ExperimentSpec::new(Command::Simulate, blocker.join("sub")).with_seed(1).with_gates(10);
    let err = run_simulate(&spec).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(err.to_string().contains("sub"));
}

#[test]
fn sweep_default_grid_recovers_each_flux() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::new(Command::Sweep, dir.path()).with_seed(11).with_gates(200_000);
    let (rows, _) = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), DEFAULT_MU_GRID.len());
    for r in &rows {
        let mu_hat = r.mu_hat.unwrap();
        assert!((mu_hat / r.mu - 1.0).abs() <= 0.05, "mu {} -> {mu_hat}", r.mu);
        assert!(dir.path().join(format!("mu_{}", r.mu)).join("fit_result.json").exists());
    }
    let f0: Vec<f64> = rows.iter().map(|r| r.fraction_0.unwrap()).collect();
    assert!(f0.windows(2).all(|w| w[1] < w[0]), "{f0:?}");
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn single_flux_sweep_matches_simulate_and_analyze() {
    let sweep_dir = tempfile::tempdir().unwrap();
    let mut sweep = ExperimentSpec::new(Command::Sweep, sweep_dir.path()).with_seed(5).with_gates(40_000);
    sweep.mu_list = Some(vec![0.8]);
    run_sweep(&sweep).unwrap();

    let direct = tempfile::tempdir().unwrap();
    let analyze = ExperimentSpec::new(Command::Analyze, direct.path()).with_seed(5).with_gates(40_000).with_mu(0.8);
    run_analyze(&analyze).unwrap();

    let point = sweep_dir.path().join("mu_0.8");
    for f in ["histogram.csv", "outcomes.csv", "summary.json", "fit_result.json"] {
        assert_eq!(fs::read(point.join(f)).unwrap(), fs::read(direct.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_rejects_empty_list_and_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Command::Sweep, dir.path()).with_seed(5).with_gates(5_000);
    spec.mu_list = Some(vec![]);
    assert_eq!(run_sweep(&spec).unwrap_err().exit_code(), 2);

    spec.mu_list = Some(vec![-1.0, 0.8]);
    let (rows, _) = run_sweep(&spec).unwrap();
    assert!(rows[0].mu_hat.is_none() && rows[0].log.is_some());
    assert!(rows[1].mu_hat.is_some());
}

#[test]
fn geiger_defaults_show_two_modes_and_narrowing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::new(Command::GeigerCompare, dir.path()).with_seed(9).with_gates(100_000);
    let (report, _) = run_geiger_compare(&spec).unwrap();
    assert_eq!(report.histograms.len(), 2);
    for h in &report.histograms {
        assert_eq!(h.mode_count, 2, "mu {}: {:?}", h.mu, h.modes);
    }
    assert_eq!(report.light_peak_narrows, Some(true));
    assert!(dir.path().join("geiger_report.json").exists());
}

#[test]
fn geiger_without_light_has_one_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Command::GeigerCompare, dir.path()).with_seed(9).with_gates(50_000);
    spec.mu_list = Some(vec![0.0]);
    let (report, _) = run_geiger_compare(&spec).unwrap();
    assert_eq!(report.histograms[0].mode_count, 1);
}

#[test]
fn noisecurve_is_flat_and_reaches_high_gain() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Command::Noisecurve, dir.path())
        .with_seed(13)
        .with_mu(0.15)
        .with_gates(300_000);
    spec.vex_list = Some(vec![1.3, 1.5, 1.85, 2.2]);
    run_noisecurve(&spec).unwrap();
    let entries = read_noise_curve(&dir.path().join("noise_curve.csv")).unwrap();
    assert_eq!(entries.len(), 4);
    let points: Vec<_> = entries.iter().map(|e| e.point.clone().expect("fit failed")).collect();
    for p in &points {
        assert!((1.0..=1.3).contains(&p.excess_noise), "{p:?}");
    }
    assert!(points.windows(2).all(|w| w[0].mean_gain <= w[1].mean_gain));
    assert!(points.iter().map(|p| p.mean_gain).fold(0.0, f64::max) >= 1e6);
}

#[test]
fn noisecurve_empty_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Command::Noisecurve, dir.path()).with_seed(1);
    spec.vex_list = Some(vec![]);
    let err = run_noisecurve(&spec).unwrap_err();
    assert!(matches!(err, Error::Usage(_)), "{err}");
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn geiger_mode_simulate_uses_geiger_range() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(Command::Simulate, dir.path()).with_seed(2).with_gates(5_000);
    spec.detector.mode = Mode::GatedGeiger;
    let (run, _) = run_simulate(&spec).unwrap();
    assert!(run.summary.range_mv.0 < 0.0);
}
