//! Experiment orchestration: each command simulates and/or analyses, then
//! writes its artifacts under the output directory. A failing command
//! removes whatever it had already written.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::classify::Classifier;
use crate::analysis::fit::{fit_two_gaussians, TwoGaussianFit};
use crate::analysis::flux::{estimate_mu_mle, estimate_mu_p0, DEFAULT_N_MAX};
use crate::analysis::histogram::{build_histogram, Histogram, DEFAULT_BIN_WIDTH, DEFAULT_SD_RANGE};
use crate::analysis::mixture::{goodness, predict_mixture_with, MeanRule, WidthRule};
use crate::analysis::modes::{find_modes, photon_number_component_test, variance_above, ComponentTest, ModeOptions};
use crate::analysis::noise::{excess_noise, log_gain_slope, noise_curve, NoiseCurveEntry, NoisePoint, NoiseRun, LINEAR_MODE_REFERENCE};
use crate::calibration::Calibration;
use crate::config::{validate_config, Detector, DetectorConfig, Mode, Source, SourceConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::response::{BiasMaps, ResponseParams};
use crate::seed::RunSeed;
use crate::simulate::{GateOutcome, Simulator};
use crate::waveform::{
    extract_peaks, min_detectable_amplitude, self_difference, synth_gate_train, SdParams, SynthOptions,
    WaveformLayout,
};

/// Flux grid used by `sweep` when no list is given.
pub const DEFAULT_MU_GRID: [f64; 5] = [0.1, 0.4, 0.8, 1.49, 3.0];
/// Flux pair used by `geiger-compare` when no list is given.
pub const DEFAULT_GEIGER_MUS: [f64; 2] = [0.11, 10.6];
pub const DEFAULT_GEIGER_GATE_FREQUENCY: f64 = 100.0e3;
pub const DEFAULT_GEIGER_BIN_WIDTH: f64 = 0.5;
/// Flux used for calibration runs when none is configured.
pub const DEFAULT_CALIBRATION_MU: f64 = 0.15;
pub const DEFAULT_VEX_LIST: [f64; 5] = [1.0, 1.3, 1.5, 1.85, 2.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Waveform,
    Calibrate,
    Analyze,
    Sweep,
    Noisecurve,
    GeigerCompare,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Waveform,
        Command::Calibrate,
        Command::Analyze,
        Command::Sweep,
        Command::Noisecurve,
        Command::GeigerCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Waveform => "waveform",
            Command::Calibrate => "calibrate",
            Command::Analyze => "analyze",
            Command::Sweep => "sweep",
            Command::Noisecurve => "noisecurve",
            Command::GeigerCompare => "geiger-compare",
        }
    }

    /// Commands that draw random numbers and therefore need a seed.
    pub fn simulates(self) -> bool {
        !matches!(self, Command::Analyze)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command '{s}'"))
    }
}

/// Everything a command needs, already merged from defaults, config file
/// and flags.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: Command,
    pub detector: DetectorConfig,
    pub source: SourceConfig,
    /// Illuminated gates in self-differencing runs; all gates in Geiger
    /// runs.
    pub gates: u64,
    pub seed: Option<RunSeed>,
    pub output_path: PathBuf,
    pub bin_width: Option<f64>,
    pub mu_list: Option<Vec<f64>>,
    pub vex_list: Option<Vec<f64>>,
    /// Histogram to analyse instead of simulating one.
    pub input: Option<PathBuf>,
    /// Calibration document to analyse with instead of the default.
    pub calibration: Option<PathBuf>,
    pub response: ResponseParams,
    pub maps: BiasMaps,
    pub shards: usize,
}

impl ExperimentSpec {
    pub fn new(command: Command, output_path: impl Into<PathBuf>) -> Self {
        Self {
            command,
            detector: DetectorConfig::default(),
            source: SourceConfig::default(),
            gates: 200_000,
            seed: None,
            output_path: output_path.into(),
            bin_width: None,
            mu_list: None,
            vex_list: None,
            input: None,
            calibration: None,
            response: ResponseParams::default(),
            maps: BiasMaps::default(),
            shards: crate::simulate::default_shards(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(RunSeed(seed));
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.source.mu_detected = mu;
        self
    }

    pub fn with_gates(mut self, gates: u64) -> Self {
        self.gates = gates;
        self
    }

    /// Checks that do not depend on the physics configuration.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.gates < 1 {
            problems.push(crate::error::FieldError {
                field: "gates",
                message: "must be >= 1".into(),
            });
        }
        if let Some(w) = self.bin_width {
            if !(w.is_finite() && w > 0.0) {
                problems.push(crate::error::FieldError {
                    field: "bin_width",
                    message: format!("must be > 0, got {w}"),
                });
            }
        }
        if self.shards < 1 {
            problems.push(crate::error::FieldError {
                field: "shards",
                message: "must be >= 1".into(),
            });
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        if self.command.simulates() && self.seed.is_none() && self.needs_simulation() {
            return Err(Error::Usage(format!("`{}` requires --seed", self.command)));
        }
        Ok(())
    }

    fn needs_simulation(&self) -> bool {
        !(matches!(self.command, Command::Calibrate | Command::Analyze) && self.input.is_some())
    }

    fn seed(&self) -> Result<RunSeed> {
        self.seed
            .ok_or_else(|| Error::Usage(format!("`{}` requires --seed", self.command)))
    }

    fn resolved(&self) -> Result<(Detector, Source)> {
        self.response.validate()?;
        self.maps.validate()?;
        validate_config(&self.detector, &self.source, &self.maps)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_path.join(name)
    }
}

/// Tracks written files so a failed command can remove them.
#[derive(Debug, Default)]
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn record(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }

    fn histogram(&mut self, path: PathBuf, h: &Histogram) -> Result<()> {
        io::write_histogram(&path, h)?;
        self.record(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        io::write_json(&path, value)?;
        self.record(path);
        Ok(())
    }

    fn bytes(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        io::atomic_write(&path, bytes)?;
        self.record(path);
        Ok(())
    }
}

fn transact<T>(body: impl FnOnce(&mut Outputs) -> Result<T>) -> Result<(T, Vec<PathBuf>)> {
    let mut outputs = Outputs::default();
    match body(&mut outputs) {
        Ok(v) => Ok((v, outputs.written)),
        Err(e) => {
            io::remove_all(&outputs.written);
            Err(e)
        }
    }
}

/// Histogram range and bin width for a readout mode.
pub fn histogram_layout(mode: Mode, response: &ResponseParams, bin_width: Option<f64>) -> (f64, (f64, f64)) {
    match mode {
        Mode::SelfDifferencing => (bin_width.unwrap_or(DEFAULT_BIN_WIDTH), DEFAULT_SD_RANGE),
        Mode::GatedGeiger => (
            bin_width.unwrap_or(DEFAULT_GEIGER_BIN_WIDTH),
            (-5.0 * response.geiger_baseline_sigma, response.vsat_geiger + 5.0),
        ),
    }
}

/// Summary document written next to every simulated histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub mu_detected: f64,
    pub detection_efficiency: f64,
    /// Gate slots spanned by the run, illuminated or not.
    pub gate_count: u64,
    pub illuminated_count: u64,
    /// Mean detected photons over the illuminated gates.
    pub empirical_detected_mean: f64,
    pub histogram_entries: u64,
    #[serde(rename = "bin_width_mV")]
    pub bin_width_mv: f64,
    #[serde(rename = "range_mV")]
    pub range_mv: (f64, f64),
    pub underflow: u64,
    pub overflow: u64,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub outcomes: Vec<GateOutcome>,
    pub histogram: Histogram,
    pub summary: RunSummary,
}

/// Simulate and histogram one configuration without writing anything.
/// Self-differencing runs histogram `gates` illuminated gates; Geiger runs
/// histogram every one of `gates` consecutive gates.
pub fn simulate_histogram(spec: &ExperimentSpec) -> Result<SimulationRun> {
    spec.validate()?;
    let (detector, source) = spec.resolved()?;
    let seed = spec.seed()?;
    let sim = Simulator::new(detector, source, spec.response.clone(), seed)?;
    let outcomes = match detector.mode {
        Mode::SelfDifferencing => sim.run_illuminated(spec.gates, spec.shards),
        Mode::GatedGeiger => sim.run(spec.gates, spec.shards),
    };
    let peaks: Vec<f64> = outcomes.iter().map(|o| o.peak_mv).collect();
    let (bin_width, range) = histogram_layout(detector.mode, &spec.response, spec.bin_width);
    let histogram = build_histogram(&peaks, bin_width, Some(range))?;
    let lit: Vec<&GateOutcome> = outcomes
        .iter()
        .filter(|o| detector.is_illuminated(o.gate_index))
        .collect();
    let summary = RunSummary {
        mode: detector.mode,
        seed: seed.0,
        mu_detected: source.mu_detected,
        detection_efficiency: detector.detection_efficiency,
        gate_count: outcomes.last().map_or(0, |o| o.gate_index + 1),
        illuminated_count: lit.len() as u64,
        empirical_detected_mean: if lit.is_empty() {
            0.0
        } else {
            lit.iter().map(|o| o.k_detected as f64).sum::<f64>() / lit.len() as f64
        },
        histogram_entries: histogram.entries(),
        bin_width_mv: bin_width,
        range_mv: range,
        underflow: histogram.underflow,
        overflow: histogram.overflow,
    };
    Ok(SimulationRun {
        outcomes,
        histogram,
        summary,
    })
}

fn outcomes_csv(outcomes: &[GateOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        w.serialize(o).map_err(|e| Error::Usage(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Usage(e.to_string()))
}

fn write_simulation(out: &mut Outputs, dir: &Path, run: &SimulationRun) -> Result<()> {
    out.histogram(dir.join("histogram.csv"), &run.histogram)?;
    out.bytes(dir.join("outcomes.csv"), &outcomes_csv(&run.outcomes)?)?;
    out.json(dir.join("summary.json"), &run.summary)
}

/// `simulate`: `histogram.csv`, `outcomes.csv` and `summary.json`.
pub fn run_simulate(spec: &ExperimentSpec) -> Result<(SimulationRun, Vec<PathBuf>)> {
    let run = simulate_histogram(spec)?;
    transact(|out| {
        write_simulation(out, &spec.output_path, &run)?;
        Ok(run)
    })
}

/// Analysis of one histogram against a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub calib: Calibration,
    pub mu_hat: f64,
    pub mu_stderr: f64,
    /// Goodness of fit of the tabulated-mean mixture at `mu_hat`.
    pub reduced_chi2: f64,
    /// Same, with the means on the linear ladder.
    pub reduced_chi2_ladder: f64,
    pub mu_hat_p0: Option<f64>,
    /// Fraction classified as 0, 1, 2, ... photons.
    pub per_class_fractions: Vec<f64>,
    pub log: Option<String>,
}

/// Flux, goodness of fit and class fractions for `hist`.
pub fn analyze_histogram(hist: &Histogram, calib: &Calibration) -> Result<FitResult> {
    calib.validate()?;
    let mle = estimate_mu_mle(hist, calib, DEFAULT_N_MAX)?;
    let ladder = predict_mixture_with(mle.mu_hat, calib, DEFAULT_N_MAX, MeanRule::Ladder, WidthRule::SqrtN);
    let (mu_hat_p0, log) = match estimate_mu_p0(hist, calib) {
        Ok(p0) => (Some(p0.mu_hat), None),
        Err(e) => (None, Some(format!("P0 estimate: {e}"))),
    };
    let mut fractions = Classifier::new(calib, DEFAULT_N_MAX).histogram_fractions(hist);
    while fractions.len() > 1 && fractions.last() == Some(&0.0) {
        fractions.pop();
    }
    Ok(FitResult {
        calib: calib.clone(),
        mu_hat: mle.mu_hat,
        mu_stderr: mle.stderr,
        reduced_chi2: mle.reduced_chi2,
        reduced_chi2_ladder: goodness(hist, &ladder, 1)?,
        mu_hat_p0,
        per_class_fractions: fractions,
        log,
    })
}

fn load_calibration(spec: &ExperimentSpec) -> Result<Calibration> {
    match &spec.calibration {
        Some(p) => {
            let c: Calibration = io::read_json(p)?;
            c.validate()?;
            Ok(c)
        }
        None => Ok(spec.response.calib.clone()),
    }
}

/// `analyze`: reads `--input` or simulates, then writes `fit_result.json`.
pub fn run_analyze(spec: &ExperimentSpec) -> Result<(FitResult, Vec<PathBuf>)> {
    spec.validate()?;
    let calib = load_calibration(spec)?;
    let sim = match &spec.input {
        Some(_) => None,
        None => Some(simulate_histogram(spec)?),
    };
    let hist = match (&spec.input, &sim) {
        (Some(p), _) => io::read_histogram(p)?,
        (None, Some(run)) => run.histogram.clone(),
        (None, None) => unreachable!(),
    };
    let result = analyze_histogram(&hist, &calib)?;
    transact(|out| {
        if let Some(run) = &sim {
            write_simulation(out, &spec.output_path, run)?;
        }
        out.json(spec.out("fit_result.json"), &result)?;
        Ok(result)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub fit: TwoGaussianFit,
    pub calibration: Calibration,
    #[serde(rename = "excess_noise_F")]
    pub excess_noise_f: f64,
}

/// `calibrate`: low-flux two-peak fit, writes `calibration.json` and
/// `calibration_fit.json`.
pub fn run_calibrate(spec: &ExperimentSpec) -> Result<(CalibrationReport, Vec<PathBuf>)> {
    spec.validate()?;
    let sim = match &spec.input {
        Some(_) => None,
        None => Some(simulate_histogram(spec)?),
    };
    let hist = match (&spec.input, &sim) {
        (Some(p), _) => io::read_histogram(p)?,
        (None, Some(run)) => run.histogram.clone(),
        (None, None) => unreachable!(),
    };
    let fit = fit_two_gaussians(&hist)?;
    let calibration = fit.calibration();
    let report = CalibrationReport {
        excess_noise_f: excess_noise(&calibration)?.value,
        calibration,
        fit,
    };
    transact(|out| {
        if let Some(run) = &sim {
            write_simulation(out, &spec.output_path, run)?;
        }
        out.json(spec.out("calibration.json"), &report.calibration)?;
        out.json(spec.out("calibration_fit.json"), &report)?;
        Ok(report)
    })
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub mu_hat: Option<f64>,
    pub mu_hat_p0: Option<f64>,
    pub reduced_chi2: Option<f64>,
    pub fraction_0: Option<f64>,
    pub fraction_1: Option<f64>,
    pub log: Option<String>,
}

fn mu_dir_name(mu: f64) -> String {
    format!("mu_{mu}")
}

/// `sweep`: one `mu_<value>/` directory per flux holding the `simulate`
/// and `analyze` artifacts, plus `sweep.csv`. Every flux uses the same
/// seed. A failing flux is logged in its row and the sweep continues.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<(Vec<SweepRow>, Vec<PathBuf>)> {
    spec.validate()?;
    let mus = spec.mu_list.clone().unwrap_or_else(|| DEFAULT_MU_GRID.to_vec());
    if mus.is_empty() {
        return Err(Error::Usage("mu list is empty".into()));
    }
    let calib = load_calibration(spec)?;
    transact(|out| {
        let mut rows = Vec::with_capacity(mus.len());
        for &mu in &mus {
            let dir = spec.out(&mu_dir_name(mu));
            let point = ExperimentSpec {
                output_path: dir.clone(),
                ..spec.clone()
            }
            .with_mu(mu);
            let attempt = simulate_histogram(&point).and_then(|run| {
                let fit = analyze_histogram(&run.histogram, &calib)?;
                Ok((run, fit))
            });
            match attempt {
                Ok((run, fit)) => {
                    write_simulation(out, &dir, &run)?;
                    out.json(dir.join("fit_result.json"), &fit)?;
                    rows.push(SweepRow {
                        mu,
                        mu_hat: Some(fit.mu_hat),
                        mu_hat_p0: fit.mu_hat_p0,
                        reduced_chi2: Some(fit.reduced_chi2),
                        fraction_0: fit.per_class_fractions.first().copied(),
                        fraction_1: fit.per_class_fractions.get(1).copied(),
                        log: fit.log,
                    });
                }
                Err(e @ Error::Io { .. }) => return Err(e),
                Err(e) => rows.push(SweepRow {
                    mu,
                    mu_hat: None,
                    mu_hat_p0: None,
                    reduced_chi2: None,
                    fraction_0: None,
                    fraction_1: None,
                    log: Some(e.to_string()),
                }),
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r).map_err(|e| Error::Usage(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        out.bytes(spec.out("sweep.csv"), &bytes)?;
        Ok(rows)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurveReport {
    pub entries: Vec<NoiseCurveEntry>,
    /// Slope of F against log10 of the mean gain over successful points.
    pub slope_per_decade: Option<f64>,
    pub linear_mode_reference: LinearModeReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModeReference {
    pub mean_gain: f64,
    #[serde(rename = "excess_noise_F")]
    pub excess_noise_f: f64,
}

/// `noisecurve`: `noise_curve.csv` and `noise_curve.json`.
pub fn run_noisecurve(spec: &ExperimentSpec) -> Result<(NoiseCurveReport, Vec<PathBuf>)> {
    spec.validate()?;
    let vex = spec.vex_list.clone().unwrap_or_else(|| DEFAULT_VEX_LIST.to_vec());
    if vex.is_empty() {
        return Err(Error::Usage("excess-bias list is empty".into()));
    }
    let (detector, source) = spec.resolved()?;
    let run = NoiseRun {
        detector,
        response: spec.response.clone(),
        maps: spec.maps.clone(),
        mu_detected: source.mu_detected,
        gates: spec.gates,
        seed: spec.seed()?,
        bin_width: spec.bin_width.unwrap_or(DEFAULT_BIN_WIDTH),
        shards: spec.shards,
    };
    let entries = noise_curve(&vex, &run)?;
    let points: Vec<NoisePoint> = entries.iter().filter_map(|e| e.point).collect();
    let report = NoiseCurveReport {
        slope_per_decade: (points.len() >= 2).then(|| log_gain_slope(&points)),
        entries,
        linear_mode_reference: LinearModeReference {
            mean_gain: LINEAR_MODE_REFERENCE.0,
            excess_noise_f: LINEAR_MODE_REFERENCE.1,
        },
    };
    transact(|out| {
        let csv_path = spec.out("noise_curve.csv");
        io::write_noise_curve(&csv_path, &report.entries)?;
        out.record(csv_path);
        out.json(spec.out("noise_curve.json"), &report)?;
        Ok(report)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeigerHistogramReport {
    pub mu: f64,
    /// `(center, smoothed height)` of each significant mode.
    pub modes: Vec<(f64, f64)>,
    pub mode_count: usize,
    /// Variance of peak heights above half the saturation voltage.
    pub light_peak_variance: Option<f64>,
    pub component_test: Option<ComponentTest>,
    pub log: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeigerReport {
    pub histograms: Vec<GeigerHistogramReport>,
    /// Light-peak variance strictly decreases from the first to the last flux.
    pub light_peak_narrows: Option<bool>,
}

/// Geiger-mode spec with the conventional gate frequency unless the
/// caller set one.
pub fn geiger_detector(cfg: &DetectorConfig) -> DetectorConfig {
    let mut d = cfg.clone();
    d.mode = Mode::GatedGeiger;
    if d.gate_frequency == DetectorConfig::default().gate_frequency {
        d.gate_frequency = DEFAULT_GEIGER_GATE_FREQUENCY;
    }
    d
}

/// Histogram statistics used to judge photon-number blindness.
pub fn geiger_histogram_report(mu: f64, run: &SimulationRun, vsat: f64) -> GeigerHistogramReport {
    let modes = find_modes(&run.histogram, ModeOptions::default());
    let light: Vec<f64> = run.outcomes.iter().map(|o| o.peak_mv).collect();
    let above = light.iter().filter(|&&v| v > 0.5 * vsat).count();
    let (component_test, log) = match photon_number_component_test(&run.histogram) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    GeigerHistogramReport {
        mu,
        mode_count: modes.len(),
        modes,
        light_peak_variance: (above >= 2).then(|| variance_above(&light, 0.5 * vsat)),
        component_test,
        log,
    }
}

/// `geiger-compare`: one `geiger_mu_<value>/` directory per flux and
/// `geiger_report.json`.
pub fn run_geiger_compare(spec: &ExperimentSpec) -> Result<(GeigerReport, Vec<PathBuf>)> {
    spec.validate()?;
    let mus = spec.mu_list.clone().unwrap_or_else(|| DEFAULT_GEIGER_MUS.to_vec());
    if mus.is_empty() {
        return Err(Error::Usage("mu list is empty".into()));
    }
    let base = ExperimentSpec {
        detector: geiger_detector(&spec.detector),
        ..spec.clone()
    };
    let runs: Vec<(f64, SimulationRun)> = mus
        .iter()
        .map(|&mu| simulate_histogram(&base.clone().with_mu(mu)).map(|r| (mu, r)))
        .collect::<Result<_>>()?;
    let histograms: Vec<GeigerHistogramReport> = runs
        .iter()
        .map(|(mu, r)| geiger_histogram_report(*mu, r, spec.response.vsat_geiger))
        .collect();
    let light_peak_narrows = match (histograms.first(), histograms.last()) {
        (Some(a), Some(b)) if histograms.len() >= 2 => match (a.light_peak_variance, b.light_peak_variance) {
            (Some(va), Some(vb)) => Some(vb < va),
            _ => None,
        },
        _ => None,
    };
    let report = GeigerReport {
        histograms,
        light_peak_narrows,
    };
    transact(|out| {
        for (mu, run) in &runs {
            write_simulation(out, &spec.out(&format!("geiger_{}", mu_dir_name(*mu))), run)?;
        }
        out.json(spec.out("geiger_report.json"), &report)?;
        Ok(report)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformReport {
    pub mode: Mode,
    pub mismatch_delta: f64,
    #[serde(rename = "raw_noise_sigma_mV")]
    pub raw_noise_sigma_mv: f64,
    /// 5-sigma discriminator level on the dark raw output.
    #[serde(rename = "raw_threshold_mV")]
    pub raw_threshold_mv: f64,
    /// Same after self-differencing.
    #[serde(rename = "sd_threshold_mV")]
    pub sd_threshold_mv: f64,
    pub gates: u64,
}

/// `waveform`: synthesize `gates` consecutive gates, self-difference them
/// and write `raw.csv`, `sd.csv`, `peaks.csv`, `peak_histogram.csv` and
/// `waveform_summary.json`. Detection thresholds are measured on a dark
/// train of the same length.
pub fn run_waveform(spec: &ExperimentSpec) -> Result<(WaveformReport, Vec<PathBuf>)> {
    spec.validate()?;
    if spec.gates < 2 {
        return Err(Error::Usage("waveform needs at least 2 gates".into()));
    }
    let (detector, source) = spec.resolved()?;
    let seed = spec.seed()?;
    let layout = WaveformLayout::default();
    let sd = SdParams::matched(&spec.response, &layout)?;
    let opts = SynthOptions::for_readout(&spec.response, &sd, layout);
    let sim = Simulator::new(detector, source, spec.response.clone(), seed)?;
    let outcomes = sim.run(spec.gates, spec.shards);
    let raw = synth_gate_train(&detector, &outcomes, &spec.response, &opts, seed)?;
    let diff = self_difference(&raw, &sd)?;
    let peaks = extract_peaks(&diff, &layout)?;

    let dark_outcomes: Vec<GateOutcome> = (0..spec.gates)
        .map(|g| GateOutcome {
            gate_index: g,
            n_incident: 0,
            k_detected: 0,
            peak_mv: 0.0,
        })
        .collect();
    let dark_raw = synth_gate_train(&detector, &dark_outcomes, &spec.response, &opts, seed)?;
    let dark_sd = self_difference(&dark_raw, &sd)?;
    let report = WaveformReport {
        mode: detector.mode,
        mismatch_delta: sd.mismatch_delta,
        raw_noise_sigma_mv: opts.noise_sigma,
        raw_threshold_mv: min_detectable_amplitude(&dark_raw),
        sd_threshold_mv: min_detectable_amplitude(&dark_sd),
        gates: spec.gates,
    };
    let lit: Vec<f64> = peaks
        .iter()
        .filter(|(g, _)| detector.is_illuminated(*g))
        .map(|(_, v)| *v)
        .collect();
    let (bin_width, range) = histogram_layout(Mode::SelfDifferencing, &spec.response, spec.bin_width);
    let hist = build_histogram(&lit, bin_width, Some(range))?;

    transact(|out| {
        for p in io::write_waveform(&spec.out("raw.csv"), &raw)? {
            out.record(p);
        }
        for p in io::write_waveform(&spec.out("sd.csv"), &diff)? {
            out.record(p);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["gate_index", "peak_mV", "illuminated"])
            .map_err(|e| Error::Usage(format!("csv: {e}")))?;
        for (g, v) in &peaks {
            w.write_record([g.to_string(), v.to_string(), detector.is_illuminated(*g).to_string()])
                .map_err(|e| Error::Usage(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
        out.bytes(spec.out("peaks.csv"), &bytes)?;
        out.histogram(spec.out("peak_histogram.csv"), &hist)?;
        out.json(spec.out("waveform_summary.json"), &report)?;
        Ok(report)
    })
}

/// Dispatch on `spec.command`; returns the files written.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    Ok(match spec.command {
        Command::Simulate => run_simulate(spec)?.1,
        Command::Waveform => run_waveform(spec)?.1,
        Command::Calibrate => run_calibrate(spec)?.1,
        Command::Analyze => run_analyze(spec)?.1,
        Command::Sweep => run_sweep(spec)?.1,
        Command::Noisecurve => run_noisecurve(spec)?.1,
        Command::GeigerCompare => run_geiger_compare(spec)?.1,
    })
}
