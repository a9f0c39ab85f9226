use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pnrsim::config::{ConfigFile, Mode};
use pnrsim::experiment::{self, Command, ExperimentSpec, DEFAULT_CALIBRATION_MU};
use pnrsim::{Error, Result};

#[derive(Parser)]
#[command(name = "pnrsim", version, about = "Gated APD photon-number simulator and analyser")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a run and write its pulse-height histogram
    Simulate(Flags),
    /// Synthesize and self-difference a sampled output waveform
    Waveform(Flags),
    /// Fit the 0/1-photon peaks of a low-flux run
    Calibrate(Flags),
    /// Estimate the flux and class fractions of a histogram
    Analyze(Flags),
    /// Simulate and analyse a list of fluxes
    Sweep(Flags),
    /// Excess noise factor against mean gain over excess biases
    Noisecurve(Flags),
    /// Conventional gated-Geiger histograms at low and high flux
    GeigerCompare(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// Key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mean detected photons per illuminated gate
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gates: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// sd or geiger
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    mu_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    vex_list: Option<Vec<f64>>,
    /// Histogram bin width, mV
    #[arg(long)]
    bin_width: Option<f64>,
    /// Histogram CSV to read instead of simulating (calibrate, analyze)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Calibration JSON to analyse with (analyze, sweep)
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Worker shards; results do not depend on it
    #[arg(long)]
    shards: Option<usize>,
}

fn build_spec(command: Command, f: Flags) -> Result<ExperimentSpec> {
    let file = match &f.config {
        Some(p) => ConfigFile::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => ConfigFile::default(),
    };
    let mut spec = ExperimentSpec::new(command, f.out);
    spec.detector = file.detector();
    spec.source = file.source();
    if file.mu_detected.is_none() && matches!(command, Command::Calibrate | Command::Noisecurve) {
        spec.source.mu_detected = DEFAULT_CALIBRATION_MU;
    }
    if let Some(mu) = f.mu {
        spec.source.mu_detected = mu;
    }
    if let Some(mode) = f.mode {
        spec.detector.mode = mode;
    }
    if command == Command::Waveform && f.gates.is_none() && file.gates.is_none() {
        spec.gates = 10_000;
    }
    if let Some(g) = f.gates.or(file.gates) {
        spec.gates = g;
    }
    spec.seed = f.seed.or(file.seed).map(pnrsim::seed::RunSeed);
    spec.bin_width = f.bin_width.or(file.bin_width);
    spec.mu_list = f.mu_list.or(file.mu_list);
    spec.vex_list = f.vex_list.or(file.vex_list);
    spec.input = f.input;
    spec.calibration = f.calibration;
    if let Some(s) = f.shards {
        spec.shards = s;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Waveform(f) => (Command::Waveform, f),
        Cmd::Calibrate(f) => (Command::Calibrate, f),
        Cmd::Analyze(f) => (Command::Analyze, f),
        Cmd::Sweep(f) => (Command::Sweep, f),
        Cmd::Noisecurve(f) => (Command::Noisecurve, f),
        Cmd::GeigerCompare(f) => (Command::GeigerCompare, f),
    };
    match build_spec(command, flags).and_then(|spec| experiment::run(&spec)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pnrsim {command}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
