//! Simulation and photon-number analysis of a gated avalanche photodiode.
//!
//! The crate models an InGaAs APD read out either in conventional gated
//! Geiger mode, where every avalanche saturates, or through a
//! self-differencing circuit that cancels the periodic capacitive response
//! and exposes weak, unsaturated avalanches whose height grows with the
//! number of detected photons. On top of the simulator sits the analysis
//! chain: pulse-height histograms, a low-flux 0/1-photon calibration fit,
//! Poisson-weighted mixture prediction, photon-number classification,
//! flux estimation and the excess noise factor of the avalanche gain.
//!
//! ```no_run
//! use pnrsim::prelude::*;
//!
//! let (detector, source) = validate_config(
//!     &DetectorConfig::default(),
//!     &SourceConfig { mu_detected: 1.49, ..SourceConfig::default() },
//!     &BiasMaps::default(),
//! ).unwrap();
//! let sim = Simulator::new(detector, source, ResponseParams::default(), RunSeed(7)).unwrap();
//! let peaks = sim.illuminated_peaks(200_000, default_shards());
//! let hist = build_histogram(&peaks, 0.05, Some((3.0, 25.0))).unwrap();
//! let est = estimate_mu_mle(&hist, &Calibration::reference(), 40).unwrap();
//! println!("mu = {:.3}", est.mu_hat);
//! ```

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod response;
pub mod seed;
pub mod simulate;
pub mod source;
pub mod waveform;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::analysis::{
        build_histogram, estimate_mu_mle, estimate_mu_p0, excess_noise, fit_two_gaussians,
        goodness, predict_mixture, Classifier, Histogram,
    };
    pub use crate::calibration::Calibration;
    pub use crate::config::{validate_config, Detector, DetectorConfig, Mode, Source, SourceConfig};
    pub use crate::response::{BiasMaps, ResponseParams};
    pub use crate::seed::RunSeed;
    pub use crate::simulate::{default_shards, GateOutcome, Simulator};
    pub use crate::{Error, Result};
}
