//! Operating-point configuration and its validation.
//!
//! A [`DetectorConfig`] may leave `detection_efficiency` unset when
//! `excess_bias` is given; validation then resolves the efficiency through
//! the bias maps. Nothing reaches the simulator without passing through
//! [`validate_config`], which produces the resolved [`Detector`] and
//! [`Source`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::response::BiasMaps;

/// Readout mode of the simulated diode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    SelfDifferencing,
    GatedGeiger,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "sd" | "SelfDifferencing" | "self-differencing" | "self_differencing" => {
                Ok(Mode::SelfDifferencing)
            }
            "geiger" | "GatedGeiger" | "gated-geiger" | "gated_geiger" => Ok(Mode::GatedGeiger),
            other => Err(format!("unknown mode '{other}' (expected sd or geiger)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::SelfDifferencing => f.write_str("sd"),
            Mode::GatedGeiger => f.write_str("geiger"),
        }
    }
}

/// Unvalidated detector operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub gate_frequency: f64,
    pub excess_bias: Option<f64>,
    pub detection_efficiency: Option<f64>,
    pub dark_count_prob: f64,
    pub illumination_decimation: u64,
    pub mode: Mode,
    pub electrons_per_mv: f64,
}

impl Default for DetectorConfig {
    /// 622 MHz self-differencing operation at 1.5 V excess bias.
    fn default() -> Self {
        Self {
            gate_frequency: 622.0e6,
            excess_bias: Some(1.5),
            detection_efficiency: Some(0.10),
            dark_count_prob: 2.0e-6,
            illumination_decimation: 2,
            mode: Mode::SelfDifferencing,
            electrons_per_mv: DEFAULT_ELECTRONS_PER_MV,
        }
    }
}

/// Carriers per mV of peak signal above the 0-photon level.
pub const DEFAULT_ELECTRONS_PER_MV: f64 = 2.703e5;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    /// Mean detected photons per illuminated gate.
    pub mu_detected: f64,
    pub wavelength_nm: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            mu_detected: 1.49,
            wavelength_nm: 1550.0,
        }
    }
}

/// Validated detector: every probability resolved and in range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub gate_frequency: f64,
    pub excess_bias: Option<f64>,
    pub detection_efficiency: f64,
    pub dark_count_prob: f64,
    pub illumination_decimation: u64,
    pub mode: Mode,
    pub electrons_per_mv: f64,
}

impl Detector {
    pub fn gate_period_ns(&self) -> f64 {
        1.0e9 / self.gate_frequency
    }

    pub fn is_illuminated(&self, gate_index: u64) -> bool {
        gate_index % self.illumination_decimation == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub mu_detected: f64,
    pub wavelength_nm: f64,
}

impl Source {
    /// Incident flux needed to produce `mu_detected` at efficiency `eta`.
    pub fn mu_incident(&self, eta: f64) -> f64 {
        if self.mu_detected == 0.0 {
            0.0
        } else {
            self.mu_detected / eta
        }
    }
}

/// Check every invariant and resolve the efficiency from the excess bias
/// when it is not given explicitly. All violations are reported together.
pub fn validate_config(
    cfg: &DetectorConfig,
    src: &SourceConfig,
    maps: &BiasMaps,
) -> Result<(Detector, Source)> {
    let mut errors = Vec::new();
    let mut fail = |field: &'static str, message: String| {
        errors.push(FieldError { field, message })
    };

    if !(cfg.gate_frequency.is_finite() && cfg.gate_frequency > 0.0) {
        fail("gate_frequency", format!("must be > 0, got {}", cfg.gate_frequency));
    }
    let efficiency = match (cfg.detection_efficiency, cfg.excess_bias) {
        (Some(eta), _) => Some(eta),
        (None, Some(v_ex)) => match maps.efficiency(v_ex) {
            Ok(eta) => Some(eta),
            Err(e) => {
                fail("excess_bias", e.to_string());
                None
            }
        },
        (None, None) => {
            fail(
                "detection_efficiency",
                "absent and no excess_bias to derive it from".to_string(),
            );
            None
        }
    };
    if let Some(eta) = efficiency {
        if !(0.0..=1.0).contains(&eta) {
            fail(
                "detection_efficiency",
                format!("detection_efficiency out of range: {eta}"),
            );
        } else if eta == 0.0 && src.mu_detected > 0.0 {
            fail(
                "detection_efficiency",
                "zero efficiency cannot produce a nonzero detected flux".to_string(),
            );
        }
    }
    if let Some(v_ex) = cfg.excess_bias {
        if !v_ex.is_finite() {
            fail("excess_bias", format!("must be finite, got {v_ex}"));
        }
    }
    if !(0.0..1.0).contains(&cfg.dark_count_prob) {
        fail(
            "dark_count_prob",
            format!("must lie in [0, 1), got {}", cfg.dark_count_prob),
        );
    }
    if cfg.illumination_decimation < 2 {
        fail(
            "illumination_decimation",
            format!("must be >= 2, got {}", cfg.illumination_decimation),
        );
    }
    if !(cfg.electrons_per_mv.is_finite() && cfg.electrons_per_mv > 0.0) {
        fail(
            "electrons_per_mV",
            format!("must be > 0, got {}", cfg.electrons_per_mv),
        );
    }
    if !(src.mu_detected.is_finite() && src.mu_detected >= 0.0) {
        fail(
            "mu_detected",
            format!("must be >= 0, got {}", src.mu_detected),
        );
    }

    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let detector = Detector {
        gate_frequency: cfg.gate_frequency,
        excess_bias: cfg.excess_bias,
        detection_efficiency: efficiency.expect("checked above"),
        dark_count_prob: cfg.dark_count_prob,
        illumination_decimation: cfg.illumination_decimation,
        mode: cfg.mode,
        electrons_per_mv: cfg.electrons_per_mv,
    };
    let source = Source {
        mu_detected: src.mu_detected,
        wavelength_nm: src.wavelength_nm,
    };
    Ok((detector, source))
}

/// Values read from a flat `key = value` config file. Every field is
/// optional so that command-line flags can fill or override them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub gate_frequency: Option<f64>,
    pub excess_bias: Option<f64>,
    pub detection_efficiency: Option<f64>,
    pub dark_count_prob: Option<f64>,
    pub illumination_decimation: Option<u64>,
    pub mode: Option<Mode>,
    pub electrons_per_mv: Option<f64>,
    pub mu_detected: Option<f64>,
    pub wavelength_nm: Option<f64>,
    pub gates: Option<u64>,
    pub seed: Option<u64>,
    pub bin_width: Option<f64>,
    pub mu_list: Option<Vec<f64>>,
    pub vex_list: Option<Vec<f64>>,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::ConfigParse {
        line,
        message: format!("bad value for {key}: {e}"),
    })
}

/// Parse a comma-separated list of reals.
pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ConfigFile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
                line,
                message: format!("expected `key = value`, got '{content}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "gate_frequency" => out.gate_frequency = Some(parse_value(line, key, value)?),
                "excess_bias" => out.excess_bias = Some(parse_value(line, key, value)?),
                "detection_efficiency" => {
                    out.detection_efficiency = Some(parse_value(line, key, value)?)
                }
                "dark_count_prob" => out.dark_count_prob = Some(parse_value(line, key, value)?),
                "illumination_decimation" => {
                    out.illumination_decimation = Some(parse_value(line, key, value)?)
                }
                "mode" => out.mode = Some(parse_value(line, key, value)?),
                "electrons_per_mV" => out.electrons_per_mv = Some(parse_value(line, key, value)?),
                "mu_detected" => out.mu_detected = Some(parse_value(line, key, value)?),
                "wavelength_nm" => out.wavelength_nm = Some(parse_value(line, key, value)?),
                "gates" => out.gates = Some(parse_value(line, key, value)?),
                "seed" => out.seed = Some(parse_value(line, key, value)?),
                "bin_width" => out.bin_width = Some(parse_value(line, key, value)?),
                "mu_list" => {
                    out.mu_list = Some(parse_list(value).map_err(|message| Error::ConfigParse {
                        line,
                        message,
                    })?)
                }
                "vex_list" => {
                    out.vex_list = Some(parse_list(value).map_err(|message| Error::ConfigParse {
                        line,
                        message,
                    })?)
                }
                other => {
                    return Err(Error::ConfigParse {
                        line,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        Ok(out)
    }

    /// Detector settings with unspecified keys taken from the defaults.
    /// Setting only `excess_bias` leaves the efficiency to be derived.
    pub fn detector(&self) -> DetectorConfig {
        let base = DetectorConfig::default();
        let detection_efficiency = match (self.detection_efficiency, self.excess_bias) {
            (Some(eta), _) => Some(eta),
            (None, Some(_)) => None,
            (None, None) => base.detection_efficiency,
        };
        DetectorConfig {
            gate_frequency: self.gate_frequency.unwrap_or(base.gate_frequency),
            excess_bias: self.excess_bias.or(base.excess_bias),
            detection_efficiency,
            dark_count_prob: self.dark_count_prob.unwrap_or(base.dark_count_prob),
            illumination_decimation: self
                .illumination_decimation
                .unwrap_or(base.illumination_decimation),
            mode: self.mode.unwrap_or(base.mode),
            electrons_per_mv: self.electrons_per_mv.unwrap_or(base.electrons_per_mv),
        }
    }

    pub fn source(&self) -> SourceConfig {
        let base = SourceConfig::default();
        SourceConfig {
            mu_detected: self.mu_detected.unwrap_or(base.mu_detected),
            wavelength_nm: self.wavelength_nm.unwrap_or(base.wavelength_nm),
        }
    }
}
