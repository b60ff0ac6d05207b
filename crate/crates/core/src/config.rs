//! JSON run configuration. See `configs/default.json` and the schema notes
//! in the README.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackCombination, AttackGrid, SearchOptions};
use crate::detector::{AfterpulseCounts, DetectorParams};
use crate::error::{Error, Result};
use crate::factors::{compute_factors, Factors, Passes};
use crate::optics::{attack_profile, signal_profile, PhotonCountRecord, WavelengthProfile};
use crate::protocol::FrameConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profiles {
    #[serde(default)]
    pub signal: Option<WavelengthProfile>,
    #[serde(default)]
    pub attack: Option<WavelengthProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsPair {
    pub signal: AfterpulseCounts,
    pub attack: AfterpulseCounts,
}

/// Average power of a pulsed source, for converting to photons per pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceMeasurement {
    pub power_w: f64,
    pub rep_rate_hz: f64,
    pub wavelength_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// `delta0`/`delta1` from the factor chain: attack at the long wavelength.
    Derived,
    /// Both detectors unscaled: attack at the signal wavelength.
    Signal,
    /// Use each detector's `afterpulse_scale` unchanged.
    AsConfigured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AfterpulseScaling {
    Mode(ScalingMode),
    Fixed { d0: f64, d1: f64 },
}

impl Default for AfterpulseScaling {
    fn default() -> Self {
        AfterpulseScaling::Mode(ScalingMode::Derived)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    #[serde(default)]
    pub d0: DetectorParams,
    #[serde(default)]
    pub d1: DetectorParams,
    #[serde(default)]
    pub afterpulse_scaling: AfterpulseScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub profiles: Profiles,
    #[serde(default)]
    pub passes: Passes,
    #[serde(default)]
    pub afterpulse_counts: Option<CountsPair>,
    #[serde(default)]
    pub photon_count: Option<PhotonCountRecord>,
    #[serde(default)]
    pub source: Option<SourceMeasurement>,
    #[serde(default)]
    pub frame: FrameConfig,
    #[serde(default)]
    pub detectors: Detectors,
    #[serde(default = "AttackCombination::reference")]
    pub attack: AttackCombination,
    #[serde(default)]
    pub search: SearchOptions,
    #[serde(default)]
    pub grid: Option<AttackGrid>,
}

impl Default for Config {
    /// The characterized receiver, measured counts and reference attack.
    fn default() -> Self {
        Self {
            profiles: Profiles { signal: Some(signal_profile()), attack: Some(attack_profile()) },
            passes: Passes::default(),
            afterpulse_counts: Some(CountsPair {
                signal: AfterpulseCounts { thp_mu: 2.68e4, apc: 867760.0, dc: 162854.0 },
                attack: AfterpulseCounts { thp_mu: 8.32e7, apc: 44981.0, dc: 962140.0 },
            }),
            photon_count: Some(PhotonCountRecord { pulses_sent: 4.98e6, clicks: 323.0, dark_clicks: 60.0, detector_efficiency: 8.85e-7 }),
            source: Some(SourceMeasurement { power_w: 21.55e-6, rep_rate_hz: 5e6, wavelength_nm: 1924.0 }),
            frame: FrameConfig::default(),
            detectors: Detectors::default(),
            attack: AttackCombination::reference(),
            search: SearchOptions::default(),
            grid: None,
        }
    }
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("line {} column {}: at `{path}`: {inner}", inner.line(), inner.column()))
        })?;
        cfg.frame.validate()?;
        cfg.detectors.d0.validate()?;
        cfg.detectors.d1.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn factors(&self) -> Result<Factors> {
        let signal = self.profiles.signal.as_ref().ok_or_else(|| Error::Config("missing `profiles.signal`".into()))?;
        let attack = self.profiles.attack.as_ref().ok_or_else(|| Error::Config("missing `profiles.attack`".into()))?;
        let counts = self.afterpulse_counts.as_ref().ok_or_else(|| Error::Config("missing `afterpulse_counts`".into()))?;
        compute_factors(signal, attack, self.passes, &counts.signal, &counts.attack)
    }

    /// Detector models with the configured afterpulse scaling applied.
    pub fn detectors(&self) -> Result<(DetectorParams, DetectorParams)> {
        let d = &self.detectors;
        let (s0, s1) = match d.afterpulse_scaling {
            AfterpulseScaling::Mode(ScalingMode::Derived) => {
                let f = self.factors()?;
                (f.delta0, f.delta1)
            }
            AfterpulseScaling::Mode(ScalingMode::Signal) => (1.0, 1.0),
            AfterpulseScaling::Mode(ScalingMode::AsConfigured) => (d.d0.afterpulse_scale, d.d1.afterpulse_scale),
            AfterpulseScaling::Fixed { d0, d1 } => (d0, d1),
        };
        let out = (d.d0.clone().with_scale(s0), d.d1.clone().with_scale(s1));
        out.0.validate()?;
        out.1.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_valid() {
        let cfg = Config::from_json_str("{}").unwrap();
        assert!(cfg.profiles.signal.is_none());
        assert_eq!(cfg.frame, FrameConfig::default());
        assert_eq!(cfg.attack, AttackCombination::reference());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let text = r#"{
  "frame": { "n_slots": "many" }
}"#;
        let err = Config::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("frame.n_slots"), "{err}");
        assert!(err.contains("line 2"), "{err}");

        let err = Config::from_json_str(r#"{"framez": {}}"#).unwrap_err().to_string();
        assert!(err.contains("framez"), "{err}");
    }

    #[test]
    fn scaling_modes() {
        let mut cfg = Config::default();
        let (d0, d1) = cfg.detectors().unwrap();
        assert!((d0.afterpulse_scale - 1.03e-2).abs() < 2e-4);
        assert!(d1.afterpulse_scale < d0.afterpulse_scale);

        cfg.detectors.afterpulse_scaling = AfterpulseScaling::Mode(ScalingMode::Signal);
        let (d0, d1) = cfg.detectors().unwrap();
        assert_eq!((d0.afterpulse_scale, d1.afterpulse_scale), (1.0, 1.0));

        cfg.detectors.afterpulse_scaling = AfterpulseScaling::Fixed { d0: 0.5, d1: 0.25 };
        let (d0, d1) = cfg.detectors().unwrap();
        assert_eq!((d0.afterpulse_scale, d1.afterpulse_scale), (0.5, 0.25));

        let text = r#"{"detectors": {"afterpulse_scaling": "signal"}}"#;
        let cfg = Config::from_json_str(text).unwrap();
        assert_eq!(cfg.detectors.afterpulse_scaling, AfterpulseScaling::Mode(ScalingMode::Signal));

        let cfg = Config::from_json_str("{}").unwrap();
        assert!(cfg.detectors().is_err());
    }

    #[test]
    fn default_round_trips() {
        let cfg = Config::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(Config::from_json_str(&text).unwrap(), cfg);
    }
}
