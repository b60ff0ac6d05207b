//! Gated single-photon detector: Poisson detection, dark counts,
//! multi-exponential afterpulsing seeded by bright pulses, and deadtime.
//! Also the two afterpulse-suppression ratios derived from measured counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optics::{WavelengthProfile, SEG_X_C_D1, SEG_X_D0};

/// Brightness of one Trojan-horse pulse at the receiver entrance, in
/// signal-wavelength photons, needed for about four photons in the
/// double-pass back-reflection.
pub const REFERENCE_THP_PHOTONS: f64 = 2.0e6;

/// One trap level: afterpulse probability per gate contributed by each
/// THP photon at `t = 0`, decaying with `lifetime_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapComponent {
    pub amplitude: f64,
    pub lifetime_s: f64,
}

/// Calibrated two-level trap model for the signal wavelength.
///
/// The amplitudes are fitted, not measured: the fast level is sized so that
/// a [`REFERENCE_THP_PHOTONS`] pulse gives at least 40% cumulative spurious
/// click probability over the next five gates; the slow level sets how much
/// afterpulsing survives a 10 us deadtime. See `examples/calibrate.rs`.
pub fn default_traps() -> Vec<TrapComponent> {
    vec![
        TrapComponent { amplitude: CALIBRATED_FAST_AMPLITUDE, lifetime_s: 1.0e-6 },
        TrapComponent { amplitude: CALIBRATED_SLOW_AMPLITUDE, lifetime_s: 10.0e-6 },
    ]
}

pub const CALIBRATED_FAST_AMPLITUDE: f64 = 9.0e-8;
pub const CALIBRATED_SLOW_AMPLITUDE: f64 = 7.5e-10;

fn default_efficiency() -> f64 {
    0.10
}
fn default_dark_prob() -> f64 {
    1.0e-5
}
fn default_gate_period() -> f64 {
    200e-9
}
fn default_deadtime() -> u32 {
    50
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Detection probability per in-gate photon.
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    /// Dark-count probability per gate.
    #[serde(default = "default_dark_prob")]
    pub dark_prob: f64,
    #[serde(default = "default_gate_period")]
    pub gate_period_s: f64,
    /// Gates skipped after any click.
    #[serde(default = "default_deadtime")]
    pub deadtime_gates: u32,
    #[serde(default = "default_traps")]
    pub traps: Vec<TrapComponent>,
    /// Multiplier on all trap amplitudes: 1 at the signal wavelength.
    #[serde(default = "default_scale")]
    pub afterpulse_scale: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: default_efficiency(),
            dark_prob: default_dark_prob(),
            gate_period_s: default_gate_period(),
            deadtime_gates: default_deadtime(),
            traps: default_traps(),
            afterpulse_scale: default_scale(),
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(invalid("efficiency", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dark_prob) {
            return Err(invalid("dark_prob", "must lie in [0, 1]"));
        }
        if !(self.gate_period_s > 0.0) {
            return Err(invalid("gate_period_s", "must be > 0"));
        }
        if !(self.afterpulse_scale >= 0.0) {
            return Err(invalid("afterpulse_scale", "must be >= 0"));
        }
        for t in &self.traps {
            if !(t.amplitude >= 0.0) || !(t.lifetime_s > 0.0) {
                return Err(invalid("traps", "amplitudes must be >= 0 and lifetimes > 0"));
            }
        }
        Ok(())
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.afterpulse_scale = scale;
        self
    }

    pub fn without_afterpulsing(mut self) -> Self {
        self.afterpulse_scale = 0.0;
        self
    }

    /// Pre-clamp afterpulse probability per gate at `t_since_thp`.
    pub fn afterpulse_unclamped(&self, t_since_thp: f64, thp_photons: f64) -> f64 {
        let shape: f64 = self.traps.iter().map(|k| k.amplitude * (-t_since_thp / k.lifetime_s).exp()).sum();
        self.afterpulse_scale * thp_photons * shape
    }
}

/// Afterpulse probability in a gate `t_since_thp` seconds after a THP of
/// `thp_photons`. Linear in brightness until it saturates at 1.
pub fn afterpulse_prob(params: &DetectorParams, t_since_thp: f64, thp_photons: f64) -> f64 {
    params.afterpulse_unclamped(t_since_thp, thp_photons).clamp(0.0, 1.0)
}

/// Probability of at least one afterpulse click in the `gates` gates after a
/// single THP, with the detector gated throughout.
pub fn cumulative_afterpulse_prob(params: &DetectorParams, thp_photons: f64, gates: u32) -> f64 {
    let none: f64 = (1..=gates)
        .map(|g| 1.0 - afterpulse_prob(params, f64::from(g) * params.gate_period_s, thp_photons))
        .product();
    1.0 - none
}

/// Closed-form sum of the pre-clamp afterpulse probability over gates
/// `1..=gates` after one THP.
pub fn expected_afterpulses(params: &DetectorParams, thp_photons: f64, gates: u32) -> f64 {
    let n = f64::from(gates);
    params
        .traps
        .iter()
        .map(|k| {
            let r = (-params.gate_period_s / k.lifetime_s).exp();
            k.amplitude * r * (1.0 - r.powf(n)) / (1.0 - r)
        })
        .sum::<f64>()
        * params.afterpulse_scale
        * thp_photons
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClickCause {
    Signal,
    Afterpulse,
    Dark,
}

/// Samples one gate and reports what caused the click, if any. When
/// several mechanisms fire together the signal takes precedence, then the
/// afterpulse.
pub fn sample_gate_cause<R: Rng + ?Sized>(params: &DetectorParams, in_gate_mu: f64, afterpulse_hazard: f64, rng: &mut R) -> Option<ClickCause> {
    let p_signal = -(-in_gate_mu * params.efficiency).exp_m1();
    let signal = p_signal > 0.0 && rng.random::<f64>() < p_signal;
    let after = afterpulse_hazard > 0.0 && rng.random::<f64>() < afterpulse_hazard;
    let dark = params.dark_prob > 0.0 && rng.random::<f64>() < params.dark_prob;
    if signal {
        Some(ClickCause::Signal)
    } else if after {
        Some(ClickCause::Afterpulse)
    } else if dark {
        Some(ClickCause::Dark)
    } else {
        None
    }
}

/// Click probability `1 - (1 - dark)(1 - hazard) exp(-mu eta)`.
pub fn sample_gate<R: Rng + ?Sized>(params: &DetectorParams, in_gate_mu: f64, afterpulse_hazard: f64, rng: &mut R) -> bool {
    sample_gate_cause(params, in_gate_mu, afterpulse_hazard, rng).is_some()
}

/// Per-detector afterpulse hazard from all earlier THPs, one accumulator per
/// trap level.
#[derive(Debug, Clone)]
pub struct AfterpulseTracker {
    levels: Vec<f64>,
    decay: Vec<f64>,
    seed: Vec<f64>,
}

impl AfterpulseTracker {
    pub fn new(params: &DetectorParams) -> Self {
        Self {
            levels: vec![0.0; params.traps.len()],
            decay: params.traps.iter().map(|k| (-params.gate_period_s / k.lifetime_s).exp()).collect(),
            seed: params.traps.iter().map(|k| k.amplitude * params.afterpulse_scale).collect(),
        }
    }

    /// Moves one gate period forward.
    pub fn advance(&mut self) {
        for (l, d) in self.levels.iter_mut().zip(&self.decay) {
            *l *= d;
        }
    }

    /// Registers a THP in the current gate; it contributes from the next
    /// gate on.
    pub fn inject(&mut self, thp_photons: f64) {
        for (l, s) in self.levels.iter_mut().zip(&self.seed) {
            *l += s * thp_photons;
        }
    }

    pub fn hazard(&self) -> f64 {
        self.levels.iter().sum::<f64>().clamp(0.0, 1.0)
    }
}

/// Afterpulse and dark counts of one histogram measurement, with the THP
/// brightness that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfterpulseCounts {
    pub thp_mu: f64,
    pub apc: f64,
    pub dc: f64,
}

/// Per-photon afterpulse probability at the attack wavelength relative to
/// the signal wavelength, assuming a constant dark-count probability and
/// afterpulsing linear in THP energy.
pub fn gamma_factor(signal: &AfterpulseCounts, attack: &AfterpulseCounts) -> Result<f64> {
    if !(signal.dc > 0.0 && attack.dc > 0.0 && signal.apc > 0.0 && attack.thp_mu > 0.0) {
        return Err(invalid("counts", "dark counts, signal afterpulse counts and attack THP brightness must be > 0"));
    }
    Ok((signal.thp_mu / attack.thp_mu) * (attack.apc / attack.dc) / (signal.apc / signal.dc))
}

/// Combined afterpulse reduction at the attack wavelength for D0 and D1.
///
/// D0 gets `rho * nu * gamma`. D1 is further corrected for the difference
/// in entrance-to-detector losses between the two wavelengths' routes.
pub fn delta_factors(rho: f64, nu: f64, gamma: f64, signal: &WavelengthProfile, attack: &WavelengthProfile) -> Result<(f64, f64)> {
    let exponent = signal.segment(SEG_X_C_D1)? - signal.segment(SEG_X_D0)? - attack.segment(SEG_X_C_D1)? + attack.segment(SEG_X_D0)?;
    let d0 = rho * nu * gamma;
    Ok((d0, d0 * 10f64.powf(exponent / 10.0)))
}
