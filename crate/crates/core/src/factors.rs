//! The chain of ratios that turns the signal-wavelength attack into the
//! attack-wavelength one: extra attenuation (`rho`), weaker modulation
//! (`nu`), per-photon afterpulse suppression (`gamma`) and their product
//! per detector (`delta0`, `delta1`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::detector::{delta_factors, gamma_factor, AfterpulseCounts};
use crate::error::Result;
use crate::optics::{circulator_midway_loss, path_loss, rho_factor, WavelengthProfile, DOUBLE_PASS_PATH, SEG_CIRCULATOR_BEST, SEG_CIRCULATOR_WORST};
use crate::readout::{nu_factor, separation_angle, ModulatorResponse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub loss_signal_db: f64,
    pub loss_attack_db: f64,
    pub rho: f64,
    pub theta_signal: f64,
    pub theta_attack: f64,
    pub nu: f64,
    pub gamma: f64,
    pub delta0: f64,
    pub delta1: f64,
}

impl Factors {
    /// `rho * nu`: how much brighter attack-wavelength THPs must be.
    pub fn brightness_ratio(&self) -> f64 {
        self.rho * self.nu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passes {
    pub signal: u8,
    pub attack: u8,
}

impl Default for Passes {
    fn default() -> Self {
        Self { signal: 2, attack: 1 }
    }
}

/// Signal wavelength: double pass with the reflection at `Z`. Attack
/// wavelength: single pass via the circulator reflection at the midway
/// polarization. A profile without circulator entries takes the double-pass
/// route instead, with the signal's pass count.
pub fn compute_factors(
    signal: &WavelengthProfile,
    attack: &WavelengthProfile,
    passes: Passes,
    counts_signal: &AfterpulseCounts,
    counts_attack: &AfterpulseCounts,
) -> Result<Factors> {
    let loss_signal_db = path_loss(signal, &DOUBLE_PASS_PATH)?;
    let via_circulator = attack.has_segment(SEG_CIRCULATOR_BEST) && attack.has_segment(SEG_CIRCULATOR_WORST);
    let (loss_attack_db, attack_passes) = if via_circulator {
        (circulator_midway_loss(attack)?, passes.attack)
    } else {
        (path_loss(attack, &DOUBLE_PASS_PATH)?, passes.signal)
    };
    let rho = rho_factor(loss_attack_db, loss_signal_db)?;
    let theta_signal = separation_angle(&ModulatorResponse::new(signal.v_half, signal.v_half, passes.signal)?)?;
    let theta_attack = separation_angle(&ModulatorResponse::new(signal.v_half, attack.v_half, attack_passes)?)?;
    let nu = nu_factor(theta_signal, theta_attack)?;
    let gamma = gamma_factor(counts_signal, counts_attack)?;
    let (delta0, delta1) = delta_factors(rho, nu, gamma, signal, attack)?;
    Ok(Factors { loss_signal_db, loss_attack_db, rho, theta_signal, theta_attack, nu, gamma, delta0, delta1 })
}

/// `theta` in units of pi.
pub fn in_pi(theta: f64) -> f64 {
    theta / PI
}
