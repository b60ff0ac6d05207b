//! Phase readout of the receiver's modulator by homodyne discrimination
//! of two back-reflected coherent states.
//!
//! Quadrature convention: vacuum noise has standard deviation 1/2, so a
//! coherent state `|a>` measured along the axis joining the two states has
//! mean `Re a` and variance `excess_noise / 4`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulatorResponse {
    /// Half-wave voltage at the signal wavelength (V).
    pub v_half_signal: f64,
    /// Half-wave voltage at the probing wavelength (V).
    pub v_half_attack: f64,
    /// Number of passes the probe makes through the modulator (1 or 2).
    pub passes: u8,
}

impl ModulatorResponse {
    pub fn new(v_half_signal: f64, v_half_attack: f64, passes: u8) -> Result<Self> {
        if !(v_half_signal > 0.0 && v_half_attack > 0.0) {
            return Err(invalid("v_half", "voltages must be > 0"));
        }
        if !(1..=2).contains(&passes) {
            return Err(invalid("passes", format!("must be 1 or 2, got {passes}")));
        }
        Ok(Self { v_half_signal, v_half_attack, passes })
    }
}

/// Angle between the two back-reflected states for the two receiver
/// phase settings, assuming a modulator linear in voltage.
pub fn separation_angle(resp: &ModulatorResponse) -> Result<f64> {
    let resp = ModulatorResponse::new(resp.v_half_signal, resp.v_half_attack, resp.passes)?;
    let theta = f64::from(resp.passes) * (resp.v_half_signal / resp.v_half_attack) * FRAC_PI_2;
    if theta > PI * (1.0 + 1e-12) {
        return Err(Error::AngleOutOfRange(theta));
    }
    Ok(theta.min(PI))
}

/// Brightness increase needed at `theta_attack` to match the state
/// distance available at `theta_signal`.
pub fn nu_factor(theta_signal: f64, theta_attack: f64) -> Result<f64> {
    if !(theta_attack > 0.0) {
        return Err(invalid("theta_attack", "must be > 0; identical states cannot be discriminated"));
    }
    Ok((1.0 - theta_signal.cos()) / (1.0 - theta_attack.cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentPair {
    /// Mean photon number of each state.
    pub mu: f64,
    /// Angle between the states (rad).
    pub theta: f64,
}

impl CoherentPair {
    pub fn new(mu: f64, theta: f64) -> Result<Self> {
        if !(mu >= 0.0) {
            return Err(invalid("mu", "must be >= 0"));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(invalid("theta", format!("must lie in [0, pi], got {theta}")));
        }
        Ok(Self { mu, theta })
    }

    /// `|alpha - beta|`.
    pub fn distance(&self) -> f64 {
        2.0 * self.mu.sqrt() * (self.theta / 2.0).sin()
    }
}

/// Error probability of an ideal homodyne measurement with a midpoint
/// threshold.
pub fn readout_error_prob(pair: &CoherentPair) -> f64 {
    readout_error_prob_noisy(pair, 1.0)
}

/// As [`readout_error_prob`], with the quadrature variance multiplied by
/// `excess_noise` (>= 1 de-rates the detector).
pub fn readout_error_prob_noisy(pair: &CoherentPair, excess_noise: f64) -> f64 {
    let sigma = 0.5 * excess_noise.sqrt();
    0.5 * libm::erfc(pair.distance() / (2.0 * sigma * std::f64::consts::SQRT_2))
}

/// Smallest mean photon number reaching `target_err` at angle `theta`.
pub fn required_mu(theta: f64, target_err: f64) -> Result<f64> {
    required_mu_noisy(theta, target_err, 1.0)
}

pub fn required_mu_noisy(theta: f64, target_err: f64, excess_noise: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= PI) {
        return Err(invalid("theta", "must lie in (0, pi]"));
    }
    if !(target_err > 0.0 && target_err < 0.5) {
        return Err(invalid("target_err", "must lie in (0, 0.5)"));
    }
    let err = |mu: f64| readout_error_prob_noisy(&CoherentPair { mu, theta }, excess_noise);
    let mut hi = 1.0;
    while err(hi) > target_err {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(invalid("target_err", "unreachable"));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if err(mid) > target_err {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        let t = separation_angle(&ModulatorResponse::new(3.35, 5.7, 1).unwrap()).unwrap();
        assert!((t / PI - 0.294).abs() / 0.294 < 0.002, "{}", t / PI);
        assert!((t - 0.9236).abs() < 1e-3);
        let t = separation_angle(&ModulatorResponse::new(3.35, 3.35, 2).unwrap()).unwrap();
        assert_eq!(t, PI);
        let t = separation_angle(&ModulatorResponse::new(2.0, 4.0, 2).unwrap()).unwrap();
        assert!((t - FRAC_PI_2).abs() < 1e-15);
        let over = ModulatorResponse { v_half_signal: 5.0, v_half_attack: 2.0, passes: 2 };
        assert!(matches!(separation_angle(&over), Err(Error::AngleOutOfRange(_))));
        assert!(ModulatorResponse::new(1.0, 1.0, 3).is_err());
        assert!(ModulatorResponse::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn nu() {
        let tl = separation_angle(&ModulatorResponse::new(3.35, 5.7, 1).unwrap()).unwrap();
        let nu = nu_factor(PI, tl).unwrap();
        assert!((nu - 5.04).abs() / 5.04 < 0.005, "{nu}");
        assert!((nu_factor(0.7, 0.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((nu_factor(PI, FRAC_PI_2).unwrap() - 2.0).abs() < 1e-12);
        assert!(nu_factor(PI, 0.0).is_err());
    }

    #[test]
    fn error_prob_examples() {
        assert_eq!(readout_error_prob(&CoherentPair::new(7.0, 0.0).unwrap()), 0.5);
        assert_eq!(readout_error_prob(&CoherentPair::new(0.0, 1.0).unwrap()), 0.5);
        let p = readout_error_prob(&CoherentPair::new(3.0, PI).unwrap());
        assert!((p - 0.5 * libm::erfc(6f64.sqrt())).abs() < 1e-15);
        assert!((p - 2.66e-4).abs() < 0.05e-4, "{p}");
        let p = readout_error_prob(&CoherentPair::new(20.0, 0.294 * PI).unwrap());
        assert!(p <= 0.01);
    }

    #[test]
    fn noise_derates() {
        let pair = CoherentPair::new(3.0, PI).unwrap();
        assert!(readout_error_prob_noisy(&pair, 4.0) > readout_error_prob(&pair));
    }

    #[test]
    fn required_mu_examples() {
        let target = readout_error_prob(&CoherentPair::new(4.0, PI).unwrap());
        assert!((required_mu(PI, target).unwrap() - 4.0).abs() < 4e-6);
        let tl = 0.294 * PI;
        let nu = nu_factor(PI, tl).unwrap();
        let mu = required_mu(tl, target).unwrap();
        assert!((mu - 4.0 * nu).abs() < 1e-5 * mu, "{mu} vs {}", 4.0 * nu);
        assert!((mu - 20.2).abs() < 0.2);
        assert!((required_mu(FRAC_PI_2, target).unwrap() - 8.0).abs() < 1e-5);
        assert!(required_mu(0.0, 0.1).is_err());
        assert!(required_mu(1.0, 0.5).is_err());
    }
}
