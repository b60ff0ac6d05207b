//! Decibel path algebra over the receiver's optical components, and
//! photon-number estimation from optical power or click statistics.
//!
//! Segment names follow the receiver's connector labels: `X` is the
//! receiver entrance, `Y` and `Z` sit either side of the phase modulator,
//! `C` is the circulator and `D0`/`D1` the two detectors. A trailing `★`
//! marks a back-reflection point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{finite, invalid, Error, Result};

/// Planck constant (J s), six significant digits.
pub const PLANCK: f64 = 6.62607e-34;
/// Speed of light in vacuum (m/s), six significant digits.
pub const SPEED_OF_LIGHT: f64 = 2.99792e8;

pub const SEG_X_Y: &str = "X–Y";
pub const SEG_Y_Z: &str = "Y–Z";
pub const SEG_Z_REFLECTION: &str = "Z★";
pub const SEG_CIRCULATOR_BEST: &str = "Z–C★–X(best)";
pub const SEG_CIRCULATOR_WORST: &str = "Z–C★–X(worst)";
pub const SEG_X_D0: &str = "X–D0";
pub const SEG_X_C_D1: &str = "X–C–D1";

pub const ALL_SEGMENTS: [&str; 7] = [
    SEG_X_Y,
    SEG_Y_Z,
    SEG_Z_REFLECTION,
    SEG_CIRCULATOR_BEST,
    SEG_CIRCULATOR_WORST,
    SEG_X_D0,
    SEG_X_C_D1,
];

/// Round trip through the modulator with the reflection at `Z`.
pub const DOUBLE_PASS_PATH: [&str; 5] = [SEG_X_Y, SEG_Y_Z, SEG_Z_REFLECTION, SEG_Y_Z, SEG_X_Y];
/// Single modulator pass, back-reflected at the circulator, best polarization.
pub const CIRCULATOR_PATH_BEST: [&str; 3] = [SEG_X_Y, SEG_Y_Z, SEG_CIRCULATOR_BEST];
/// Same route at the worst input polarization.
pub const CIRCULATOR_PATH_WORST: [&str; 3] = [SEG_X_Y, SEG_Y_Z, SEG_CIRCULATOR_WORST];

/// Maps ASCII spellings (`X-Y`, `Z*`) onto the canonical segment names.
pub fn canonical_segment(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| match c {
            '-' | '\u{2014}' => '–',
            '*' => '★',
            c => c,
        })
        .collect()
}

/// Converts a loss in dB to a power transmittance.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    finite(loss_db, "loss")?;
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Inverse of [`db_to_transmittance`].
pub fn transmittance_to_db(transmittance: f64) -> Result<f64> {
    finite(transmittance, "transmittance")?;
    if transmittance <= 0.0 {
        return Err(invalid("transmittance", format!("must be > 0, got {transmittance}")));
    }
    Ok(-10.0 * transmittance.log10())
}

/// Energy of one photon at `wavelength_m` (J).
pub fn photon_energy(wavelength_m: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / wavelength_m
}

/// Mean photon number per pulse of a pulsed source with average power
/// `power_w` at repetition rate `rep_rate_hz`.
pub fn mean_photons_per_pulse(power_w: f64, rep_rate_hz: f64, wavelength_m: f64) -> Result<f64> {
    for (v, name) in [(power_w, "power"), (rep_rate_hz, "repetition rate"), (wavelength_m, "wavelength")] {
        finite(v, name)?;
        if v <= 0.0 {
            return Err(Error::InvalidParameter { name: "mean_photons_per_pulse", reason: format!("{name} must be > 0, got {v}") });
        }
    }
    Ok(power_w / (rep_rate_hz * photon_energy(wavelength_m)))
}

/// Loss (dB) implied by the ratio of photon numbers before and after a path.
pub fn loss_from_photon_ratio(mu_in: f64, mu_out: f64) -> Result<f64> {
    if mu_in <= 0.0 || mu_out <= 0.0 {
        return Err(invalid("photon numbers", "must be > 0"));
    }
    Ok(10.0 * (mu_in / mu_out).log10())
}

/// Click statistics from a photon-counting loss measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonCountRecord {
    pub pulses_sent: f64,
    pub clicks: f64,
    pub dark_clicks: f64,
    pub detector_efficiency: f64,
}

impl PhotonCountRecord {
    pub fn new(pulses_sent: f64, clicks: f64, dark_clicks: f64, detector_efficiency: f64) -> Result<Self> {
        let rec = Self { pulses_sent, clicks, dark_clicks, detector_efficiency };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulses_sent > 0.0) {
            return Err(invalid("pulses_sent", "must be > 0"));
        }
        if !(self.dark_clicks >= 0.0) {
            return Err(invalid("dark_clicks", "must be >= 0"));
        }
        if self.clicks < self.dark_clicks {
            return Err(invalid("clicks", format!("{} clicks is fewer than {} dark clicks", self.clicks, self.dark_clicks)));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(invalid("detector_efficiency", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn excess_fraction(&self) -> f64 {
        (self.clicks - self.dark_clicks) / self.pulses_sent
    }
}

/// Mean photon number at the detector from excess click statistics,
/// inverting `(n - d)/N = 1 - exp(-mu * eta)` exactly.
///
/// For small click fractions this tends to the linear estimate
/// `(n - d)/(N * eta)` returned by [`estimate_mu_linear`].
pub fn estimate_mu_from_counts(rec: &PhotonCountRecord) -> Result<f64> {
    rec.validate()?;
    let x = rec.excess_fraction();
    if x >= 1.0 {
        return Err(Error::Saturated(x));
    }
    Ok(-(-x).ln_1p() / rec.detector_efficiency)
}

pub fn estimate_mu_linear(rec: &PhotonCountRecord) -> Result<f64> {
    rec.validate()?;
    Ok(rec.excess_fraction() / rec.detector_efficiency)
}

/// Loss at the polarization midway between best and worst: the mean of
/// the two transmittances, expressed in dB.
pub fn midway_polarization_loss(best_db: f64, worst_db: f64) -> Result<f64> {
    finite(best_db, "best loss")?;
    finite(worst_db, "worst loss")?;
    if worst_db < best_db {
        return Err(invalid("worst", format!("worst-case loss {worst_db} dB is below best-case {best_db} dB")));
    }
    let mean = 0.5 * (db_to_transmittance(best_db)? + db_to_transmittance(worst_db)?);
    transmittance_to_db(mean)
}

/// How many times more photons must be injected at the attack wavelength to
/// get the same output as at the signal wavelength.
pub fn rho_factor(loss_attack_db: f64, loss_signal_db: f64) -> Result<f64> {
    finite(loss_attack_db, "attack loss")?;
    finite(loss_signal_db, "signal loss")?;
    Ok(10f64.powf((loss_attack_db - loss_signal_db) / 10.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawProfile {
    wavelength_nm: f64,
    v_half: f64,
    losses_db: BTreeMap<String, f64>,
    #[serde(default)]
    reflection_reused_from_nm: Option<f64>,
    #[serde(default)]
    fiber_loss_db_per_km: Option<f64>,
}

/// All receiver path losses and the modulator half-wave voltage at one
/// wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct WavelengthProfile {
    pub wavelength_nm: f64,
    pub v_half: f64,
    path_losses: BTreeMap<String, f64>,
    /// Set when the `Z★` reflection was measured at another wavelength and
    /// carried over unchanged.
    pub reflection_reused_from_nm: Option<f64>,
    /// Fiber attenuation at this wavelength, for an optional Eve-to-receiver
    /// separation. Not part of any default path.
    pub fiber_loss_db_per_km: Option<f64>,
}

impl TryFrom<RawProfile> for WavelengthProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        let mut p = WavelengthProfile::new(raw.wavelength_nm, raw.v_half, raw.losses_db)?;
        p.reflection_reused_from_nm = raw.reflection_reused_from_nm;
        p.fiber_loss_db_per_km = raw.fiber_loss_db_per_km;
        Ok(p)
    }
}

impl From<WavelengthProfile> for RawProfile {
    fn from(p: WavelengthProfile) -> Self {
        RawProfile {
            wavelength_nm: p.wavelength_nm,
            v_half: p.v_half,
            losses_db: p.path_losses,
            reflection_reused_from_nm: p.reflection_reused_from_nm,
            fiber_loss_db_per_km: p.fiber_loss_db_per_km,
        }
    }
}

impl WavelengthProfile {
    pub fn new<K: AsRef<str>>(wavelength_nm: f64, v_half: f64, losses: impl IntoIterator<Item = (K, f64)>) -> Result<Self> {
        if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
            return Err(invalid("wavelength_nm", format!("must be > 0, got {wavelength_nm}")));
        }
        if !(v_half > 0.0) || !v_half.is_finite() {
            return Err(invalid("v_half", format!("must be > 0, got {v_half}")));
        }
        let mut path_losses = BTreeMap::new();
        for (name, loss) in losses {
            let name = canonical_segment(name.as_ref());
            if !ALL_SEGMENTS.contains(&name.as_str()) {
                return Err(Error::UnknownSegment(name));
            }
            if !(loss >= 0.0) || !loss.is_finite() {
                return Err(Error::InvalidParameter { name: "path loss", reason: format!("{name}: {loss} dB is not a finite value >= 0") });
            }
            path_losses.insert(name, loss);
        }
        if let (Some(best), Some(worst)) = (path_losses.get(SEG_CIRCULATOR_BEST), path_losses.get(SEG_CIRCULATOR_WORST)) {
            if worst < best {
                return Err(invalid("path loss", format!("{SEG_CIRCULATOR_WORST} ({worst} dB) below {SEG_CIRCULATOR_BEST} ({best} dB)")));
            }
        }
        Ok(Self { wavelength_nm, v_half, path_losses, reflection_reused_from_nm: None, fiber_loss_db_per_km: None })
    }

    pub fn segment(&self, name: &str) -> Result<f64> {
        let key = canonical_segment(name);
        self.path_losses.get(&key).copied().ok_or(Error::UnknownSegment(key))
    }

    pub fn has_segment(&self, name: &str) -> bool {
        self.path_losses.contains_key(&canonical_segment(name))
    }

    pub fn segments(&self) -> impl Iterator<Item = (&str, f64)> {
        self.path_losses.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_nm * 1e-9
    }
}

/// Total loss along `path`, counting each traversal of a segment.
pub fn path_loss<S: AsRef<str>>(profile: &WavelengthProfile, path: &[S]) -> Result<f64> {
    path.iter().map(|s| profile.segment(s.as_ref())).sum()
}

/// Circulator-route loss with the input polarization midway between best
/// and worst.
pub fn circulator_midway_loss(profile: &WavelengthProfile) -> Result<f64> {
    midway_polarization_loss(path_loss(profile, &CIRCULATOR_PATH_BEST)?, path_loss(profile, &CIRCULATOR_PATH_WORST)?)
}

/// The receiver as characterized at the signal wavelength (1536 nm).
pub fn signal_profile() -> WavelengthProfile {
    let mut p = WavelengthProfile::new(
        1536.0,
        3.35,
        [(SEG_X_Y, 0.9), (SEG_Y_Z, 2.6), (SEG_Z_REFLECTION, 51.7), (SEG_X_D0, 8.8), (SEG_X_C_D1, 9.2)],
    )
    .expect("built-in profile");
    p.reflection_reused_from_nm = Some(1550.0);
    p
}

/// The receiver as characterized at the attack wavelength (1924 nm).
pub fn attack_profile() -> WavelengthProfile {
    let mut p = WavelengthProfile::new(
        1924.0,
        5.7,
        [
            (SEG_X_Y, 3.6),
            (SEG_Y_Z, 23.0),
            (SEG_Z_REFLECTION, 51.7),
            (SEG_CIRCULATOR_BEST, 58.4),
            (SEG_CIRCULATOR_WORST, 65.8),
            (SEG_X_D0, 15.5),
            (SEG_X_C_D1, 25.8),
        ],
    )
    .expect("built-in profile");
    p.reflection_reused_from_nm = Some(1550.0);
    p.fiber_loss_db_per_km = Some(7.5);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn transmittance_examples() {
        assert_eq!(db_to_transmittance(0.0).unwrap(), 1.0);
        assert!(rel(db_to_transmittance(3.6).unwrap(), 0.436516) < 1e-5);
        assert!(rel(db_to_transmittance(58.7).unwrap(), 1.348963e-6) < 1e-5);
        assert!(db_to_transmittance(f64::NAN).is_err());
        assert!(db_to_transmittance(f64::INFINITY).is_err());
    }

    #[test]
    fn photons_per_pulse() {
        let mu = mean_photons_per_pulse(21.55e-6, 5e6, 1924e-9).unwrap();
        assert!(rel(mu, 4.14e7) < 0.01, "{mu}");

        let lambda = 1550e-9;
        let one = mean_photons_per_pulse(photon_energy(lambda), 1.0, lambda).unwrap();
        assert!((one - 1.0).abs() < 1e-12);

        // 1e-3 / (1e6 * 6.62607e-34 * 2.99792e8 / 1536e-9)
        let mu = mean_photons_per_pulse(1e-3, 1e6, 1536e-9).unwrap();
        assert!(rel(mu, 7.7327e9) < 1e-4, "{mu}");

        assert!(mean_photons_per_pulse(0.0, 1.0, 1.0).is_err());
        assert!(mean_photons_per_pulse(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn mu_from_counts() {
        let rec = PhotonCountRecord::new(4.98e6, 323.0, 60.0, 8.85e-7).unwrap();
        let mu = estimate_mu_from_counts(&rec).unwrap();
        assert!(rel(mu, 59.7) < 0.005, "{mu}");

        let rec = PhotonCountRecord::new(1e3, 60.0, 60.0, 0.3).unwrap();
        assert_eq!(estimate_mu_from_counts(&rec).unwrap(), 0.0);

        // x = 1e-3, eta = 1e-3: exact = -ln(1 - 1e-3)/1e-3
        let rec = PhotonCountRecord::new(1e6, 1060.0, 60.0, 1e-3).unwrap();
        let exact = estimate_mu_from_counts(&rec).unwrap();
        let linear = estimate_mu_linear(&rec).unwrap();
        assert!(rel(exact, 1.000_500_333_5) < 1e-9, "{exact}");
        assert!((linear - 1.0).abs() < 1e-12);
        assert!(rel(exact, linear) > 4e-4 && rel(exact, linear) < 6e-4);
    }

    #[test]
    fn mu_from_counts_errors() {
        assert!(PhotonCountRecord::new(100.0, 10.0, 20.0, 0.1).is_err());
        assert!(PhotonCountRecord::new(0.0, 10.0, 0.0, 0.1).is_err());
        assert!(PhotonCountRecord::new(10.0, 1.0, 0.0, 0.0).is_err());
        let rec = PhotonCountRecord::new(100.0, 100.0, 0.0, 0.5).unwrap();
        assert!(matches!(estimate_mu_from_counts(&rec), Err(Error::Saturated(_))));
    }

    #[test]
    fn table_paths() {
        let s = signal_profile();
        let l = attack_profile();
        assert!((path_loss(&s, &DOUBLE_PASS_PATH).unwrap() - 58.7).abs() < 1e-9);
        assert!((path_loss(&l, &DOUBLE_PASS_PATH).unwrap() - 104.9).abs() < 1e-9);
        assert!((path_loss(&l, &CIRCULATOR_PATH_BEST).unwrap() - 85.0).abs() < 1e-9);
        assert!((path_loss(&l, &CIRCULATOR_PATH_WORST).unwrap() - 92.4).abs() < 1e-9);
        assert!((circulator_midway_loss(&l).unwrap() - 87.284).abs() < 1e-3);
        assert!(matches!(path_loss(&s, &CIRCULATOR_PATH_BEST), Err(Error::UnknownSegment(k)) if k == SEG_CIRCULATOR_BEST));
    }

    #[test]
    fn midway() {
        // -10 log10((10^-8.5 + 10^-9.24) / 2)
        let m = midway_polarization_loss(85.0, 92.4).unwrap();
        assert!((m - 87.2842).abs() < 1e-4, "{m}");
        assert!((m - 87.3).abs() / 87.3 < 0.005);
        assert!((midway_polarization_loss(12.5, 12.5).unwrap() - 12.5).abs() < 1e-12);
        // the dB-domain mean would be 62.1
        let m = midway_polarization_loss(58.4, 65.8).unwrap();
        assert!((m - 60.6842).abs() < 1e-4, "{m}");
        assert!(midway_polarization_loss(3.0, 2.0).is_err());
    }

    #[test]
    fn rho() {
        let r = rho_factor(87.3, 58.7).unwrap();
        assert!((r - 724.0).abs() < 0.5, "{r}");
        assert_eq!(rho_factor(4.2, 4.2).unwrap(), 1.0);
        assert!((rho_factor(60.0, 50.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(rho_factor(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ascii_segment_names() {
        let p = WavelengthProfile::new(1550.0, 3.0, [("X-Y", 1.0), ("Z*", 50.0)]).unwrap();
        assert_eq!(p.segment("X–Y").unwrap(), 1.0);
        assert_eq!(p.segment("Z★").unwrap(), 50.0);
        assert!(matches!(WavelengthProfile::new(1550.0, 3.0, [("Q–R", 1.0)]), Err(Error::UnknownSegment(_))));
    }

    #[test]
    fn profile_invariants() {
        assert!(WavelengthProfile::new(0.0, 3.0, [(SEG_X_Y, 1.0)]).is_err());
        assert!(WavelengthProfile::new(1550.0, 3.0, [(SEG_X_Y, -1.0)]).is_err());
        assert!(WavelengthProfile::new(1550.0, 3.0, [(SEG_CIRCULATOR_BEST, 60.0), (SEG_CIRCULATOR_WORST, 59.0)]).is_err());
    }

    #[test]
    fn profile_json_round_trip() {
        let p = attack_profile();
        let text = serde_json::to_string(&p).unwrap();
        let back: WavelengthProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
        let bad = text.replace("65.8", "50.0");
        assert!(serde_json::from_str::<WavelengthProfile>(&bad).is_err());
    }

    #[test]
    fn measured_circulator_loss() {
        // photon number launched at Z vs. estimated at X
        let loss = loss_from_photon_ratio(4.14e7, 59.7).unwrap();
        assert!((loss - 58.4).abs() < 0.05, "{loss}");
    }
}
