use proptest::prelude::*;
use thp_core::optics::*;

#[test]
fn transmittance_examples() {
    assert_eq!(db_to_transmittance(0.0).unwrap(), 1.0);
    assert!((db_to_transmittance(3.6).unwrap() - 0.4365).abs() < 1e-4);
    assert!((db_to_transmittance(58.7).unwrap() / 1.349e-6 - 1.0).abs() < 1e-3);
    assert!(db_to_transmittance(f64::NAN).is_err());
}

#[test]
fn photons_per_pulse() {
    let mu = mean_photons_per_pulse(21.55e-6, 5e6, 1924e-9).unwrap();
    assert!((mu / 4.14e7 - 1.0).abs() < 0.01, "{mu}");
    // one photon's energy per second at 1 Hz
    let e = PLANCK * SPEED_OF_LIGHT / 1536e-9;
    assert!((mean_photons_per_pulse(e, 1.0, 1536e-9).unwrap() - 1.0).abs() < 1e-12);
    let mu = mean_photons_per_pulse(1e-3, 1e6, 1536e-9).unwrap();
    assert!((mu / 7.73e9 - 1.0).abs() < 1e-3, "{mu}");
    assert!(mean_photons_per_pulse(0.0, 1e6, 1536e-9).is_err());
}

#[test]
fn count_inversion() {
    let rec = PhotonCountRecord::new(4.98e6, 323.0, 60.0, 8.85e-7).unwrap();
    let mu = estimate_mu_from_counts(&rec).unwrap();
    assert!((mu / 59.7 - 1.0).abs() < 0.005, "{mu}");

    let none = PhotonCountRecord::new(1e5, 40.0, 40.0, 0.3).unwrap();
    assert_eq!(estimate_mu_from_counts(&none).unwrap(), 0.0);

    let rec = PhotonCountRecord::new(1e6, 1060.0, 60.0, 1e-3).unwrap();
    let exact = estimate_mu_from_counts(&rec).unwrap();
    let linear = estimate_mu_linear(&rec).unwrap();
    assert!((exact - 1.0005).abs() < 1e-4, "{exact}");
    assert!((exact / linear - 1.0 - 5e-4).abs() < 1e-5);

    assert!(PhotonCountRecord::new(100.0, 10.0, 20.0, 0.1).is_err());
    assert!(PhotonCountRecord::new(100.0, 100.0, 0.0, 0.1).and_then(|r| estimate_mu_from_counts(&r)).is_err());
}

#[test]
fn reference_paths() {
    let s = signal_profile();
    let l = attack_profile();
    assert!((path_loss(&s, &DOUBLE_PASS_PATH).unwrap() - 58.7).abs() < 1e-9);
    assert!((path_loss(&l, &DOUBLE_PASS_PATH).unwrap() - 104.9).abs() < 1e-9);
    assert!((path_loss(&l, &CIRCULATOR_PATH_BEST).unwrap() - 85.0).abs() < 1e-9);
    assert!((path_loss(&l, &CIRCULATOR_PATH_WORST).unwrap() - 92.4).abs() < 1e-9);
    let mid = circulator_midway_loss(&l).unwrap();
    assert!((mid / 87.3 - 1.0).abs() < 0.005);
    let rho = rho_factor(mid, 58.7).unwrap();
    assert!((rho / 724.0 - 1.0).abs() < 0.005, "{rho}");
    assert!(matches!(path_loss(&s, &["X–Y", "nowhere"]), Err(thp_core::Error::UnknownSegment(_))));
}

#[test]
fn midway_is_transmittance_mean() {
    // oracle: average the two transmittances and convert back
    let (a, b) = (85.0_f64, 92.4_f64);
    let oracle = -10.0 * ((10f64.powf(-a / 10.0) + 10f64.powf(-b / 10.0)) / 2.0).log10();
    assert!((midway_polarization_loss(a, b).unwrap() - oracle).abs() < 1e-12);
    assert_eq!(midway_polarization_loss(40.0, 40.0).unwrap(), 40.0);
    assert!(midway_polarization_loss(50.0, 40.0).is_err());
}

#[test]
fn rho_examples() {
    assert_eq!(rho_factor(33.0, 33.0).unwrap(), 1.0);
    assert!((rho_factor(60.0, 50.0).unwrap() - 10.0).abs() < 1e-12);
}

#[test]
fn ascii_segment_names_accepted() {
    let s = signal_profile();
    assert_eq!(path_loss(&s, &["X-Y", "Z*"]).unwrap(), path_loss(&s, &["X–Y", "Z★"]).unwrap());
}

proptest! {
    #[test]
    fn db_round_trip(loss in 0.0f64..200.0) {
        let back = transmittance_to_db(db_to_transmittance(loss).unwrap()).unwrap();
        prop_assert!((back - loss).abs() <= 1e-12 * loss.max(1.0));
    }

    #[test]
    fn path_sum_is_order_free(idx in proptest::collection::vec(0usize..64, 0..12), split in 0usize..12) {
        let p = attack_profile();
        let names: Vec<&str> = p.segments().map(|(n, _)| n).collect();
        let path: Vec<&str> = idx.iter().map(|&i| names[i % names.len()]).collect();
        let total = path_loss(&p, &path).unwrap();
        let mut rev = path.clone();
        rev.reverse();
        prop_assert!((path_loss(&p, &rev).unwrap() - total).abs() < 1e-9);
        let k = split.min(path.len());
        let parts = path_loss(&p, &path[..k]).unwrap() + path_loss(&p, &path[k..]).unwrap();
        prop_assert!((parts - total).abs() < 1e-9);
    }

    #[test]
    fn exact_inversion_dominates_linear(n_sent in 1e3f64..1e8, frac in 0.0f64..0.99, dark_frac in 0.0f64..1.0, eta in 1e-7f64..1.0) {
        let clicks = (n_sent * frac).floor();
        let dark = (clicks * dark_frac).floor();
        let rec = PhotonCountRecord::new(n_sent, clicks, dark, eta).unwrap();
        prop_assert!(estimate_mu_from_counts(&rec).unwrap() >= estimate_mu_linear(&rec).unwrap());
    }

    #[test]
    fn rho_is_transitive(a in 0.0f64..150.0, b in 0.0f64..150.0, c in 0.0f64..150.0) {
        let lhs = rho_factor(a, b).unwrap() * rho_factor(b, c).unwrap();
        let rhs = rho_factor(a, c).unwrap();
        prop_assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }
}
