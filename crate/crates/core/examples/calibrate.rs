//! Explores trap amplitudes against the two calibration anchors: the
//! five-gate cumulative afterpulse probability after a reference THP, and
//! the QBER / Eve information of the reference attack at both wavelengths.
//!
//! cargo run --release -p thp-core --example calibrate -- [fast] [slow] [frames] [layout]

use thp_core::attack::{evaluate, AttackCombination, BlockLayout};
use thp_core::detector::{cumulative_afterpulse_prob, DetectorParams, TrapComponent, REFERENCE_THP_PHOTONS};
use thp_core::{Config, SimOptions};

fn main() -> thp_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let fast = arg(1, thp_core::detector::CALIBRATED_FAST_AMPLITUDE);
    let slow = arg(2, thp_core::detector::CALIBRATED_SLOW_AMPLITUDE);
    let frames = arg(3, 10_000.0) as u64;
    let layout = match args.get(4).map(String::as_str) {
        Some("uniform") => BlockLayout::Uniform,
        Some("pre") => BlockLayout::PreBurst,
        _ => BlockLayout::PostBurst,
    };

    let mut cfg = Config::default();
    let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
    if let Some(mu) = env("SIGNAL_MU") {
        cfg.frame.signal_mu = mu;
    }
    if let Some(d) = env("DEADTIME") {
        cfg.detectors.d0.deadtime_gates = d as u32;
    }
    let traps = vec![TrapComponent { amplitude: fast, lifetime_s: 1e-6 }, TrapComponent { amplitude: slow, lifetime_s: 10e-6 }];
    let base = DetectorParams { traps, ..cfg.detectors.d0.clone() };
    let f = cfg.factors()?;
    println!("fast {fast:e} slow {slow:e}");
    println!("5-gate cumulative at reference THP: {:.4}", cumulative_afterpulse_prob(&base, REFERENCE_THP_PHOTONS, 5));

    let combo = AttackCombination { layout, ..AttackCombination::reference() };
    let opts = SimOptions::new(frames, 1);
    for (label, s0, s1) in [("attack wavelength", f.delta0, f.delta1), ("signal wavelength", 1.0, 1.0)] {
        let d0 = base.clone().with_scale(s0);
        let d1 = base.clone().with_scale(s1);
        let r = evaluate(&combo, &cfg.frame, &d0, &d1, &opts, cfg.search.i_est)?;
        let t = r.result.tally;
        println!(
            "{label}: Q {:.4} I {:.4} breach {} rate {:.5} (baseline {:.5}, dev {:.3}) sifted {} thp_sifted {} clicks sig/ap/dark {}/{}/{}",
            r.qber().unwrap_or(f64::NAN),
            r.eve_info().unwrap_or(f64::NAN),
            r.breach,
            r.result.detection_rate.value,
            r.baseline_detection_rate,
            r.rate_deviation,
            t.sifted,
            t.thp_sifted,
            t.signal_clicks,
            t.afterpulse_clicks,
            t.dark_clicks
        );
    }
    Ok(())
}
