//! Regenerates the signal-wavelength afterpulse histogram fixture: a raw
//! (first-click censored) count record whose corrected split reproduces the
//! measured afterpulse and dark count totals.
//!
//! cargo run -p thp-core --example make_fixture -- fixtures

use std::fs::File;
use std::path::PathBuf;

use thp_core::detector::{default_traps, DetectorParams};
use thp_core::histogram::{apply_saturation, saturation_correct, split_counts, CountHistogram};

const BIN_WIDTH_S: f64 = 0.4e-6;
const BINS: usize = 205;
const TAIL_START: usize = 100;
const TARGET_APC: f64 = 867_760.0;
const TARGET_DC: f64 = 162_854.0;
const RAW_TOTAL: f64 = 1.0e6;

fn main() -> thp_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let det = DetectorParams::default();

    // afterpulse shape per bin (two gates), unscaled
    let shape: Vec<f64> = (0..BINS)
        .map(|i| {
            let t = (i as f64 + 0.5) * BIN_WIDTH_S;
            default_traps().iter().map(|k| k.amplitude * (-t / k.lifetime_s).exp()).sum::<f64>() * 2.0
        })
        .collect();
    let s_total: f64 = shape.iter().sum();
    let s_tail = shape[TAIL_START..].iter().sum::<f64>() / (BINS - TAIL_START) as f64;
    let scale = TARGET_APC / (s_total - BINS as f64 * s_tail);
    let floor = TARGET_DC / BINS as f64 - scale * s_tail;
    let corrected: Vec<f64> = shape.iter().map(|s| floor + scale * s).collect();
    let corrected = CountHistogram::new(BIN_WIDTH_S, corrected, None)?;

    // trials such that the censored record holds RAW_TOTAL counts
    // the censored total grows with the number of trials
    let raw_total = |n: f64| apply_saturation(&corrected, n).map(|h| h.total()).unwrap_or(0.0);
    let (mut lo, mut hi) = (corrected.total(), corrected.total() * 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if raw_total(mid) > RAW_TOTAL {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let trials = (0.5 * (lo + hi)).round();
    let raw = apply_saturation(&corrected, trials)?;
    let raw = CountHistogram::new(BIN_WIDTH_S, raw.counts.iter().map(|c| c.round()).collect(), Some(trials))?;

    std::fs::create_dir_all(&dir)?;
    raw.write_csv(File::create(dir.join("afterpulse_1536nm.csv"))?)?;
    let meta = serde_json::json!({ "trials": trials, "tail_start": TAIL_START, "gate_period_s": det.gate_period_s });
    std::fs::write(dir.join("afterpulse_1536nm.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let back = split_counts(&saturation_correct(&raw)?, TAIL_START)?;
    let late = raw.counts[BINS - 1];
    println!(
        "trials {trials} raw total {} corrected ApC {:.0} DC {:.0}; last bin raised {:.2}%",
        raw.total(),
        back.apc,
        back.dc,
        100.0 * (saturation_correct(&raw)?.counts[BINS - 1] / late - 1.0)
    );
    Ok(())
}
