//! Afterpulse histograms: saturation correction, dark/afterpulse split and
//! CSV exchange (`bin_start_s,counts`).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MIN_TAIL_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bin_width_s: f64,
    pub counts: Vec<f64>,
    /// Number of THP injections behind the histogram, when known.
    #[serde(default)]
    pub trials: Option<f64>,
}

impl CountHistogram {
    pub fn new(bin_width_s: f64, counts: Vec<f64>, trials: Option<f64>) -> Result<Self> {
        if !(bin_width_s > 0.0) || !bin_width_s.is_finite() {
            return Err(invalid("bin_width_s", "must be > 0"));
        }
        if let Some(i) = counts.iter().position(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(invalid("counts", format!("bin {i} is negative or non-finite")));
        }
        if let Some(t) = trials {
            if !(t > 0.0) {
                return Err(invalid("trials", "must be > 0"));
            }
        }
        Ok(Self { bin_width_s, counts, trials })
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        i as f64 * self.bin_width_s
    }

    /// Splits every bin evenly over `gates_per_bin` gates.
    pub fn expand_to_gates(&self, gates_per_bin: usize) -> Result<CountHistogram> {
        if gates_per_bin == 0 {
            return Err(invalid("gates_per_bin", "must be >= 1"));
        }
        let k = gates_per_bin as f64;
        let counts = self.counts.iter().flat_map(|c| std::iter::repeat_n(c / k, gates_per_bin)).collect();
        CountHistogram::new(self.bin_width_s / k, counts, self.trials)
    }

    pub fn read_csv<R: Read>(reader: R, trials: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut starts = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            if rec.len() != 2 {
                return Err(Error::MalformedRow { row, reason: format!("expected 2 fields, found {}", rec.len()) });
            }
            let parse = |j: usize, what: &str| -> Result<f64> {
                rec[j].parse::<f64>().map_err(|e| Error::MalformedRow { row, reason: format!("{what} `{}`: {e}", &rec[j]) })
            };
            let start = parse(0, "bin_start_s")?;
            let count = parse(1, "counts")?;
            if !(count >= 0.0) {
                return Err(Error::MalformedRow { row, reason: format!("negative count {count}") });
            }
            starts.push(start);
            counts.push(count);
        }
        if starts.len() < 2 {
            return Err(Error::MalformedRow { row: starts.len() + 1, reason: "need at least two bins".into() });
        }
        let width = starts[1] - starts[0];
        for (i, w) in starts.windows(2).enumerate() {
            if ((w[1] - w[0]) - width).abs() > 1e-6 * width.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::MalformedRow { row: i + 3, reason: "bins are not evenly spaced".into() });
            }
        }
        CountHistogram::new(width, counts, trials)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_start_s", "counts"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([format_g(self.bin_start(i)), format_count(*c)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_count(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

// 12 significant digits hides the float noise of `i * width`
fn format_g(x: f64) -> String {
    let short: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{short:e}")
}

/// Undoes first-click censoring: a click in bin `i` is only recorded when no
/// earlier bin of the same trial clicked, so each bin is divided by the
/// fraction of trials still live when it starts.
pub fn saturation_correct(hist: &CountHistogram) -> Result<CountHistogram> {
    let trials = hist.trials.ok_or_else(|| invalid("trials", "required for saturation correction"))?;
    let mut running = 0.0;
    let mut out = Vec::with_capacity(hist.len());
    for (bin, &raw) in hist.counts.iter().enumerate() {
        if running >= trials {
            return Err(Error::InconsistentHistogram { bin, running, trials });
        }
        out.push(raw / (1.0 - running / trials));
        running += raw;
    }
    CountHistogram::new(hist.bin_width_s, out, Some(trials))
}

/// Forward censoring model, the inverse of [`saturation_correct`].
pub fn apply_saturation(hist: &CountHistogram, trials: f64) -> Result<CountHistogram> {
    let mut running = 0.0;
    let mut out = Vec::with_capacity(hist.len());
    for (bin, &c) in hist.counts.iter().enumerate() {
        let live = 1.0 - running / trials;
        if live <= 0.0 {
            return Err(Error::InconsistentHistogram { bin, running, trials });
        }
        let raw = c * live;
        out.push(raw);
        running += raw;
    }
    CountHistogram::new(hist.bin_width_s, out, Some(trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub apc: f64,
    pub dc: f64,
    /// Set when the tail level is at or above the histogram mean, i.e.
    /// no afterpulse signal is visible.
    pub no_signal: bool,
}

/// Separates dark counts from afterpulse counts using the flat tail from
/// `tail_start` on: `DC = mean(tail) * bins`, `ApC = total - DC`.
pub fn split_counts(hist: &CountHistogram, tail_start: usize) -> Result<SplitCounts> {
    if tail_start >= hist.len() {
        return Err(Error::TailTooShort { len: 0, min: MIN_TAIL_BINS });
    }
    let tail = &hist.counts[tail_start..];
    if tail.len() < MIN_TAIL_BINS {
        return Err(Error::TailTooShort { len: tail.len(), min: MIN_TAIL_BINS });
    }
    let bins = hist.len() as f64;
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let total = hist.total();
    let dc = tail_mean * bins;
    if tail_mean >= total / bins {
        return Ok(SplitCounts { apc: 0.0, dc, no_signal: true });
    }
    Ok(SplitCounts { apc: (total - dc).max(0.0), dc, no_signal: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_prefix_unchanged() {
        let h = CountHistogram::new(1.0, vec![0.0, 0.0, 50.0, 20.0], Some(1000.0)).unwrap();
        let c = saturation_correct(&h).unwrap();
        assert_eq!(c.counts[..3], [0.0, 0.0, 50.0]);
        assert!((c.counts[3] - 20.0 / 0.95).abs() < 1e-12);
        assert!(c.total() >= h.total());
    }

    #[test]
    fn correction_errors() {
        let h = CountHistogram::new(1.0, vec![10.0, 1.0], None).unwrap();
        assert!(saturation_correct(&h).is_err());
        let h = CountHistogram::new(1.0, vec![10.0, 1.0], Some(10.0)).unwrap();
        assert!(matches!(saturation_correct(&h), Err(Error::InconsistentHistogram { bin: 1, .. })));
    }

    #[test]
    fn correction_inverts_censoring() {
        let h = CountHistogram::new(1.0, vec![300.0, 200.0, 100.0, 40.0], None).unwrap();
        let raw = apply_saturation(&h, 1000.0).unwrap();
        let back = saturation_correct(&raw).unwrap();
        for (a, b) in back.counts.iter().zip(&h.counts) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_histogram_has_no_afterpulses() {
        let h = CountHistogram::new(1.0, vec![7.0; 40], None).unwrap();
        let s = split_counts(&h, 20).unwrap();
        assert_eq!(s.apc, 0.0);
        assert!(s.no_signal);
        assert!((s.dc - 280.0).abs() < 1e-9);
    }

    #[test]
    fn split_tail_too_short() {
        let h = CountHistogram::new(1.0, vec![1.0; 30], None).unwrap();
        assert!(matches!(split_counts(&h, 25), Err(Error::TailTooShort { len: 5, .. })));
        assert!(split_counts(&h, 30).is_err());
    }

    #[test]
    fn expand_splits_evenly() {
        let h = CountHistogram::new(0.4e-6, vec![10.0, 4.0], None).unwrap();
        let g = h.expand_to_gates(2).unwrap();
        assert_eq!(g.counts, vec![5.0, 5.0, 2.0, 2.0]);
        assert!((g.bin_width_s - 0.2e-6).abs() < 1e-18);
        assert_eq!(g.total(), h.total());
    }

    #[test]
    fn csv_round_trip() {
        let h = CountHistogram::new(0.4e-6, vec![12.0, 5.5, 0.0], Some(9.0)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = CountHistogram::read_csv(buf.as_slice(), Some(9.0)).unwrap();
        assert_eq!(back.counts, h.counts);
        assert!((back.bin_width_s - h.bin_width_s).abs() < 1e-18);
    }

    #[test]
    fn csv_malformed() {
        let text = "bin_start_s,counts\n0,1\n1e-6,abc\n";
        assert!(matches!(CountHistogram::read_csv(text.as_bytes(), None), Err(Error::MalformedRow { row: 3, .. })));
        let text = "bin_start_s,counts\n0,1\n1e-6,-4\n";
        assert!(CountHistogram::read_csv(text.as_bytes(), None).is_err());
        let text = "bin_start_s,counts\n0,1\n1e-6,2\n3e-6,2\n";
        assert!(CountHistogram::read_csv(text.as_bytes(), None).is_err());
    }
}
