use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Enough to rerun a command and get the same result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub command: Vec<String>,
    pub seed: u64,
    pub out_dir: String,
    pub version: String,
    pub timestamp: String,
    /// The configuration after defaults were applied.
    pub resolved_config: serde_json::Value,
}

/// `x` to six significant digits, `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{e}", trim_zeros(mant));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Refuses a non-empty output directory unless `force` is set.
pub fn check_out_dir(dir: &Path, force: bool) -> Result<(), String> {
    if dir.exists() {
        let empty = dir.read_dir().map(|mut d| d.next().is_none()).unwrap_or(false);
        if !empty && !force {
            return Err(format!("output directory {} already exists; pass --force to overwrite", dir.display()));
        }
    }
    Ok(())
}

pub fn create_out_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

pub fn default_out_dir(command: &str) -> PathBuf {
    PathBuf::from("thp-runs").join(format!("{command}-{}", chrono::Local::now().format("%Y%m%dT%H%M%S%.3f")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
    let err = |e: csv::Error| format!("{}: {e}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_digits() {
        assert_eq!(sig6(58.7), "58.7");
        assert_eq!(sig6(87.284_226_9), "87.2842");
        assert_eq!(sig6(2.826_12e-6), "2.82612e-6");
        assert_eq!(sig6(0.293_859_6), "0.29386");
        assert_eq!(sig6(1_234_567.0), "1.23457e6");
        assert_eq!(sig6(-0.5), "-0.5");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(100.0), "100");
    }
}
