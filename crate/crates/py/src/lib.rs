//! Python module `thp`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thp_core::attack::{self, BreachReport};
use thp_core::config::{AfterpulseScaling, ScalingMode};
use thp_core::detector::{cumulative_afterpulse_prob, DetectorParams};
use thp_core::histogram::{saturation_correct, split_counts};
use thp_core::optics::{self, PhotonCountRecord, WavelengthProfile, DOUBLE_PASS_PATH};
use thp_core::readout::{self as core_readout, CoherentPair, ModulatorResponse};
use thp_core::{build_frame_plan, CountHistogram, SimOptions};

fn py_err(e: thp_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "thp")]
#[derive(Clone)]
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

impl From<thp_core::Factors> for Factors {
    fn from(f: thp_core::Factors) -> Self {
        Self {
            loss_signal_db: f.loss_signal_db,
            loss_attack_db: f.loss_attack_db,
            rho: f.rho,
            theta_signal: f.theta_signal,
            theta_attack: f.theta_attack,
            nu: f.nu,
            gamma: f.gamma,
            delta0: f.delta0,
            delta1: f.delta1,
        }
    }
}

#[pymethods]
impl Factors {
    fn __repr__(&self) -> String {
        format!("Factors(rho={}, nu={}, gamma={:.6e}, delta0={:.6e}, delta1={:.6e})", self.rho, self.nu, self.gamma, self.delta0, self.delta1)
    }
}

/// Outcome of one simulated attack.
#[pyclass(frozen, module = "thp")]
pub struct Report {
    inner: BreachReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn qber(&self) -> Option<f64> {
        self.inner.qber()
    }

    #[getter]
    fn qber_ci(&self) -> Option<(f64, f64)> {
        self.inner.result.qber.map(|e| (e.lo, e.hi))
    }

    #[getter]
    fn eve_info(&self) -> Option<f64> {
        self.inner.eve_info()
    }

    #[getter]
    fn eve_info_ci(&self) -> Option<(f64, f64)> {
        self.inner.result.eve_info.map(|e| (e.lo, e.hi))
    }

    #[getter]
    fn detection_rate(&self) -> f64 {
        self.inner.result.detection_rate.value
    }

    #[getter]
    fn rate_deviation(&self) -> f64 {
        self.inner.rate_deviation
    }

    #[getter]
    fn sifted(&self) -> u64 {
        self.inner.result.sifted_count
    }

    #[getter]
    fn breach(&self) -> bool {
        self.inner.breach
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("None".to_string(), |v| format!("{v:.6}"));
        let breach = if self.inner.breach { "True" } else { "False" };
        format!("Report(qber={}, eve_info={}, breach={breach})", opt(self.inner.qber()), opt(self.inner.eve_info()))
    }
}

/// Run configuration: loss profiles, counts, frame, detectors and attack.
#[pyclass(skip_from_py_object, module = "thp")]
#[derive(Clone)]
pub struct Config {
    inner: thp_core::Config,
}

#[pymethods]
impl Config {
    /// Built-in defaults.
    #[new]
    fn new() -> Self {
        Self { inner: thp_core::Config::default() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        thp_core::Config::from_json_str(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        thp_core::Config::load(path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn factors(&self) -> PyResult<Factors> {
        self.inner.factors().map(Factors::from).map_err(py_err)
    }

    /// Path losses in dB and `rho`, as a dict.
    fn budget<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let profiles = [("signal", &self.inner.profiles.signal), ("attack", &self.inner.profiles.attack)];
        for (key, p) in profiles {
            let Some(p) = p else { continue };
            d.set_item(format!("{key}_double_pass_db"), optics::path_loss(p, &DOUBLE_PASS_PATH).map_err(py_err)?)?;
            if has_circulator(p) {
                d.set_item(format!("{key}_circulator_best_db"), optics::path_loss(p, &optics::CIRCULATOR_PATH_BEST).map_err(py_err)?)?;
                d.set_item(format!("{key}_circulator_worst_db"), optics::path_loss(p, &optics::CIRCULATOR_PATH_WORST).map_err(py_err)?)?;
                d.set_item(format!("{key}_circulator_midway_db"), optics::circulator_midway_loss(p).map_err(py_err)?)?;
            }
        }
        if let (Some(s), Some(a)) = (&self.inner.profiles.signal, &self.inner.profiles.attack) {
            let attack_db = if has_circulator(a) { optics::circulator_midway_loss(a) } else { optics::path_loss(a, &DOUBLE_PASS_PATH) }.map_err(py_err)?;
            let signal_db = optics::path_loss(s, &DOUBLE_PASS_PATH).map_err(py_err)?;
            d.set_item("rho", optics::rho_factor(attack_db, signal_db).map_err(py_err)?)?;
        }
        Ok(d)
    }

    /// Simulates the configured attack. `scaling` is `"derived"`
    /// (default), `"signal"` or `"as_configured"`.
    #[pyo3(signature = (frames = 10_000, seed = 1, workers = None, scaling = None))]
    fn simulate(&self, py: Python<'_>, frames: u64, seed: u64, workers: Option<usize>, scaling: Option<&str>) -> PyResult<Report> {
        let mut cfg = self.inner.clone();
        if let Some(s) = scaling {
            let mode = match s {
                "derived" => ScalingMode::Derived,
                "signal" => ScalingMode::Signal,
                "as_configured" => ScalingMode::AsConfigured,
                other => return Err(PyValueError::new_err(format!("unknown scaling `{other}`"))),
            };
            cfg.detectors.afterpulse_scaling = AfterpulseScaling::Mode(mode);
        }
        let (d0, d1) = cfg.detectors().map_err(py_err)?;
        let opts = SimOptions { n_frames: frames, seed, workers };
        let inner = py.detach(|| attack::evaluate(&cfg.attack, &cfg.frame, &d0, &d1, &opts, cfg.search.i_est)).map_err(py_err)?;
        Ok(Report { inner })
    }

    /// Readout error of the configured attack.
    fn readout_error(&self) -> f64 {
        self.inner.attack.readout_error()
    }

    /// Slot actions of the configured attack as a list of strings.
    fn frame_plan(&self) -> PyResult<Vec<String>> {
        let plan = build_frame_plan(&self.inner.attack, &self.inner.frame).map_err(py_err)?;
        Ok(plan
            .actions
            .iter()
            .map(|a| match a {
                thp_core::SlotAction::Pass => "pass",
                thp_core::SlotAction::Block => "block",
                thp_core::SlotAction::LowLoss { .. } => "low_loss",
                thp_core::SlotAction::LowLossWithThp { .. } => "thp",
            })
            .map(String::from)
            .collect())
    }
}

fn has_circulator(p: &WavelengthProfile) -> bool {
    p.has_segment(optics::SEG_CIRCULATOR_BEST) || p.has_segment(optics::SEG_CIRCULATOR_WORST)
}

/// Homodyne error probability for two coherent states of mean photon
/// number `mu` separated by `theta`.
#[pyfunction]
fn readout_error_prob(mu: f64, theta: f64) -> PyResult<f64> {
    Ok(core_readout::readout_error_prob(&CoherentPair::new(mu, theta).map_err(py_err)?))
}

#[pyfunction]
fn required_mu(theta: f64, target_err: f64) -> PyResult<f64> {
    core_readout::required_mu(theta, target_err).map_err(py_err)
}

#[pyfunction]
fn separation_angle(v_half_signal: f64, v_half_attack: f64, passes: u8) -> PyResult<f64> {
    core_readout::separation_angle(&ModulatorResponse::new(v_half_signal, v_half_attack, passes).map_err(py_err)?).map_err(py_err)
}

#[pyfunction]
fn nu_factor(theta_signal: f64, theta_attack: f64) -> PyResult<f64> {
    core_readout::nu_factor(theta_signal, theta_attack).map_err(py_err)
}

/// Mean photons per pulse from a click record.
#[pyfunction]
fn estimate_mu(pulses_sent: f64, clicks: f64, dark_clicks: f64, detector_efficiency: f64) -> PyResult<f64> {
    let rec = PhotonCountRecord::new(pulses_sent, clicks, dark_clicks, detector_efficiency).map_err(py_err)?;
    optics::estimate_mu_from_counts(&rec).map_err(py_err)
}

/// Probability of at least one afterpulse within `gates` gates after a THP
/// of `thp_photons`, for the default detector with `scale` applied.
#[pyfunction]
#[pyo3(signature = (thp_photons, gates, scale = 1.0))]
fn afterpulse_probability(thp_photons: f64, gates: u32, scale: f64) -> f64 {
    cumulative_afterpulse_prob(&DetectorParams::default().with_scale(scale), thp_photons, gates)
}

/// Splits a histogram into `(apc, dc, no_signal)`. With `trials`, the
/// first-click correction is applied first.
#[pyfunction]
#[pyo3(signature = (counts, bin_width_s, tail_start, trials = None))]
fn split_histogram(counts: Vec<f64>, bin_width_s: f64, tail_start: usize, trials: Option<f64>) -> PyResult<(f64, f64, bool)> {
    let mut h = CountHistogram::new(bin_width_s, counts, trials).map_err(py_err)?;
    if trials.is_some() {
        h = saturation_correct(&h).map_err(py_err)?;
    }
    let s = split_counts(&h, tail_start).map_err(py_err)?;
    Ok((s.apc, s.dc, s.no_signal))
}

#[pymodule]
fn thp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Factors>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(readout_error_prob, m)?)?;
    m.add_function(wrap_pyfunction!(required_mu, m)?)?;
    m.add_function(wrap_pyfunction!(separation_angle, m)?)?;
    m.add_function(wrap_pyfunction!(nu_factor, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mu, m)?)?;
    m.add_function(wrap_pyfunction!(afterpulse_probability, m)?)?;
    m.add_function(wrap_pyfunction!(split_histogram, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
