use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thp_core::attack::{baseline_detection_rate, is_breach, optimize, AttackCombination, BreachReport, SearchOptions};
use thp_core::config::{AfterpulseScaling, ScalingMode};
use thp_core::fit::{fit_two_exponential, DecayFit};
use thp_core::histogram::{saturation_correct, split_counts, CountHistogram, SplitCounts};
use thp_core::optics::{
    circulator_midway_loss, path_loss, rho_factor, WavelengthProfile, CIRCULATOR_PATH_BEST, CIRCULATOR_PATH_WORST, DOUBLE_PASS_PATH,
    SEG_CIRCULATOR_BEST, SEG_CIRCULATOR_WORST,
};
use thp_core::protocol::{run_simulation, FramePlan, SimOptions, SimResult};
use thp_core::{build_frame_plan, Config, Error, Factors};

use crate::output::{check_out_dir, create_out_dir, default_out_dir, sig6, write_csv, write_json, RunManifest};
use crate::{exit, Cli, Command, ScalingArg};

type Res<T> = Result<T, String>;

fn err(e: Error) -> String {
    e.to_string()
}

pub fn run(cli: &Cli) -> Res<u8> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => Config::load(p).map_err(err)?,
        None => Config::default(),
    };
    let name = match &cli.command {
        Command::Budget => "budget",
        Command::Factors => "factors",
        Command::Simulate { .. } => "simulate",
        Command::Optimize { .. } => "optimize",
        Command::Histogram { .. } => "histogram",
    };
    if let Command::Simulate { scaling: Some(s), .. } | Command::Optimize { scaling: Some(s), .. } = &cli.command {
        cfg.detectors.afterpulse_scaling = AfterpulseScaling::Mode(match s {
            ScalingArg::Derived => ScalingMode::Derived,
            ScalingArg::Signal => ScalingMode::Signal,
            ScalingArg::AsConfigured => ScalingMode::AsConfigured,
        });
    }

    let out = g.out.clone().unwrap_or_else(|| default_out_dir(name));
    check_out_dir(&out, g.force)?;
    let (code, json, header, rows, extra) = match &cli.command {
        Command::Budget => budget(&cfg)?,
        Command::Factors => factors(&cfg)?,
        Command::Simulate { plan, .. } => simulate(&cfg, plan.as_deref(), &sim_options(cli))?,
        Command::Optimize { budget, top, .. } => run_optimize(&cfg, *budget, *top, &sim_options(cli))?,
        Command::Histogram { input, trials, tail_start, fit_from } => histogram(input, *trials, *tail_start, *fit_from, g.normalize_display)?,
    };

    create_out_dir(&out)?;
    write_json(&out.join("result.json"), &json)?;
    write_csv(&out.join("result.csv"), &header, &rows)?;
    if let Some(h) = extra {
        let path = out.join("corrected.csv");
        h.write_csv(File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?).map_err(err)?;
    }
    let manifest = RunManifest {
        config_path: g.config.as_ref().map(|p| p.display().to_string()),
        command: std::env::args().collect(),
        seed: g.seed,
        out_dir: out.display().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Local::now().to_rfc3339(),
        resolved_config: serde_json::to_value(&cfg).map_err(|e| e.to_string())?,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("wrote {}", out.display());
    Ok(code)
}

fn sim_options(cli: &Cli) -> SimOptions {
    SimOptions { n_frames: cli.global.frames, seed: cli.global.seed, workers: cli.global.workers.map(|w| w as usize) }
}

type Outcome = (u8, serde_json::Value, Vec<&'static str>, Vec<Vec<String>>, Option<CountHistogram>);

fn to_json<T: Serialize>(v: &T) -> Res<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- budget

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBudget {
    pub wavelength_nm: f64,
    pub segments_db: BTreeMap<String, f64>,
    pub double_pass_db: f64,
    pub circulator_best_db: Option<f64>,
    pub circulator_worst_db: Option<f64>,
    pub circulator_midway_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub signal: Option<ProfileBudget>,
    pub attack: Option<ProfileBudget>,
    pub rho: Option<f64>,
    pub notice: Option<String>,
}

fn profile_budget(key: &str, p: &WavelengthProfile) -> Res<ProfileBudget> {
    let missing = |e: Error| match e {
        Error::UnknownSegment(s) => format!("profiles.{key}: missing segment `{s}`"),
        other => format!("profiles.{key}: {other}"),
    };
    let has_circ = p.has_segment(SEG_CIRCULATOR_BEST) || p.has_segment(SEG_CIRCULATOR_WORST);
    let circ = |path: &[&str]| if has_circ { path_loss(p, path).map(Some).map_err(missing) } else { Ok(None) };
    Ok(ProfileBudget {
        wavelength_nm: p.wavelength_nm,
        segments_db: p.segments().map(|(k, v)| (k.to_string(), v)).collect(),
        double_pass_db: path_loss(p, &DOUBLE_PASS_PATH).map_err(missing)?,
        circulator_best_db: circ(&CIRCULATOR_PATH_BEST)?,
        circulator_worst_db: circ(&CIRCULATOR_PATH_WORST)?,
        circulator_midway_db: if has_circ { Some(circulator_midway_loss(p).map_err(missing)?) } else { None },
    })
}

pub fn budget(cfg: &Config) -> Res<Outcome> {
    let signal = cfg.profiles.signal.as_ref().map(|p| profile_budget("signal", p)).transpose()?;
    let attack = cfg.profiles.attack.as_ref().map(|p| profile_budget("attack", p)).transpose()?;
    if signal.is_none() && attack.is_none() {
        return Err("config has no wavelength profiles".into());
    }
    let (rho, notice) = match (&signal, &attack) {
        (Some(s), Some(a)) => (Some(rho_factor(a.circulator_midway_db.unwrap_or(a.double_pass_db), s.double_pass_db).map_err(err)?), None),
        _ => (None, Some("only one wavelength profile configured; rho needs both".to_string())),
    };
    let report = BudgetReport { signal, attack, rho, notice };

    let mut rows = Vec::new();
    let col = |b: &Option<ProfileBudget>, f: &dyn Fn(&ProfileBudget) -> Option<f64>| b.as_ref().and_then(f).map(sig6).unwrap_or_default();
    let mut keys: Vec<&String> = report.signal.iter().chain(&report.attack).flat_map(|b| b.segments_db.keys()).collect();
    keys.sort();
    keys.dedup();
    for k in keys {
        rows.push(vec![k.clone(), col(&report.signal, &|b| b.segments_db.get(k).copied()), col(&report.attack, &|b| b.segments_db.get(k).copied())]);
    }
    rows.push(vec!["double pass X–Y–Z★–Y–X".into(), col(&report.signal, &|b| Some(b.double_pass_db)), col(&report.attack, &|b| Some(b.double_pass_db))]);
    rows.push(vec!["circulator X–Y–Z–C★–X (best)".into(), col(&report.signal, &|b| b.circulator_best_db), col(&report.attack, &|b| b.circulator_best_db)]);
    rows.push(vec!["circulator X–Y–Z–C★–X (worst)".into(), col(&report.signal, &|b| b.circulator_worst_db), col(&report.attack, &|b| b.circulator_worst_db)]);
    rows.push(vec!["circulator, midway polarization".into(), col(&report.signal, &|b| b.circulator_midway_db), col(&report.attack, &|b| b.circulator_midway_db)]);
    let nm = |b: &Option<ProfileBudget>| b.as_ref().map(|b| format!("{} nm", sig6(b.wavelength_nm))).unwrap_or_else(|| "-".into());

    println!("{:<34} {:>12} {:>12}", "loss (dB)", nm(&report.signal), nm(&report.attack));
    for r in &rows {
        println!("{:<34} {:>12} {:>12}", r[0], r[1], r[2]);
    }
    match (report.rho, &report.notice) {
        (Some(rho), _) => println!("rho = {}", sig6(rho)),
        (None, Some(n)) => println!("notice: {n}"),
        _ => {}
    }
    if let Some(rho) = report.rho {
        rows.push(vec!["rho".into(), sig6(rho), sig6(rho)]);
    }
    Ok((0, to_json(&report)?, vec!["quantity", "signal_db", "attack_db"], rows, None))
}

// ---------------------------------------------------------------- factors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorInput {
    pub name: String,
    pub value: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorsReport {
    pub factors: Factors,
    pub theta_signal_pi: f64,
    pub theta_attack_pi: f64,
    pub brightness_ratio: f64,
    pub inputs: Vec<FactorInput>,
}

pub fn factors(cfg: &Config) -> Res<Outcome> {
    let f = cfg.factors().map_err(err)?;
    let (s, a) = (cfg.profiles.signal.as_ref().ok_or("missing profiles.signal")?, cfg.profiles.attack.as_ref().ok_or("missing profiles.attack")?);
    let c = cfg.afterpulse_counts.ok_or("missing afterpulse_counts")?;
    let input = |name: &str, value: f64, source: &str| FactorInput { name: name.into(), value, source: source.into() };
    let mut inputs = vec![
        input("V_half signal", s.v_half, "profiles.signal.v_half"),
        input("V_half attack", a.v_half, "profiles.attack.v_half"),
        input("passes signal", f64::from(cfg.passes.signal), "passes.signal"),
        input("passes attack", f64::from(cfg.passes.attack), "passes.attack"),
        input("signal double-pass loss (dB)", f.loss_signal_db, "profiles.signal.losses_db"),
        input("attack path loss (dB)", f.loss_attack_db, "profiles.attack.losses_db"),
        input("THP photons signal", c.signal.thp_mu, "afterpulse_counts.signal.thp_mu"),
        input("ApC signal", c.signal.apc, "afterpulse_counts.signal.apc"),
        input("DC signal", c.signal.dc, "afterpulse_counts.signal.dc"),
        input("THP photons attack", c.attack.thp_mu, "afterpulse_counts.attack.thp_mu"),
        input("ApC attack", c.attack.apc, "afterpulse_counts.attack.apc"),
        input("DC attack", c.attack.dc, "afterpulse_counts.attack.dc"),
    ];
    for (who, p) in [("signal", s), ("attack", a)] {
        for seg in [thp_core::optics::SEG_X_D0, thp_core::optics::SEG_X_C_D1] {
            if let Ok(v) = p.segment(seg) {
                inputs.push(input(&format!("{seg} {who} (dB)"), v, &format!("profiles.{who}.losses_db")));
            }
        }
    }
    let report = FactorsReport {
        factors: f,
        theta_signal_pi: f.theta_signal / std::f64::consts::PI,
        theta_attack_pi: f.theta_attack / std::f64::consts::PI,
        brightness_ratio: f.brightness_ratio(),
        inputs,
    };
    let rows = vec![
        vec!["rho".into(), sig6(f.rho), "path losses".into()],
        vec!["theta_attack/pi".into(), sig6(report.theta_attack_pi), "V_half ratio, passes".into()],
        vec!["nu".into(), sig6(f.nu), "theta_signal, theta_attack".into()],
        vec!["gamma".into(), sig6(f.gamma), "afterpulse counts".into()],
        vec!["delta0".into(), sig6(f.delta0), "rho nu gamma".into()],
        vec!["delta1".into(), sig6(f.delta1), "delta0, detector path losses".into()],
    ];
    println!("{:<18} {:>12}  from", "factor", "value");
    for r in &rows {
        println!("{:<18} {:>12}  {}", r[0], r[1], r[2]);
    }
    println!("inputs:");
    for i in &report.inputs {
        println!("  {:<30} {:>12}  {}", i.name, sig6(i.value), i.source);
    }
    Ok((0, to_json(&report)?, vec!["factor", "value", "inputs"], rows, None))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub combination: Option<AttackCombination>,
    pub plan_file: Option<String>,
    pub afterpulse_scale: [f64; 2],
    pub frames: u64,
    pub seed: u64,
    pub result: SimResult,
    pub readout_error: f64,
    pub i_est: f64,
    pub q_abort: f64,
    pub baseline_detection_rate: f64,
    pub rate_deviation: f64,
    pub breach: bool,
    pub outcome: String,
}

pub fn simulate(cfg: &Config, plan_file: Option<&Path>, opts: &SimOptions) -> Res<Outcome> {
    let (d0, d1) = cfg.detectors().map_err(err)?;
    let (plan, combination) = match plan_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let plan: FramePlan = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
            (plan, None)
        }
        None => (build_frame_plan(&cfg.attack, &cfg.frame).map_err(err)?, Some(cfg.attack)),
    };
    let result = run_simulation(&cfg.frame, &plan, &d0, &d1, opts).map_err(err)?;
    let baseline = baseline_detection_rate(&cfg.frame, &d0, &d1, opts).map_err(err)?;
    let rate = result.detection_rate.value;
    let rate_deviation = if baseline > 0.0 { (rate - baseline).abs() / baseline } else { 0.0 };
    let q = result.qber.map(|e| e.value);
    let i = result.eve_info.map(|e| e.value);
    let breach = is_breach(q, i, cfg.frame.q_abort, cfg.search.i_est);
    let (code, outcome) = match q {
        Some(q) if q >= cfg.frame.q_abort => (exit::ABORT, "abort"),
        _ if breach => (exit::BREACH, "breach"),
        _ => (exit::NO_BREACH, "no_breach"),
    };
    let report = SimulateReport {
        combination,
        plan_file: plan_file.map(|p| p.display().to_string()),
        afterpulse_scale: [d0.afterpulse_scale, d1.afterpulse_scale],
        frames: opts.n_frames,
        seed: opts.seed,
        readout_error: plan.readout_error,
        i_est: cfg.search.i_est,
        q_abort: cfg.frame.q_abort,
        baseline_detection_rate: baseline,
        rate_deviation,
        breach,
        outcome: outcome.into(),
        result,
    };

    let est = |e: Option<thp_core::stats::Estimate>| e.map(|e| [sig6(e.value), sig6(e.lo), sig6(e.hi)]).unwrap_or_default();
    let mut rows = vec![];
    let [qv, ql, qh] = est(report.result.qber);
    rows.push(vec!["qber".into(), qv, ql, qh]);
    let [iv, il, ih] = est(report.result.eve_info);
    rows.push(vec!["eve_info".into(), iv, il, ih]);
    let [rv, rl, rh] = est(Some(report.result.detection_rate));
    rows.push(vec!["detection_rate".into(), rv, rl, rh]);
    rows.push(vec!["baseline_detection_rate".into(), sig6(baseline), String::new(), String::new()]);
    rows.push(vec!["rate_deviation".into(), sig6(rate_deviation), String::new(), String::new()]);
    rows.push(vec!["sifted".into(), report.result.sifted_count.to_string(), String::new(), String::new()]);
    rows.push(vec!["breach".into(), report.breach.to_string(), String::new(), String::new()]);

    println!("{:<24} {:>12} {:>12} {:>12}", "metric", "value", "ci95_lo", "ci95_hi");
    for r in &rows {
        println!("{:<24} {:>12} {:>12} {:>12}", r[0], r[1], r[2], r[3]);
    }
    println!("afterpulse scale D0 {} D1 {}; i_est {}, q_abort {}: {outcome}", sig6(d0.afterpulse_scale), sig6(d1.afterpulse_scale), sig6(report.i_est), sig6(report.q_abort));
    Ok((code, to_json(&report)?, vec!["metric", "value", "ci95_lo", "ci95_hi"], rows, None))
}

// ---------------------------------------------------------------- optimize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub evaluated: usize,
    pub search: SearchOptions,
    pub ranked: Vec<BreachReport>,
}

pub fn run_optimize(cfg: &Config, budget: Option<usize>, top: usize, opts: &SimOptions) -> Res<Outcome> {
    let grid = cfg.grid.as_ref().ok_or("config has no `grid` to search")?;
    let (d0, d1) = cfg.detectors().map_err(err)?;
    let search = SearchOptions { budget: budget.or(cfg.search.budget), ..cfg.search };
    let total = grid.combinations(cfg.frame.n_slots).len();
    let evaluated = search.budget.map_or(total, |b| b.min(total));
    let ranked = optimize(grid, &cfg.frame, &d0, &d1, opts, &search).map_err(err)?;
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let c = &r.combination;
            vec![
                (k + 1).to_string(),
                c.n_block.to_string(),
                sig6(c.t_ll),
                c.n_thp_slots.to_string(),
                c.n_bursts.to_string(),
                c.burst_len.to_string(),
                sig6(c.thp_photons),
                r.qber().map(sig6).unwrap_or_default(),
                r.eve_info().map(sig6).unwrap_or_default(),
                sig6(r.rate_deviation),
            ]
        })
        .collect();
    let header = vec!["rank", "n_block", "t_ll", "n_thp_slots", "n_bursts", "burst_len", "thp_photons", "qber", "eve_info", "rate_deviation"];
    println!("{evaluated} combinations evaluated, {} feasible breaches", ranked.len());
    if !rows.is_empty() {
        println!("{}", header.join("\t"));
        for r in rows.iter().take(top) {
            println!("{}", r.join("\t"));
        }
    }
    let report = OptimizeReport { evaluated, search, ranked };
    Ok((0, to_json(&report)?, header, rows, None))
}

// ---------------------------------------------------------------- histogram

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub input: PathBuf,
    pub trials: Option<f64>,
    pub tail_start: usize,
    pub raw_total: f64,
    pub corrected_total: f64,
    pub split: SplitCounts,
    pub fit: DecayFit,
    pub fit_from: usize,
    /// `(peak, dark level)` used for the display rescaling.
    pub display_scale: Option<(f64, f64)>,
}

pub fn histogram(input: &Path, trials: Option<f64>, tail_start: Option<usize>, fit_from: usize, normalize: bool) -> Res<Outcome> {
    let file = File::open(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let raw = CountHistogram::read_csv(file, trials).map_err(|e| format!("{}: {e}", input.display()))?;
    let corrected = if trials.is_some() { saturation_correct(&raw).map_err(err)? } else { raw.clone() };
    let tail_start = tail_start.unwrap_or(corrected.len() / 2);
    let split = split_counts(&corrected, tail_start).map_err(err)?;
    let fit = fit_two_exponential(&corrected, fit_from).map_err(err)?;
    let dark_level = split.dc / corrected.len() as f64;
    let peak = corrected.counts.iter().cloned().fold(f64::MIN, f64::max);
    let display_scale = (normalize && peak > dark_level).then_some((peak, dark_level));

    let mut header = vec!["bin_start_s", "raw", "corrected", "fit", "residual"];
    if display_scale.is_some() {
        header.push("normalized");
    }
    let rows: Vec<Vec<String>> = (0..corrected.len())
        .map(|i| {
            let t = corrected.bin_start(i);
            let (fitv, res) = if i >= fit_from { (sig6(fit.predict(t)), sig6(fit.residuals[i - fit_from])) } else { Default::default() };
            let mut r = vec![sig6(t), sig6(raw.counts[i]), sig6(corrected.counts[i]), fitv, res];
            if let Some((p, d)) = display_scale {
                r.push(sig6((corrected.counts[i] - d) / (p - d)));
            }
            r
        })
        .collect();

    println!("bins {} x {} s, tail from bin {tail_start}", corrected.len(), sig6(corrected.bin_width_s));
    println!("raw total {}  corrected total {}", sig6(raw.total()), sig6(corrected.total()));
    if split.no_signal {
        println!("notice: tail level is not below the mean; no afterpulse signal");
    }
    println!("ApC {}  DC {}", sig6(split.apc), sig6(split.dc));
    println!("fit: offset {}{}", sig6(fit.offset), if fit.degenerate { " (degenerate)" } else { "" });
    for (a, tau) in &fit.components {
        println!("  amplitude {}  lifetime {} s", sig6(*a), sig6(*tau));
    }
    println!("  rms residual {}", sig6(fit.rms_residual));

    let report = HistogramReport {
        input: input.to_path_buf(),
        trials,
        tail_start,
        raw_total: raw.total(),
        corrected_total: corrected.total(),
        split,
        fit,
        fit_from,
        display_scale,
    };
    Ok((0, to_json(&report)?, header, rows, Some(corrected)))
}
