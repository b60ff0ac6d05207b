//! Eavesdropper frame plans built from attack combinations, breach
//! evaluation against the security-proof estimate, and grid search over
//! combinations.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorParams, REFERENCE_THP_PHOTONS};
use crate::error::{Error, Result};
use crate::protocol::{readout_succeeds, run_simulation, FrameConfig, FramePlan, SimOptions, SimResult, SlotAction, SlotOutcome};
use crate::readout::{readout_error_prob, CoherentPair};

/// Eve's knowledge bound assumed by the receiver's privacy amplification.
pub const DEFAULT_I_EST: f64 = 0.506;
/// Largest relative change in detection rate Bob is assumed not to notice.
pub const DEFAULT_RATE_TOLERANCE: f64 = 0.05;

/// Where blocked slots go relative to the THP bursts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    /// Directly after each burst, so afterpulses decay while the line is dark.
    PostBurst,
    /// Directly before each burst, so the detectors are out of deadtime
    /// when the burst starts.
    PreBurst,
    /// Spread evenly over all non-THP slots.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackCombination {
    pub n_block: usize,
    pub n_lowloss: usize,
    /// Transmittance of Eve's low-loss line.
    pub t_ll: f64,
    pub n_thp_slots: usize,
    pub n_bursts: usize,
    pub burst_len: usize,
    /// THP brightness at the receiver entrance, in signal-wavelength
    /// photons. Wavelength effects enter through the detectors'
    /// `afterpulse_scale`.
    pub thp_photons: f64,
    /// Angle between the back-reflected states Eve discriminates (rad).
    pub readout_theta: f64,
    /// Mean photon number reaching Eve's homodyne detector.
    pub readout_mu: f64,
    #[serde(default)]
    pub layout: BlockLayout,
}

impl AttackCombination {
    /// 433 blocked, 642 low-loss at 0.5, 334 THP slots in 12 bursts of 28.
    /// Readout at the single-pass angle with the brightness scaled up by `nu`
    /// from four photons at the double-pass angle.
    pub fn reference() -> Self {
        let theta = crate::readout::separation_angle(&crate::readout::ModulatorResponse { v_half_signal: 3.35, v_half_attack: 5.7, passes: 1 })
            .expect("valid modulator");
        let nu = crate::readout::nu_factor(std::f64::consts::PI, theta).expect("theta > 0");
        Self {
            n_block: 433,
            n_lowloss: 642,
            t_ll: 0.5,
            n_thp_slots: 334,
            n_bursts: 12,
            burst_len: 28,
            thp_photons: REFERENCE_THP_PHOTONS,
            readout_theta: theta,
            readout_mu: 4.0 * nu,
            layout: BlockLayout::Uniform,
        }
    }

    pub fn readout_error(&self) -> f64 {
        readout_error_prob(&CoherentPair { mu: self.readout_mu.max(0.0), theta: self.readout_theta.clamp(0.0, std::f64::consts::PI) })
    }

    pub fn validate(&self, n_slots: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCombination(m));
        if self.n_block + self.n_lowloss != n_slots {
            return bad(format!("{} blocked + {} low-loss slots != frame of {n_slots}", self.n_block, self.n_lowloss));
        }
        if self.n_thp_slots > self.n_lowloss {
            return bad(format!("{} THP slots exceed {} low-loss slots", self.n_thp_slots, self.n_lowloss));
        }
        if self.n_bursts * self.burst_len < self.n_thp_slots {
            return bad(format!("{} bursts of {} cannot hold {} THP slots", self.n_bursts, self.burst_len, self.n_thp_slots));
        }
        if self.n_bursts > 0 && self.burst_len > n_slots / self.n_bursts {
            return bad(format!("bursts of {} overlap at a spacing of {} slots", self.burst_len, n_slots / self.n_bursts));
        }
        if !(0.0..=1.0).contains(&self.t_ll) {
            return bad(format!("t_ll = {} outside [0, 1]", self.t_ll));
        }
        if !(self.thp_photons >= 0.0) {
            return bad("thp_photons must be >= 0".into());
        }
        Ok(())
    }

    fn sort_key(&self) -> (usize, f64, usize, usize, usize, f64, f64, f64, BlockLayout) {
        (self.n_block, self.t_ll, self.n_thp_slots, self.n_bursts, self.burst_len, self.thp_photons, self.readout_theta, self.readout_mu, self.layout)
    }

    /// Lexicographic order over the combination parameters.
    pub fn cmp_lex(&self, other: &Self) -> Ordering {
        let (a, b) = (self.sort_key(), other.sort_key());
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
            .then(a.4.cmp(&b.4))
            .then(a.5.total_cmp(&b.5))
            .then(a.6.total_cmp(&b.6))
            .then(a.7.total_cmp(&b.7))
            .then(a.8.cmp(&b.8))
    }
}

/// Start slot and length of each THP burst. Bursts are spaced evenly and
/// filled to `burst_len` in order, the last one taking the remainder.
pub fn burst_spans(combo: &AttackCombination, n_slots: usize) -> Vec<(usize, usize)> {
    let mut left = combo.n_thp_slots;
    let mut spans = Vec::new();
    for b in 0..combo.n_bursts {
        if left == 0 {
            break;
        }
        let len = combo.burst_len.min(left);
        spans.push((b * n_slots / combo.n_bursts, len));
        left -= len;
    }
    spans
}

pub fn build_frame_plan(combo: &AttackCombination, cfg: &FrameConfig) -> Result<FramePlan> {
    let n = cfg.n_slots;
    combo.validate(n)?;
    let mut actions = vec![SlotAction::LowLoss { t_ll: combo.t_ll }; n];
    let spans = burst_spans(combo, n);
    for &(start, len) in &spans {
        for a in &mut actions[start..start + len] {
            *a = SlotAction::LowLossWithThp { t_ll: combo.t_ll, thp_photons: combo.thp_photons };
        }
    }

    let free: Vec<usize> = (0..n).filter(|&i| !actions[i].is_thp()).collect();
    let blocked: Vec<usize> = match combo.layout {
        BlockLayout::PostBurst if !spans.is_empty() => {
            let mut ranked: Vec<(usize, usize)> = free
                .iter()
                .map(|&i| {
                    let since_burst = spans.iter().filter(|(s, _)| *s <= i).map(|(s, l)| i - (s + l)).min().unwrap_or(n + i);
                    (since_burst, i)
                })
                .collect();
            ranked.sort_unstable();
            ranked.into_iter().take(combo.n_block).map(|(_, i)| i).collect()
        }
        BlockLayout::PreBurst if !spans.is_empty() => {
            // slots after the last burst count down to the next frame's first
            let mut ranked: Vec<(usize, usize)> = free
                .iter()
                .map(|&i| {
                    let until_burst = spans.iter().filter(|(s, _)| *s > i).map(|(s, _)| s - i).min().unwrap_or(n + spans[0].0 - i);
                    (until_burst, i)
                })
                .collect();
            ranked.sort_unstable();
            ranked.into_iter().take(combo.n_block).map(|(_, i)| i).collect()
        }
        _ => spread(free.len(), combo.n_block).into_iter().map(|k| free[k]).collect(),
    };
    for i in blocked {
        actions[i] = SlotAction::Block;
    }
    Ok(FramePlan { actions, readout_error: combo.readout_error() })
}

/// `k` of `m` indices, evenly spread.
fn spread(m: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| ((2 * j + 1) * m) / (2 * k)).collect()
}

/// Fraction of sifted bits Eve learns: a bit is known when its slot
/// carried a THP and her readout of Bob's basis succeeded. Basis knowledge
/// is bit knowledge in SARG04, whatever caused the click. `None` when
/// nothing was sifted.
pub fn eve_information<R: Rng + ?Sized>(outcomes: &[SlotOutcome], readout_err: f64, rng: &mut R) -> Option<f64> {
    let mut sifted = 0u64;
    let mut known = 0u64;
    for o in outcomes.iter().filter(|o| o.sifted) {
        sifted += 1;
        if o.thp_slot && readout_succeeds(readout_err, rng) {
            known += 1;
        }
    }
    (sifted > 0).then(|| known as f64 / sifted as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachReport {
    pub combination: AttackCombination,
    pub result: SimResult,
    pub readout_error: f64,
    pub i_est: f64,
    pub q_abort: f64,
    pub baseline_detection_rate: f64,
    /// `|rate - baseline| / baseline`.
    pub rate_deviation: f64,
    pub breach: bool,
}

impl BreachReport {
    pub fn qber(&self) -> Option<f64> {
        self.result.qber.map(|e| e.value)
    }

    pub fn eve_info(&self) -> Option<f64> {
        self.result.eve_info.map(|e| e.value)
    }

    /// `I_act - I_est`; `-inf` when nothing was sifted.
    pub fn objective(&self) -> f64 {
        self.eve_info().map_or(f64::NEG_INFINITY, |i| i - self.i_est)
    }
}

pub fn is_breach(qber: Option<f64>, eve_info: Option<f64>, q_abort: f64, i_est: f64) -> bool {
    matches!((qber, eve_info), (Some(q), Some(i)) if q < q_abort && i > i_est)
}

/// Detection rate with no eavesdropper.
pub fn baseline_detection_rate(cfg: &FrameConfig, d0: &DetectorParams, d1: &DetectorParams, opts: &SimOptions) -> Result<f64> {
    let plan = FramePlan::uniform(SlotAction::Pass, cfg.n_slots);
    Ok(run_simulation(cfg, &plan, d0, d1, opts)?.detection_rate.value)
}

pub fn evaluate(combo: &AttackCombination, cfg: &FrameConfig, d0: &DetectorParams, d1: &DetectorParams, opts: &SimOptions, i_est: f64) -> Result<BreachReport> {
    let baseline = baseline_detection_rate(cfg, d0, d1, opts)?;
    evaluate_against(combo, cfg, d0, d1, opts, i_est, baseline)
}

/// [`evaluate`] with a precomputed no-attack detection rate.
pub fn evaluate_against(
    combo: &AttackCombination,
    cfg: &FrameConfig,
    d0: &DetectorParams,
    d1: &DetectorParams,
    opts: &SimOptions,
    i_est: f64,
    baseline_rate: f64,
) -> Result<BreachReport> {
    let plan = build_frame_plan(combo, cfg)?;
    let result = run_simulation(cfg, &plan, d0, d1, opts)?;
    let rate = result.detection_rate.value;
    let rate_deviation = if baseline_rate > 0.0 { (rate - baseline_rate).abs() / baseline_rate } else if rate > 0.0 { f64::INFINITY } else { 0.0 };
    let breach = is_breach(result.qber.map(|e| e.value), result.eve_info.map(|e| e.value), cfg.q_abort, i_est);
    Ok(BreachReport {
        combination: *combo,
        readout_error: plan.readout_error,
        result,
        i_est,
        q_abort: cfg.q_abort,
        baseline_detection_rate: baseline_rate,
        rate_deviation,
        breach,
    })
}

/// One grid axis: explicit values or an inclusive `min..=max` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    Values(Vec<T>),
    Range { min: T, max: T, step: T },
}

impl Axis<usize> {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { min, max, step } => (*min..=*max).step_by((*step).max(1)).collect(),
        }
    }
}

impl Axis<f64> {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { min, max, step } if *step > 0.0 => {
                let n = ((max - min) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| min + k as f64 * step).collect()
            }
            Axis::Range { min, .. } => vec![*min],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGrid {
    pub n_block: Axis<usize>,
    pub t_ll: Axis<f64>,
    pub n_thp_slots: Axis<usize>,
    pub n_bursts: Axis<usize>,
    pub burst_len: Axis<usize>,
    pub thp_photons: Axis<f64>,
    pub readout_theta: f64,
    pub readout_mu: f64,
    #[serde(default)]
    pub layout: BlockLayout,
}

impl AttackGrid {
    /// Every valid combination for a frame of `n_slots`, in lexicographic
    /// order without duplicates.
    pub fn combinations(&self, n_slots: usize) -> Vec<AttackCombination> {
        let mut out = Vec::new();
        for n_block in self.n_block.values() {
            for t_ll in self.t_ll.values() {
                for n_thp_slots in self.n_thp_slots.values() {
                    for n_bursts in self.n_bursts.values() {
                        for burst_len in self.burst_len.values() {
                            for thp_photons in self.thp_photons.values() {
                                let c = AttackCombination {
                                    n_block,
                                    n_lowloss: n_slots.saturating_sub(n_block),
                                    t_ll,
                                    n_thp_slots,
                                    n_bursts,
                                    burst_len,
                                    thp_photons,
                                    readout_theta: self.readout_theta,
                                    readout_mu: self.readout_mu,
                                    layout: self.layout,
                                };
                                if n_block <= n_slots && c.validate(n_slots).is_ok() {
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(AttackCombination::cmp_lex);
        out.dedup_by(|a, b| a.cmp_lex(b) == Ordering::Equal);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub i_est: f64,
    pub rate_tolerance: f64,
    /// Maximum number of combinations evaluated, taken in lexicographic order.
    pub budget: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { i_est: DEFAULT_I_EST, rate_tolerance: DEFAULT_RATE_TOLERANCE, budget: None }
    }
}

/// Highest `I_act - I_est` first; ties go to lower QBER, then to the
/// lexicographically smaller combination.
pub fn rank(a: &BreachReport, b: &BreachReport) -> Ordering {
    b.objective()
        .total_cmp(&a.objective())
        .then_with(|| a.qber().unwrap_or(f64::INFINITY).total_cmp(&b.qber().unwrap_or(f64::INFINITY)))
        .then_with(|| a.combination.cmp_lex(&b.combination))
}

/// Grid search: evaluates each combination and returns the breaching ones
/// whose detection rate stays within tolerance of the no-attack baseline,
/// best first. An empty result means no feasible breach in the grid.
pub fn optimize(
    grid: &AttackGrid,
    cfg: &FrameConfig,
    d0: &DetectorParams,
    d1: &DetectorParams,
    sim: &SimOptions,
    search: &SearchOptions,
) -> Result<Vec<BreachReport>> {
    let all = evaluate_grid(grid, cfg, d0, d1, sim, search)?;
    let mut feasible: Vec<BreachReport> = all.into_iter().filter(|r| r.breach && r.rate_deviation <= search.rate_tolerance).collect();
    feasible.sort_by(rank);
    Ok(feasible)
}

/// Every evaluated report, in lexicographic combination order.
pub fn evaluate_grid(
    grid: &AttackGrid,
    cfg: &FrameConfig,
    d0: &DetectorParams,
    d1: &DetectorParams,
    sim: &SimOptions,
    search: &SearchOptions,
) -> Result<Vec<BreachReport>> {
    let mut combos = grid.combinations(cfg.n_slots);
    if let Some(b) = search.budget {
        combos.truncate(b);
    }
    let baseline = baseline_detection_rate(cfg, d0, d1, sim)?;
    combos.iter().map(|c| evaluate_against(c, cfg, d0, d1, sim, search.i_est, baseline)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::frame_rng;

    #[test]
    fn reference_plan_counts() {
        let cfg = FrameConfig::default();
        let combo = AttackCombination::reference();
        let plan = build_frame_plan(&combo, &cfg).unwrap();
        assert_eq!(plan.len(), 1075);
        assert_eq!(plan.count(SlotAction::is_thp), 334);
        assert_eq!(plan.count(|a| matches!(a, SlotAction::Block)), 433);
        assert_eq!(plan.count(|a| matches!(a, SlotAction::LowLoss { .. })), 308);
        let spans = burst_spans(&combo, 1075);
        assert_eq!(spans.len(), 12);
        assert!(spans[..11].iter().all(|s| s.1 == 28));
        assert_eq!(spans[11].1, 26);
    }

    #[test]
    fn post_burst_blocks_follow_bursts() {
        let cfg = FrameConfig::default();
        let combo = AttackCombination { layout: BlockLayout::PostBurst, ..AttackCombination::reference() };
        let plan = build_frame_plan(&combo, &cfg).unwrap();
        // first burst occupies 0..28; the slots right after it are dark
        assert!(plan.actions[28..60].iter().all(|a| matches!(a, SlotAction::Block)));
        assert!(matches!(plan.actions[85], SlotAction::LowLoss { .. }));
    }

    #[test]
    fn pre_burst_blocks_precede_bursts() {
        let cfg = FrameConfig::default();
        let combo = AttackCombination { layout: BlockLayout::PreBurst, ..AttackCombination::reference() };
        let plan = build_frame_plan(&combo, &cfg).unwrap();
        // second burst starts at 89
        assert!(plan.actions[60..89].iter().all(|a| matches!(a, SlotAction::Block)));
        assert!(matches!(plan.actions[28], SlotAction::LowLoss { .. }));
        assert_eq!(plan.count(|a| matches!(a, SlotAction::Block)), 433);
    }

    #[test]
    fn uniform_layout_counts() {
        let cfg = FrameConfig::default();
        let combo = AttackCombination { layout: BlockLayout::Uniform, ..AttackCombination::reference() };
        let plan = build_frame_plan(&combo, &cfg).unwrap();
        assert_eq!(plan.count(|a| matches!(a, SlotAction::Block)), 433);
        assert_eq!(plan.count(SlotAction::is_thp), 334);
    }

    #[test]
    fn degenerate_combinations() {
        let cfg = FrameConfig::default();
        let none = AttackCombination { n_thp_slots: 0, ..AttackCombination::reference() };
        let plan = build_frame_plan(&none, &cfg).unwrap();
        assert_eq!(plan.count(SlotAction::is_thp), 0);
        assert_eq!(plan.count(|a| matches!(a, SlotAction::Block)), 433);

        let all = AttackCombination { n_block: 1075, n_lowloss: 0, n_thp_slots: 0, ..AttackCombination::reference() };
        let plan = build_frame_plan(&all, &cfg).unwrap();
        assert!(plan.actions.iter().all(|a| matches!(a, SlotAction::Block)));
    }

    #[test]
    fn invalid_combinations() {
        let cfg = FrameConfig::default();
        let r = AttackCombination::reference();
        for bad in [
            AttackCombination { n_block: 400, ..r },
            AttackCombination { n_thp_slots: 700, ..r },
            AttackCombination { burst_len: 20, ..r },
            AttackCombination { n_bursts: 12, burst_len: 100, ..r },
            AttackCombination { t_ll: 1.5, ..r },
        ] {
            assert!(matches!(build_frame_plan(&bad, &cfg), Err(Error::InvalidCombination(_))), "{bad:?}");
        }
    }

    #[test]
    fn information_examples() {
        let mut rng = frame_rng(5, 0);
        let plain = vec![SlotOutcome { sifted: true, ..SlotOutcome::default() }; 100];
        assert_eq!(eve_information(&plain, 0.0, &mut rng), Some(0.0));
        let probed = vec![SlotOutcome { sifted: true, thp_slot: true, ..SlotOutcome::default() }; 100];
        assert_eq!(eve_information(&probed, 0.0, &mut rng), Some(1.0));
        assert_eq!(eve_information(&[SlotOutcome::default(); 10], 0.0, &mut rng), None);

        let n = 100_000;
        let half: Vec<SlotOutcome> = (0..n).map(|i| SlotOutcome { sifted: true, thp_slot: i % 2 == 0, ..SlotOutcome::default() }).collect();
        let i = eve_information(&half, 0.1, &mut rng).unwrap();
        let sigma = (0.45 * 0.55 / n as f64).sqrt();
        assert!((i - 0.45).abs() < 3.0 * sigma, "{i}");
    }

    #[test]
    fn breach_rule() {
        assert!(is_breach(Some(0.07), Some(0.52), 0.08, 0.506));
        assert!(!is_breach(Some(0.08), Some(0.52), 0.08, 0.506));
        assert!(!is_breach(Some(0.07), Some(0.506), 0.08, 0.506));
        assert!(!is_breach(None, None, 0.08, 0.506));
    }

    #[test]
    fn axis_ranges() {
        let a: Axis<usize> = serde_json::from_str(r#"{"min": 400, "max": 440, "step": 20}"#).unwrap();
        assert_eq!(a.values(), vec![400, 420, 440]);
        let b: Axis<f64> = serde_json::from_str(r#"{"min": 0.3, "max": 0.5, "step": 0.1}"#).unwrap();
        assert_eq!(b.values().len(), 3);
        let c: Axis<f64> = serde_json::from_str("[0.5, 0.9]").unwrap();
        assert_eq!(c.values(), vec![0.5, 0.9]);
    }

    #[test]
    fn grid_order_independent() {
        let r = AttackCombination::reference();
        let g1 = AttackGrid {
            n_block: Axis::Values(vec![433, 400]),
            t_ll: Axis::Values(vec![0.5, 0.4]),
            n_thp_slots: Axis::Values(vec![334, 0]),
            n_bursts: Axis::Values(vec![12]),
            burst_len: Axis::Values(vec![28]),
            thp_photons: Axis::Values(vec![2e6]),
            readout_theta: r.readout_theta,
            readout_mu: r.readout_mu,
            layout: BlockLayout::PostBurst,
        };
        let g2 = AttackGrid {
            n_block: Axis::Values(vec![400, 433, 400]),
            t_ll: Axis::Values(vec![0.4, 0.5]),
            n_thp_slots: Axis::Values(vec![0, 334]),
            ..g1.clone()
        };
        assert_eq!(g1.combinations(1075), g2.combinations(1075));
        assert_eq!(g1.combinations(1075).len(), 8);
    }
}
