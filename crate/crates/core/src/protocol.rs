//! Slot-level Monte Carlo of SARG04 frames through a two-detector gated
//! receiver, with an eavesdropper acting per slot.
//!
//! Sifting is statistical: every single-click slot enters the raw key
//! with probability `sieve_acceptance`. Each slot is one detector gate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{sample_gate_cause, AfterpulseTracker, ClickCause, DetectorParams};
use crate::error::{invalid, Error, Result};
use crate::stats::{wilson, Estimate};

fn default_slots() -> usize {
    1075
}
fn default_transmittance() -> f64 {
    0.25
}
fn default_signal_mu() -> f64 {
    0.6
}
fn default_intrinsic_qber() -> f64 {
    0.01
}
fn default_q_abort() -> f64 {
    0.08
}
fn default_sieve() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    #[serde(default = "default_slots")]
    pub n_slots: usize,
    /// Alice-to-Bob channel transmittance.
    #[serde(default = "default_transmittance")]
    pub channel_transmittance: f64,
    /// Mean photon number per signal pulse leaving Alice.
    #[serde(default = "default_signal_mu")]
    pub signal_mu: f64,
    /// Error probability of signal-caused clicks.
    #[serde(default = "default_intrinsic_qber")]
    pub intrinsic_qber: f64,
    #[serde(default = "default_q_abort")]
    pub q_abort: f64,
    /// Probability that a single-click slot survives sifting.
    #[serde(default = "default_sieve")]
    pub sieve_acceptance: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            n_slots: default_slots(),
            channel_transmittance: default_transmittance(),
            signal_mu: default_signal_mu(),
            intrinsic_qber: default_intrinsic_qber(),
            q_abort: default_q_abort(),
            sieve_acceptance: default_sieve(),
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(invalid("n_slots", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.channel_transmittance) {
            return Err(invalid("channel_transmittance", "must lie in [0, 1]"));
        }
        if !(self.signal_mu >= 0.0) {
            return Err(invalid("signal_mu", "must be >= 0"));
        }
        if !(0.0..0.5).contains(&self.intrinsic_qber) {
            return Err(invalid("intrinsic_qber", "must lie in [0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&self.q_abort) {
            return Err(invalid("q_abort", "must lie in [0, 1]"));
        }
        if !(self.sieve_acceptance > 0.0 && self.sieve_acceptance <= 1.0) {
            return Err(invalid("sieve_acceptance", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// What the eavesdropper does to one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SlotAction {
    /// Signal travels through the regular channel.
    Pass,
    /// Signal removed.
    Block,
    /// Signal forwarded over a line of transmittance `t_ll`.
    LowLoss { t_ll: f64 },
    /// As `LowLoss`, plus a Trojan-horse pulse of `thp_photons` at the
    /// receiver entrance.
    LowLossWithThp { t_ll: f64, thp_photons: f64 },
}

impl SlotAction {
    pub fn is_thp(&self) -> bool {
        matches!(self, SlotAction::LowLossWithThp { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SlotAction::LowLoss { t_ll } | SlotAction::LowLossWithThp { t_ll, .. } if !(0.0..=1.0).contains(&t_ll) => {
                Err(invalid("t_ll", "must lie in [0, 1]"))
            }
            SlotAction::LowLossWithThp { thp_photons, .. } if !(thp_photons >= 0.0) => Err(invalid("thp_photons", "must be >= 0")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub actions: Vec<SlotAction>,
    /// Eve's phase-readout error on THP slots.
    pub readout_error: f64,
}

impl FramePlan {
    pub fn uniform(action: SlotAction, n_slots: usize) -> Self {
        Self { actions: vec![action; n_slots], readout_error: 0.5 }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&SlotAction) -> bool) -> usize {
        self.actions.iter().filter(|a| pred(a)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub clicked_d0: bool,
    pub clicked_d1: bool,
    pub sifted: bool,
    pub bit_error: bool,
    pub thp_slot: bool,
    pub eve_knows_bit: bool,
    /// Cause of the single click, or of the D0 click in a double click.
    pub cause: Option<ClickCause>,
}

impl SlotOutcome {
    pub fn clicked(&self) -> bool {
        self.clicked_d0 || self.clicked_d1
    }
}

/// Whether Eve's homodyne readout of one slot succeeds.
pub fn readout_succeeds<R: Rng + ?Sized>(readout_error: f64, rng: &mut R) -> bool {
    rng.random::<f64>() >= readout_error
}

/// Simulates one frame. Detector state starts fresh: no deadtime, no trap
/// population.
pub fn run_frame<R: Rng + ?Sized>(cfg: &FrameConfig, plan: &FramePlan, d0: &DetectorParams, d1: &DetectorParams, rng: &mut R) -> Result<Vec<SlotOutcome>> {
    if plan.len() != cfg.n_slots {
        return Err(Error::PlanLength { plan: plan.len(), frame: cfg.n_slots });
    }
    let mut out = Vec::with_capacity(cfg.n_slots);
    run_frame_into(cfg, plan, d0, d1, rng, &mut out);
    Ok(out)
}

fn run_frame_into<R: Rng + ?Sized>(cfg: &FrameConfig, plan: &FramePlan, d0: &DetectorParams, d1: &DetectorParams, rng: &mut R, out: &mut Vec<SlotOutcome>) {
    let deadtime = d0.deadtime_gates.max(d1.deadtime_gates) as usize;
    let mut traps0 = AfterpulseTracker::new(d0);
    let mut traps1 = AfterpulseTracker::new(d1);
    let mut live_from = 0usize;

    for (slot, action) in plan.actions.iter().enumerate() {
        if slot > 0 {
            traps0.advance();
            traps1.advance();
        }
        let (transmittance, thp) = match *action {
            SlotAction::Pass => (cfg.channel_transmittance, None),
            SlotAction::Block => (0.0, None),
            SlotAction::LowLoss { t_ll } => (t_ll, None),
            SlotAction::LowLossWithThp { t_ll, thp_photons } => (t_ll, Some(thp_photons)),
        };
        let mut o = SlotOutcome { thp_slot: thp.is_some(), ..SlotOutcome::default() };

        if slot >= live_from {
            let mu = cfg.signal_mu * transmittance;
            // Averaged over Alice's state and Bob's basis, the pulse exits
            // either interferometer port with probability 1/2.
            let to_d0 = rng.random::<bool>();
            let c0 = sample_gate_cause(d0, if to_d0 { mu } else { 0.0 }, traps0.hazard(), rng);
            let c1 = sample_gate_cause(d1, if to_d0 { 0.0 } else { mu }, traps1.hazard(), rng);
            o.clicked_d0 = c0.is_some();
            o.clicked_d1 = c1.is_some();
            o.cause = c0.or(c1);
            if o.clicked() {
                live_from = slot + 1 + deadtime;
            }
            if o.clicked_d0 != o.clicked_d1 && rng.random::<f64>() < cfg.sieve_acceptance {
                o.sifted = true;
                let p_err = match o.cause {
                    Some(ClickCause::Signal) => cfg.intrinsic_qber,
                    _ => 0.5,
                };
                o.bit_error = rng.random::<f64>() < p_err;
                // drawn for every sifted bit so the stream does not depend on the plan
                let read = readout_succeeds(plan.readout_error, rng);
                o.eve_knows_bit = o.thp_slot && read;
            }
        }

        if let Some(n) = thp {
            traps0.inject(n);
            traps1.inject(n);
        }
        out.push(o);
    }
}

/// Integer counts accumulated over slots and frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub frames: u64,
    pub slots: u64,
    pub click_slots: u64,
    pub double_clicks: u64,
    pub sifted: u64,
    pub errors: u64,
    pub known: u64,
    pub thp_sifted: u64,
    pub signal_clicks: u64,
    pub afterpulse_clicks: u64,
    pub dark_clicks: u64,
}

impl Tally {
    pub fn from_outcomes(outcomes: &[SlotOutcome]) -> Self {
        let mut t = Tally { frames: 1, slots: outcomes.len() as u64, ..Tally::default() };
        for o in outcomes {
            if o.clicked() {
                t.click_slots += 1;
                match o.cause {
                    Some(ClickCause::Signal) => t.signal_clicks += 1,
                    Some(ClickCause::Afterpulse) => t.afterpulse_clicks += 1,
                    Some(ClickCause::Dark) => t.dark_clicks += 1,
                    None => {}
                }
            }
            if o.clicked_d0 && o.clicked_d1 {
                t.double_clicks += 1;
            }
            if o.sifted {
                t.sifted += 1;
                t.errors += u64::from(o.bit_error);
                t.known += u64::from(o.eve_knows_bit);
                t.thp_sifted += u64::from(o.thp_slot);
            }
        }
        t
    }

    pub fn merge(mut self, o: Tally) -> Tally {
        self.frames += o.frames;
        self.slots += o.slots;
        self.click_slots += o.click_slots;
        self.double_clicks += o.double_clicks;
        self.sifted += o.sifted;
        self.errors += o.errors;
        self.known += o.known;
        self.thp_sifted += o.thp_sifted;
        self.signal_clicks += o.signal_clicks;
        self.afterpulse_clicks += o.afterpulse_clicks;
        self.dark_clicks += o.dark_clicks;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// QBER of the sifted key; `None` when nothing was sifted.
    pub qber: Option<Estimate>,
    /// Fraction of sifted bits Eve knows.
    pub eve_info: Option<Estimate>,
    /// Click slots per slot.
    pub detection_rate: Estimate,
    pub sifted_count: u64,
    pub frames: u64,
    pub tally: Tally,
}

impl SimResult {
    pub fn from_tally(tally: Tally) -> Self {
        Self {
            qber: wilson(tally.errors, tally.sifted),
            eve_info: wilson(tally.known, tally.sifted),
            detection_rate: wilson(tally.click_slots, tally.slots).unwrap_or(Estimate { value: 0.0, lo: 0.0, hi: 0.0 }),
            sifted_count: tally.sifted,
            frames: tally.frames,
            tally,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_frames: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SimOptions {
    pub fn new(n_frames: u64, seed: u64) -> Self {
        Self { n_frames, seed, workers: None }
    }
}

/// Random stream for frame `frame` of a run seeded with `seed`.
pub fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

/// Runs `n_frames` independent frames. Each frame draws from its own
/// stream, so the result does not depend on the number of workers.
pub fn run_simulation(cfg: &FrameConfig, plan: &FramePlan, d0: &DetectorParams, d1: &DetectorParams, opts: &SimOptions) -> Result<SimResult> {
    cfg.validate()?;
    d0.validate()?;
    d1.validate()?;
    for a in &plan.actions {
        a.validate()?;
    }
    if !(0.0..=1.0).contains(&plan.readout_error) {
        return Err(invalid("readout_error", "must lie in [0, 1]"));
    }
    if opts.n_frames == 0 {
        return Err(invalid("n_frames", "must be >= 1"));
    }
    if plan.len() != cfg.n_slots {
        return Err(Error::PlanLength { plan: plan.len(), frame: cfg.n_slots });
    }

    let work = || {
        (0..opts.n_frames)
            .into_par_iter()
            .fold(
                || (Tally::default(), Vec::with_capacity(cfg.n_slots)),
                |(acc, mut buf), frame| {
                    buf.clear();
                    let mut rng = frame_rng(opts.seed, frame);
                    run_frame_into(cfg, plan, d0, d1, &mut rng, &mut buf);
                    (acc.merge(Tally::from_outcomes(&buf)), buf)
                },
            )
            .map(|(t, _)| t)
            .reduce(Tally::default, Tally::merge)
    };
    let tally = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(work),
        None => work(),
    };
    Ok(SimResult::from_tally(tally))
}
