//! Simulation of a long-wavelength Trojan-horse attack on a gated-detector
//! QKD receiver running SARG04.
//!
//! The pipeline runs from the receiver's optical loss budget
//! ([`optics`]) and modulator response ([`readout`]) through the
//! afterpulse-suppression factors ([`detector`], [`factors`]) to a
//! slot-level Monte Carlo of attacked frames ([`protocol`]) and a search
//! over attack combinations ([`attack`]).

pub mod attack;
pub mod config;
pub mod detector;
pub mod error;
pub mod factors;
pub mod fit;
pub mod histogram;
pub mod optics;
pub mod protocol;
pub mod readout;
pub mod stats;

pub use attack::{build_frame_plan, evaluate, optimize, AttackCombination, AttackGrid, BlockLayout, BreachReport};
pub use config::Config;
pub use detector::{AfterpulseCounts, DetectorParams};
pub use error::{Error, Result};
pub use factors::Factors;
pub use histogram::CountHistogram;
pub use optics::WavelengthProfile;
pub use protocol::{run_frame, run_simulation, FrameConfig, FramePlan, SimOptions, SimResult, SlotAction, SlotOutcome};
pub use readout::{CoherentPair, ModulatorResponse};
