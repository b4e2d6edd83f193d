//! The TTI-driven simulation engine.
//!
//! [`run`] builds every node from a validated scenario and drives it for
//! `sim.ttiCount` TTIs. Within a TTI, events fire in [`events::Phase`] order
//! and, within a phase, in the order they were scheduled, so a run is a pure
//! function of the scenario and its seed.

pub mod events;
pub mod metrics;
pub mod rng;
mod sim;

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::types::Mode;

pub use events::Phase;
pub use metrics::{FlowMetrics, LossCause, MetricsReport, RunSummary};
pub use sim::Simulation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("event for TTI {fire_tti} ({phase:?}) scheduled in the past (now TTI {now_tti})")]
    PastEvent { fire_tti: u64, phase: Phase, now_tti: u64 },
    #[error(
        "packet accounting broken: {mismatches} flow legs do not balance and {leaked} packets are unaccounted for"
    )]
    ConservationViolated { mismatches: u64, leaked: u64 },
    #[error("scenario references unknown node `{0}`")]
    UnknownNode(String),
}

/// Switches for one run that are not part of the scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Pin every peered pair to this mode for the whole run; mode selection
    /// and scripted switches are disabled.
    pub forced_mode: Option<Mode>,
    /// Record a per-event trace.
    pub trace: bool,
    /// Record every ledger entry of every TTI.
    pub ledger_dump: bool,
}

/// Validates `config` and runs it to completion.
pub fn run(config: &ScenarioConfig, options: RunOptions) -> Result<MetricsReport> {
    Simulation::new(config, options)?.run()
}
