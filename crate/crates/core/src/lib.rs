//! System-level simulation of an LTE-Advanced cell with device-to-device
//! (D2D) sidelink support.
//!
//! The crate is organised the way the radio stack is:
//!
//! - [`config`] parses INI-style scenario files into a [`config::ScenarioConfig`].
//! - [`binder`] is the network-wide registry of nodes, resource-block
//!   allocations and multicast membership.
//! - [`channel`] turns geometry and the allocation ledger into SINR, CQI and
//!   decode decisions.
//! - [`stack`] holds the per-node PDCP/RLC/MAC/HARQ/PHY logic.
//! - [`mode_selection`] switches peered UE pairs between direct and
//!   infrastructure paths.
//! - [`engine`] drives everything TTI by TTI and accumulates metrics.
//! - [`cli`] is the command-line runner and the built-in sweeps.

pub mod binder;
pub mod channel;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod mode_selection;
pub mod stack;
pub mod types;

pub use error::{Error, Result};
pub use types::{Destination, FlowDirection, LinkDirection, Mode, NodeId, Position, Role};
