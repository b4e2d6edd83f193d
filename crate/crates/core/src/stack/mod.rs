//! Per-node protocol stack.
//!
//! Each layer is a set of plain data structures and functions; the engine owns
//! one instance per node (or per link) and calls into them in phase order.

pub mod harq;
pub mod mac;
pub mod pdcp;
pub mod phy;
pub mod rlc;

use std::fmt;

use thiserror::Error;

use crate::binder::BinderError;
use crate::channel::ChannelError;
use crate::types::{Destination, FlowDirection, NodeId};

pub use harq::{harq_on_feedback, HarqAction, HarqEntity, HarqProcess, HarqState, HARQ_PROCESSES};
pub use mac::{amc_tbs, mac_schedule, ScheduleGrant, SchedulerSettings, SchedulingRequest};
pub use pdcp::pdcp_classify;
pub use phy::{phy_receive, phy_send_broadcast, phy_send_unicast, Reception, RxResult};
pub use rlc::{rlc_segment, ReorderBuffer, RlcQueue, RlcReceiver, Segment, TransportBlock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StackError {
    #[error("destination `{0}` cannot be resolved")]
    UnresolvableDestination(String),
    #[error("invalid CQI {0}; expected 1..=15")]
    InvalidCqi(u8),
    #[error("HARQ process {process} is {state:?}, expected it to be waiting for feedback")]
    InvalidState { process: u8, state: HarqState },
    #[error("a one-to-many block cannot be placed in a HARQ process")]
    MulticastHarq,
    #[error(transparent)]
    Binder(#[from] BinderError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// The two legs of a flow: the generated packets, and the replies of a
/// request/response flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Leg {
    #[default]
    Forward,
    Reverse,
}

impl Leg {
    pub fn as_str(self) -> &'static str {
        match self {
            Leg::Forward => "fwd",
            Leg::Reverse => "rev",
        }
    }
}

/// Identity of one application packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketKey {
    pub flow_id: u32,
    pub leg: Leg,
    pub seq_no: u64,
}

impl fmt::Display for PacketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.flow_id, self.leg.as_str(), self.seq_no)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketDescriptor {
    pub flow_id: u32,
    pub leg: Leg,
    pub seq_no: u64,
    pub bytes: u32,
    pub src: NodeId,
    pub dst: Destination,
    pub direction: FlowDirection,
    pub created_tti: u64,
    pub delivered_tti: Option<u64>,
}

impl PacketDescriptor {
    pub fn key(&self) -> PacketKey {
        PacketKey {
            flow_id: self.flow_id,
            leg: self.leg,
            seq_no: self.seq_no,
        }
    }

    pub fn bits(&self) -> u64 {
        u64::from(self.bytes) * 8
    }

    pub fn is_multicast(&self) -> bool {
        self.direction == FlowDirection::D2dMulti
    }
}
