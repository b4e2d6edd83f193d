//! Small domain types shared by every layer.

use std::fmt;
use std::net::Ipv4Addr;

/// Dense node handle handed out by the [`Binder`](crate::binder::Binder).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    ENodeB,
    Ue,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::ENodeB => "eNB",
            Role::Ue => "UE",
        })
    }
}

/// Planar position in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Radio direction of a grant or ledger entry. `Sl` shares the UL spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkDirection {
    Dl,
    Ul,
    Sl,
}

impl LinkDirection {
    pub const ALL: [LinkDirection; 3] = [LinkDirection::Dl, LinkDirection::Ul, LinkDirection::Sl];

    /// Spectrum partition: 0 for downlink, 1 for the uplink band that the
    /// sidelink reuses.
    pub fn partition(self) -> usize {
        match self {
            LinkDirection::Dl => 0,
            LinkDirection::Ul | LinkDirection::Sl => 1,
        }
    }

    pub fn same_partition(self, other: LinkDirection) -> bool {
        self.partition() == other.partition()
    }

    pub fn index(self) -> usize {
        match self {
            LinkDirection::Dl => 0,
            LinkDirection::Ul => 1,
            LinkDirection::Sl => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LinkDirection::Dl => "DL",
            LinkDirection::Ul => "UL",
            LinkDirection::Sl => "SL",
        }
    }
}

impl fmt::Display for LinkDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direction tag assigned to a packet by the PDCP fork.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowDirection {
    Dl,
    Ul,
    D2d,
    D2dMulti,
}

impl FlowDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowDirection::Dl => "DL",
            FlowDirection::Ul => "UL",
            FlowDirection::D2d => "D2D",
            FlowDirection::D2dMulti => "D2D_MULTI",
        }
    }

    /// Radio direction of the first hop.
    pub fn first_hop(self) -> LinkDirection {
        match self {
            FlowDirection::Dl => LinkDirection::Dl,
            FlowDirection::Ul => LinkDirection::Ul,
            FlowDirection::D2d | FlowDirection::D2dMulti => LinkDirection::Sl,
        }
    }
}

impl fmt::Display for FlowDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Communication mode of a peered (sender, receiver) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Direct sidelink.
    Dm,
    /// Two-hop relay through the eNB.
    Im,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dm => "DM",
            Mode::Im => "IM",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "DM" | "D2D" => Some(Mode::Dm),
            "IM" | "INFRA" => Some(Mode::Im),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a packet is headed: a single node or a multicast group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Destination {
    Node(NodeId),
    Group(Ipv4Addr),
}
