//! The binder: network-wide registry of nodes, the per-TTI resource-block
//! ledger and multicast group membership.
//!
//! Every layer of every node may read from the binder; only the engine writes
//! to it, and only for the current TTI.

mod ledger;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::types::{NodeId, Position, Role};

pub use ledger::{AllocationEntry, RbSet, LEDGER_WINDOW_TTIS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BinderError {
    #[error("node `{0}` is already registered")]
    DuplicateName(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNodeName(String),
    #[error("node `{name}` has a non-finite position")]
    InvalidPosition { name: String },
    #[error("RB {rb} out of range (numRbs = {num_rbs})")]
    OutOfRangeRb { rb: u16, num_rbs: u16 },
    #[error("TTI {tti}: {direction} RB {rb} already allocated to {holder}")]
    RbConflict {
        tti: u64,
        direction: crate::types::LinkDirection,
        rb: u16,
        holder: NodeId,
    },
    #[error("TTI {tti} is older than the ledger window")]
    StaleTti { tti: u64 },
    #[error("unknown multicast group {0}")]
    UnknownGroup(Ipv4Addr),
    #[error("multicast membership is frozen once the scenario has started")]
    MembershipFrozen,
    #[error("only UEs can join multicast groups (node {0})")]
    NotAUe(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    /// Assigned by [`Binder::register_node`]; any value passed in is ignored.
    pub id: NodeId,
    pub name: String,
    pub role: Role,
    pub position: Position,
    pub d2d_capable: bool,
}

impl NodeRecord {
    pub fn new(name: impl Into<String>, role: Role, position: Position, d2d_capable: bool) -> Self {
        Self {
            id: NodeId(u32::MAX),
            name: name.into(),
            role,
            position,
            d2d_capable,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Binder {
    nodes: Vec<NodeRecord>,
    by_name: HashMap<String, NodeId>,
    num_rbs: u16,
    ledger: ledger::Ledger,
    groups: BTreeMap<Ipv4Addr, BTreeSet<NodeId>>,
    frozen: bool,
}

impl Binder {
    pub fn new(num_rbs: u16) -> Self {
        Self {
            nodes: Vec::new(),
            by_name: HashMap::new(),
            num_rbs,
            ledger: ledger::Ledger::default(),
            groups: BTreeMap::new(),
            frozen: false,
        }
    }

    pub fn num_rbs(&self) -> u16 {
        self.num_rbs
    }

    pub fn register_node(&mut self, mut record: NodeRecord) -> Result<NodeId, BinderError> {
        if self.by_name.contains_key(&record.name) {
            return Err(BinderError::DuplicateName(record.name));
        }
        if !record.position.is_finite() {
            return Err(BinderError::InvalidPosition { name: record.name });
        }
        let id = NodeId(self.nodes.len() as u32);
        record.id = id;
        self.by_name.insert(record.name.clone(), id);
        self.nodes.push(record);
        Ok(id)
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeRecord, BinderError> {
        self.nodes.get(id.index()).ok_or(BinderError::UnknownNode(id))
    }

    pub fn lookup(&self, name: &str) -> Result<NodeId, BinderError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| BinderError::UnknownNodeName(name.to_string()))
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    /// Moves a node. Used by sweeps that probe a link at several distances.
    pub fn set_position(&mut self, id: NodeId, position: Position) -> Result<(), BinderError> {
        let node = self.nodes.get_mut(id.index()).ok_or(BinderError::UnknownNode(id))?;
        if !position.is_finite() {
            return Err(BinderError::InvalidPosition {
                name: node.name.clone(),
            });
        }
        node.position = position;
        Ok(())
    }

    /// The (single) eNB, if one is registered.
    pub fn enb(&self) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.role == Role::ENodeB).map(|n| n.id)
    }

    pub fn ues(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.iter().filter(|n| n.role == Role::Ue)
    }

    pub fn record_allocation(&mut self, tti: u64, entry: AllocationEntry) -> Result<(), BinderError> {
        self.node(entry.node)?;
        self.ledger.record(tti, entry, self.num_rbs)
    }

    /// Entries of `tti` that share the spectrum partition of `direction`,
    /// overlap `rbs` and were not made by `exclude`, ordered by node id.
    pub fn get_interferers(
        &self,
        tti: u64,
        rbs: &RbSet,
        direction: crate::types::LinkDirection,
        exclude: NodeId,
    ) -> Vec<AllocationEntry> {
        self.ledger.interferers(tti, rbs, direction, exclude)
    }

    pub fn entries(&self, tti: u64) -> &[AllocationEntry] {
        self.ledger.entries(tti)
    }

    /// RBs used by infrastructure (DL, UL) entries of `tti`, per partition.
    pub fn infrastructure_usage(&self, tti: u64) -> [usize; 2] {
        self.ledger.infrastructure_usage(tti)
    }

    /// Number of infrastructure partitions whose usage exceeds `numRbs`.
    pub fn conservation_violations(&self, tti: u64) -> usize {
        self.infrastructure_usage(tti)
            .iter()
            .filter(|&&used| used > usize::from(self.num_rbs))
            .count()
    }

    pub fn register_group(
        &mut self,
        group: Ipv4Addr,
        members: impl IntoIterator<Item = NodeId>,
    ) -> Result<(), BinderError> {
        if self.frozen {
            return Err(BinderError::MembershipFrozen);
        }
        let mut set = BTreeSet::new();
        for id in members {
            if self.node(id)?.role != Role::Ue {
                return Err(BinderError::NotAUe(id));
            }
            set.insert(id);
        }
        self.groups.insert(group, set);
        Ok(())
    }

    /// Makes membership immutable; called when the run starts.
    pub fn freeze_membership(&mut self) {
        self.frozen = true;
    }

    pub fn is_member(&self, group: Ipv4Addr, node: NodeId) -> Result<bool, BinderError> {
        self.groups
            .get(&group)
            .map(|members| members.contains(&node))
            .ok_or(BinderError::UnknownGroup(group))
    }

    pub fn group_members(&self, group: Ipv4Addr) -> Result<&BTreeSet<NodeId>, BinderError> {
        self.groups.get(&group).ok_or(BinderError::UnknownGroup(group))
    }
}
