//! Mode selection: which peered pairs talk over the sidelink (DM) and which
//! go through the eNB (IM), and the switch protocol between the two.

mod policy;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::binder::Binder;
use crate::config::ScenarioConfig;
use crate::types::{Mode, NodeId};

pub use policy::{best_cqi_decide, BestCqiPolicy, ModeSelectionPolicy, PairState, PolicyRegistry, TIE_BREAK_MODE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModeSelectionError {
    #[error("unknown mode selection policy `{0}`")]
    UnknownPolicy(String),
    #[error("unknown node `{0}` in the peering list")]
    UnknownNode(String),
}

/// Current mode of every (sender, peer) pair listed in the configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeeringTable {
    entries: BTreeMap<NodeId, Vec<(NodeId, Mode)>>,
}

impl PeeringTable {
    /// Mirrors the `d2dPeerAddresses` lists. A pair starts in DM when both
    /// endpoints are D2D capable, and in IM otherwise.
    pub fn from_config(config: &ScenarioConfig, binder: &Binder) -> Result<Self, ModeSelectionError> {
        let mut table = Self::default();
        for node in &config.nodes {
            if node.d2d_peer_addresses.is_empty() {
                continue;
            }
            let sender = binder
                .lookup(&node.name)
                .map_err(|_| ModeSelectionError::UnknownNode(node.name.clone()))?;
            for peer_name in &node.d2d_peer_addresses {
                let peer = binder
                    .lookup(peer_name)
                    .map_err(|_| ModeSelectionError::UnknownNode(peer_name.clone()))?;
                let capable =
                    binder.node(sender).is_ok_and(|n| n.d2d_capable) && binder.node(peer).is_ok_and(|n| n.d2d_capable);
                table.insert(sender, peer, if capable { Mode::Dm } else { Mode::Im });
            }
        }
        Ok(table)
    }

    pub fn insert(&mut self, sender: NodeId, peer: NodeId, mode: Mode) {
        let peers = self.entries.entry(sender).or_default();
        match peers.iter_mut().find(|(p, _)| *p == peer) {
            Some(slot) => slot.1 = mode,
            None => peers.push((peer, mode)),
        }
    }

    pub fn mode(&self, sender: NodeId, peer: NodeId) -> Option<Mode> {
        self.entries
            .get(&sender)?
            .iter()
            .find(|(p, _)| *p == peer)
            .map(|&(_, m)| m)
    }

    /// Updates an existing pair; returns the previous mode, or `None` when
    /// the pair is not in the table.
    pub fn set_mode(&mut self, sender: NodeId, peer: NodeId, mode: Mode) -> Option<Mode> {
        let slot = self.entries.get_mut(&sender)?.iter_mut().find(|(p, _)| *p == peer)?;
        Some(std::mem::replace(&mut slot.1, mode))
    }

    pub fn set_all(&mut self, mode: Mode) {
        for peers in self.entries.values_mut() {
            for slot in peers.iter_mut() {
                slot.1 = mode;
            }
        }
    }

    pub fn peers(&self, sender: NodeId) -> &[(NodeId, Mode)] {
        self.entries.get(&sender).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All pairs as `(sender, peer, mode)`, ordered by sender then list order.
    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId, Mode)> + '_ {
        self.entries
            .iter()
            .flat_map(|(&s, peers)| peers.iter().map(move |&(p, m)| (s, p, m)))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// eNB instruction to move a pair to `new_mode`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ModeSwitchCommand {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub new_mode: Mode,
    pub issued_tti: u64,
}

/// Delay between issuing a switch command and both endpoints applying it.
pub const SWITCH_DELAY_TTIS: u64 = 1;

/// Runs one mode-selection round.
///
/// `cqi` returns the (UL CQI of the sender, SL CQI of the pair) the policy
/// should see. Decisions that keep the current mode and decisions about pairs
/// that are not peered are dropped; the rest come back ordered by sender,
/// then receiver.
pub fn do_mode_selection(
    tti: u64,
    peering: &PeeringTable,
    mut cqi: impl FnMut(NodeId, NodeId) -> (u8, u8),
    policy: &mut dyn ModeSelectionPolicy,
) -> Vec<ModeSwitchCommand> {
    let pairs: Vec<PairState> = peering
        .pairs()
        .map(|(sender, receiver, mode)| {
            let (ul_cqi, sl_cqi) = cqi(sender, receiver);
            PairState {
                sender,
                receiver,
                mode,
                ul_cqi,
                sl_cqi,
            }
        })
        .collect();
    let mut commands: Vec<ModeSwitchCommand> = policy
        .select(tti, &pairs)
        .into_iter()
        .filter(|&(s, r, m)| peering.mode(s, r).is_some_and(|current| current != m))
        .map(|(sender, receiver, new_mode)| ModeSwitchCommand {
            sender,
            receiver,
            new_mode,
            issued_tti: tti,
        })
        .collect();
    commands.sort_by_key(|c| (c.sender, c.receiver));
    commands.dedup_by_key(|c| (c.sender, c.receiver));
    commands
}

/// Flips the pair's routing. Returns the mode it had, or `None` if the
/// command is stale (pair unknown or already in `new_mode`).
pub fn apply_mode_switch(cmd: &ModeSwitchCommand, peering: &mut PeeringTable) -> Option<Mode> {
    match peering.mode(cmd.sender, cmd.receiver) {
        Some(current) if current != cmd.new_mode => peering.set_mode(cmd.sender, cmd.receiver, cmd.new_mode),
        _ => None,
    }
}
