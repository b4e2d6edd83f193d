use std::net::Ipv4Addr;

use super::{ScheduleGrant, StackError, TransportBlock};
use crate::binder::{Binder, RbSet};
use crate::channel::{ChannelModel, ShadowingField, SinrReport};
use crate::types::{LinkDirection, NodeId};

/// A transport block on its way to one receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct Reception {
    /// TTI of the transmission; the ledger of this TTI supplies interference.
    pub tx_tti: u64,
    pub fire_tti: u64,
    pub tx: NodeId,
    pub rx: NodeId,
    pub direction: LinkDirection,
    pub block: TransportBlock,
    pub rbs: RbSet,
    pub tx_power_dbm: f64,
    pub cqi: u8,
    /// HARQ process awaiting feedback, for unicast blocks.
    pub harq_process: Option<u8>,
    /// Generation of that process when the block was sent.
    pub harq_generation: u64,
    pub group: Option<Ipv4Addr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RxResult {
    /// Not subscribed to the block's group; dropped before decoding.
    Filtered,
    Decoded(SinrReport),
    Failed(SinrReport),
}

/// Sends `block` directly to `dst`; it is received one TTI later.
pub fn phy_send_unicast(
    block: TransportBlock,
    src: NodeId,
    dst: NodeId,
    grant: &ScheduleGrant,
    harq_process: Option<u8>,
) -> Reception {
    Reception {
        tx_tti: grant.tti,
        fire_tti: grant.tti + 1,
        tx: src,
        rx: dst,
        direction: grant.direction,
        block,
        rbs: grant.rbs.clone(),
        tx_power_dbm: grant.tx_power_dbm,
        cqi: grant.cqi,
        harq_process,
        harq_generation: 0,
        group: None,
    }
}

/// Sends a copy of `block` to every UE other than `src`, in node order.
/// Membership is checked on reception, not here.
pub fn phy_send_broadcast(
    block: &TransportBlock,
    src: NodeId,
    group: Ipv4Addr,
    grant: &ScheduleGrant,
    binder: &Binder,
) -> Vec<Reception> {
    binder
        .ues()
        .filter(|ue| ue.id != src)
        .map(|ue| Reception {
            rx: ue.id,
            group: Some(group),
            ..phy_send_unicast(block.clone(), src, ue.id, grant, None)
        })
        .collect()
}

/// Runs the channel model for one reception.
pub fn phy_receive(
    reception: &Reception,
    binder: &Binder,
    channel: &ChannelModel,
    shadowing: &ShadowingField,
) -> Result<RxResult, StackError> {
    if let Some(group) = reception.group {
        if !binder.is_member(group, reception.rx)? {
            return Ok(RxResult::Filtered);
        }
    }
    let report = channel.compute_sinr(
        binder,
        shadowing,
        reception.tx,
        reception.rx,
        &reception.rbs,
        reception.tx_power_dbm,
        reception.tx_tti,
    )?;
    Ok(if channel.decode(&report, reception.cqi)? {
        RxResult::Decoded(report)
    } else {
        RxResult::Failed(report)
    })
}
