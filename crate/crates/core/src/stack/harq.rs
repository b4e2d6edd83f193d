//! Stop-and-wait HARQ for unicast links.

use super::{StackError, TransportBlock};
use crate::types::LinkDirection;

pub const HARQ_PROCESSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HarqState {
    Idle,
    WaitingFeedback,
    /// NACKed and waiting for a grant to retransmit.
    PendingRetx,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HarqAction {
    Release,
    Retransmit,
    DropAndRelease { dropped: TransportBlock },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarqProcess {
    pub process_id: u8,
    pub state: HarqState,
    /// Transmissions made so far, the pending retransmission included.
    pub tx_count: u32,
    pub max_retx: u32,
    pub pdu: Option<TransportBlock>,
    pub direction: LinkDirection,
    /// RB count and CQI of the first transmission, reused for retransmissions.
    pub rbs: u16,
    pub cqi: u8,
    /// Bumped whenever the process takes a new block or is flushed.
    pub generation: u64,
}

impl HarqProcess {
    pub fn new(process_id: u8, direction: LinkDirection, max_retx: u32) -> Self {
        Self {
            process_id,
            state: HarqState::Idle,
            tx_count: 0,
            max_retx,
            pdu: None,
            direction,
            rbs: 0,
            cqi: 0,
            generation: 0,
        }
    }

    /// Takes ownership of a freshly transmitted block.
    pub fn start(&mut self, block: TransportBlock, rbs: u16, cqi: u8) -> Result<(), StackError> {
        if self.state != HarqState::Idle {
            return Err(StackError::InvalidState {
                process: self.process_id,
                state: self.state,
            });
        }
        if block.carries_multicast() {
            return Err(StackError::MulticastHarq);
        }
        self.state = HarqState::WaitingFeedback;
        self.generation += 1;
        self.tx_count = 1;
        self.pdu = Some(block);
        self.rbs = rbs;
        self.cqi = cqi;
        Ok(())
    }

    /// Marks the pending retransmission as sent.
    pub fn retransmitted(&mut self) -> Result<(), StackError> {
        if self.state != HarqState::PendingRetx {
            return Err(StackError::InvalidState {
                process: self.process_id,
                state: self.state,
            });
        }
        self.state = HarqState::WaitingFeedback;
        Ok(())
    }

    /// Forces the process back to idle, returning whatever it held.
    pub fn flush(&mut self) -> Option<TransportBlock> {
        self.generation += 1;
        self.state = HarqState::Idle;
        self.tx_count = 0;
        self.pdu.take()
    }

    fn release(&mut self) -> Option<TransportBlock> {
        self.flush()
    }
}

/// Applies ACK/NACK feedback to a process that is waiting for it.
pub fn harq_on_feedback(process: &mut HarqProcess, ack: bool) -> Result<HarqAction, StackError> {
    if process.state != HarqState::WaitingFeedback {
        return Err(StackError::InvalidState {
            process: process.process_id,
            state: process.state,
        });
    }
    if ack {
        process.release();
        return Ok(HarqAction::Release);
    }
    if process.tx_count <= process.max_retx {
        process.tx_count += 1;
        process.state = HarqState::PendingRetx;
        Ok(HarqAction::Retransmit)
    } else {
        let dropped = process.release().expect("a waiting process holds a block");
        Ok(HarqAction::DropAndRelease { dropped })
    }
}

/// The HARQ processes of one (transmitter, receiver, direction) link.
#[derive(Clone, Debug)]
pub struct HarqEntity {
    processes: Vec<HarqProcess>,
}

impl HarqEntity {
    pub fn new(direction: LinkDirection, max_retx: u32) -> Self {
        Self {
            processes: (0..HARQ_PROCESSES as u8)
                .map(|id| HarqProcess::new(id, direction, max_retx))
                .collect(),
        }
    }

    pub fn idle_process(&self) -> Option<u8> {
        self.processes
            .iter()
            .find(|p| p.state == HarqState::Idle)
            .map(|p| p.process_id)
    }

    pub fn pending_retx(&self) -> Option<u8> {
        self.processes
            .iter()
            .find(|p| p.state == HarqState::PendingRetx)
            .map(|p| p.process_id)
    }

    pub fn process(&self, id: u8) -> &HarqProcess {
        &self.processes[usize::from(id)]
    }

    pub fn process_mut(&mut self, id: u8) -> &mut HarqProcess {
        &mut self.processes[usize::from(id)]
    }

    pub fn processes(&self) -> &[HarqProcess] {
        &self.processes
    }

    pub fn processes_mut(&mut self) -> &mut [HarqProcess] {
        &mut self.processes
    }

    /// Number of processes currently holding a one-to-many block.
    pub fn multicast_blocks_held(&self) -> usize {
        self.processes
            .iter()
            .filter(|p| p.pdu.as_ref().is_some_and(TransportBlock::carries_multicast))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::{Leg, PacketDescriptor, Segment};
    use crate::types::{Destination, FlowDirection, NodeId};

    fn block(direction: FlowDirection) -> TransportBlock {
        let packet = PacketDescriptor {
            flow_id: 0,
            leg: Leg::Forward,
            seq_no: 0,
            bytes: 10,
            src: NodeId(1),
            dst: match direction {
                FlowDirection::D2dMulti => Destination::Group("224.0.0.10".parse().unwrap()),
                _ => Destination::Node(NodeId(2)),
            },
            direction,
            created_tti: 0,
            delivered_tti: None,
        };
        TransportBlock {
            segments: vec![Segment {
                packet,
                offset: 0,
                len: 10,
            }],
            tbs_bits: 248,
            payload_bits: 80,
        }
    }

    fn waiting(tx_count: u32) -> HarqProcess {
        let mut p = HarqProcess::new(0, LinkDirection::Sl, 3);
        p.start(block(FlowDirection::D2d), 1, 7).unwrap();
        p.tx_count = tx_count;
        p
    }

    #[test]
    fn ack_releases() {
        let mut p = waiting(1);
        assert_eq!(harq_on_feedback(&mut p, true).unwrap(), HarqAction::Release);
        assert_eq!(p.state, HarqState::Idle);
        assert!(p.pdu.is_none());
    }

    #[test]
    fn nack_below_cap_retransmits() {
        let mut p = waiting(1);
        assert_eq!(harq_on_feedback(&mut p, false).unwrap(), HarqAction::Retransmit);
        assert_eq!((p.state, p.tx_count), (HarqState::PendingRetx, 2));
        assert!(p.pdu.is_some());
    }

    #[test]
    fn nack_past_cap_drops() {
        let mut p = waiting(4);
        assert!(matches!(
            harq_on_feedback(&mut p, false).unwrap(),
            HarqAction::DropAndRelease { .. }
        ));
        assert_eq!(p.state, HarqState::Idle);
    }

    #[test]
    fn feedback_on_idle_is_invalid() {
        let mut p = HarqProcess::new(3, LinkDirection::Ul, 3);
        assert_eq!(
            harq_on_feedback(&mut p, true),
            Err(StackError::InvalidState {
                process: 3,
                state: HarqState::Idle
            })
        );
    }

    #[test]
    fn total_transmissions_bounded_by_retx_cap() {
        let mut p = waiting(1);
        let mut sent = 1;
        loop {
            assert!(p.tx_count <= 1 + p.max_retx);
            match harq_on_feedback(&mut p, false).unwrap() {
                HarqAction::Retransmit => {
                    p.retransmitted().unwrap();
                    sent += 1;
                }
                HarqAction::DropAndRelease { .. } => break,
                HarqAction::Release => unreachable!(),
            }
        }
        assert_eq!(sent, 4);
    }

    #[test]
    fn multicast_block_rejected() {
        let mut p = HarqProcess::new(0, LinkDirection::Sl, 3);
        assert_eq!(
            p.start(block(FlowDirection::D2dMulti), 1, 7),
            Err(StackError::MulticastHarq)
        );
        let e = HarqEntity::new(LinkDirection::Sl, 3);
        assert_eq!(e.multicast_blocks_held(), 0);
        assert_eq!(e.idle_process(), Some(0));
        assert_eq!(e.pending_retx(), None);
    }
}
