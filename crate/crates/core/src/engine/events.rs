use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::EngineError;
use crate::mode_selection::ModeSwitchCommand;
use crate::stack::{Reception, ScheduleGrant};
use crate::types::{LinkDirection, Mode, NodeId};

/// Order of event kinds within one TTI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    PacketArrival,
    CqiReport,
    ModeSelection,
    ModeSwitchApply,
    Schedule,
    Transmit,
    Receive,
    HarqFeedback,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    PacketArrival {
        flow: usize,
    },
    CqiReport,
    /// A policy round, or a scripted switch of every pair to `forced`.
    ModeSelection {
        forced: Option<Mode>,
    },
    ModeSwitchApply(ModeSwitchCommand),
    Schedule,
    Transmit(ScheduleGrant),
    Receive(Box<Reception>),
    HarqFeedback {
        tx: NodeId,
        rx: NodeId,
        direction: LinkDirection,
        process: u8,
        generation: u64,
        ack: bool,
    },
}

impl EventKind {
    pub fn phase(&self) -> Phase {
        match self {
            EventKind::PacketArrival { .. } => Phase::PacketArrival,
            EventKind::CqiReport => Phase::CqiReport,
            EventKind::ModeSelection { .. } => Phase::ModeSelection,
            EventKind::ModeSwitchApply(_) => Phase::ModeSwitchApply,
            EventKind::Schedule => Phase::Schedule,
            EventKind::Transmit(_) => Phase::Transmit,
            EventKind::Receive(_) => Phase::Receive,
            EventKind::HarqFeedback { .. } => Phase::HarqFeedback,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Event {
    pub fire_tti: u64,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Event {
    fn key(&self) -> (u64, Phase, u64) {
        (self.fire_tti, self.kind.phase(), self.sequence)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Pending events, dispatched in `(fire_tti, phase, sequence)` order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_sequence: u64,
    now: Option<(u64, Phase)>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues an event. Events may target the current TTI only in the
    /// current or a later phase.
    pub fn schedule(&mut self, fire_tti: u64, kind: EventKind) -> Result<(), EngineError> {
        let phase = kind.phase();
        if let Some(now) = self.now {
            if (fire_tti, phase) < now {
                return Err(EngineError::PastEvent {
                    fire_tti,
                    phase,
                    now_tti: now.0,
                });
            }
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            fire_tti,
            sequence,
            kind,
        });
        Ok(())
    }

    /// Removes the next event if it fires no later than `tti`.
    pub fn pop_due(&mut self, tti: u64) -> Option<Event> {
        if self.heap.peek()?.fire_tti > tti {
            return None;
        }
        let ev = self.heap.pop()?;
        self.now = Some((ev.fire_tti, ev.kind.phase()));
        Some(ev)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Event> {
        self.heap.iter()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
