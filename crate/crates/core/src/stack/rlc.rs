//! RLC in unacknowledged mode: segmentation at the sender, reassembly and
//! in-sequence delivery at the receiver.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{Leg, PacketDescriptor, PacketKey};

#[derive(Clone, Debug)]
struct Sdu {
    packet: PacketDescriptor,
    sent_bytes: u32,
}

/// Transmission queue of one (sender, direction, target) link.
#[derive(Clone, Debug, Default)]
pub struct RlcQueue {
    sdus: VecDeque<Sdu>,
}

impl RlcQueue {
    pub fn push(&mut self, packet: PacketDescriptor) {
        self.sdus.push_back(Sdu { packet, sent_bytes: 0 });
    }

    pub fn is_empty(&self) -> bool {
        self.sdus.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sdus.len()
    }

    /// Bits still waiting to be sent, including the unsent part of a
    /// partially transmitted packet.
    pub fn backlog_bits(&self) -> u64 {
        self.sdus
            .iter()
            .map(|s| u64::from(s.packet.bytes - s.sent_bytes) * 8)
            .sum()
    }

    pub fn packets(&self) -> impl Iterator<Item = &PacketDescriptor> {
        self.sdus.iter().map(|s| &s.packet)
    }

    /// Removes every queued packet matching `pred` and returns them.
    pub fn remove_where(&mut self, mut pred: impl FnMut(&PacketDescriptor) -> bool) -> Vec<PacketDescriptor> {
        let mut removed = Vec::new();
        self.sdus.retain(|s| {
            if pred(&s.packet) {
                removed.push(s.packet);
                false
            } else {
                true
            }
        });
        removed
    }
}

/// A byte range of one packet carried in a transport block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub packet: PacketDescriptor,
    pub offset: u32,
    pub len: u32,
}

impl Segment {
    pub fn is_whole(&self) -> bool {
        self.offset == 0 && self.len == self.packet.bytes
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransportBlock {
    pub segments: Vec<Segment>,
    pub tbs_bits: u32,
    pub payload_bits: u32,
}

impl TransportBlock {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn padding_bits(&self) -> u32 {
        self.tbs_bits - self.payload_bits
    }

    pub fn carries_multicast(&self) -> bool {
        self.segments.iter().any(|s| s.packet.is_multicast())
    }

    pub fn packet_keys(&self) -> impl Iterator<Item = PacketKey> + '_ {
        self.segments.iter().map(|s| s.packet.key())
    }
}

/// Fills a transport block of `tbs_bits` from the head of `queue`.
///
/// Packets are taken in order; the first one may be the tail of a packet cut
/// by the previous block, and the last one may be cut in turn. Whatever does
/// not fit stays queued.
pub fn rlc_segment(queue: &mut RlcQueue, tbs_bits: u32) -> TransportBlock {
    let mut room = tbs_bits / 8;
    let mut segments = Vec::new();
    while room > 0 {
        let Some(head) = queue.sdus.front_mut() else {
            break;
        };
        let len = (head.packet.bytes - head.sent_bytes).min(room);
        segments.push(Segment {
            packet: head.packet,
            offset: head.sent_bytes,
            len,
        });
        head.sent_bytes += len;
        room -= len;
        if head.sent_bytes == head.packet.bytes {
            queue.sdus.pop_front();
        }
    }
    let payload_bits = segments.iter().map(|s| s.len * 8).sum();
    TransportBlock {
        segments,
        tbs_bits,
        payload_bits,
    }
}

/// Releases packets of one stream in sequence-number order. A gap is closed
/// either by the missing packet or by an explicit [`skip`](Self::skip).
#[derive(Clone, Debug, Default)]
pub struct ReorderBuffer {
    next: u64,
    pending: BTreeMap<u64, Option<PacketDescriptor>>,
}

impl ReorderBuffer {
    pub fn push(&mut self, packet: PacketDescriptor) -> Vec<PacketDescriptor> {
        if packet.seq_no >= self.next {
            self.pending.insert(packet.seq_no, Some(packet));
        }
        self.release()
    }

    pub fn skip(&mut self, seq_no: u64) -> Vec<PacketDescriptor> {
        if seq_no >= self.next {
            self.pending.entry(seq_no).or_insert(None);
        }
        self.release()
    }

    pub fn held(&self) -> impl Iterator<Item = &PacketDescriptor> {
        self.pending.values().flatten()
    }

    fn release(&mut self) -> Vec<PacketDescriptor> {
        let mut out = Vec::new();
        while let Some(slot) = self.pending.remove(&self.next) {
            out.extend(slot);
            self.next += 1;
        }
        out
    }
}

/// Receiving side of RLC on one node.
#[derive(Clone, Debug, Default)]
pub struct RlcReceiver {
    partial: HashMap<PacketKey, u32>,
    reorder: BTreeMap<(u32, Leg), ReorderBuffer>,
}

impl RlcReceiver {
    /// Adds a decoded segment; returns the packet once all its bytes arrived.
    pub fn receive(&mut self, segment: &Segment) -> Option<PacketDescriptor> {
        let key = segment.packet.key();
        let got = self.partial.entry(key).or_insert(0);
        *got += segment.len;
        if *got >= segment.packet.bytes {
            self.partial.remove(&key);
            Some(segment.packet)
        } else {
            None
        }
    }

    /// Drops any partial reassembly of `key`.
    pub fn discard(&mut self, key: &PacketKey) {
        self.partial.remove(key);
    }

    pub fn deliver_in_order(&mut self, packet: PacketDescriptor) -> Vec<PacketDescriptor> {
        self.reorder
            .entry((packet.flow_id, packet.leg))
            .or_default()
            .push(packet)
    }

    pub fn skip(&mut self, key: &PacketKey) -> Vec<PacketDescriptor> {
        self.reorder.entry((key.flow_id, key.leg)).or_default().skip(key.seq_no)
    }

    pub fn partial_keys(&self) -> impl Iterator<Item = &PacketKey> {
        self.partial.keys()
    }

    pub fn held(&self) -> impl Iterator<Item = &PacketDescriptor> {
        self.reorder.values().flat_map(ReorderBuffer::held)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Destination, FlowDirection, NodeId};
    use proptest::prelude::*;

    fn pkt(seq_no: u64, bytes: u32) -> PacketDescriptor {
        PacketDescriptor {
            flow_id: 0,
            leg: Leg::Forward,
            seq_no,
            bytes,
            src: NodeId(1),
            dst: Destination::Node(NodeId(2)),
            direction: FlowDirection::D2d,
            created_tti: 0,
            delivered_tti: None,
        }
    }

    #[test]
    fn whole_packet_with_padding() {
        let mut q = RlcQueue::default();
        q.push(pkt(0, 300));
        let tb = rlc_segment(&mut q, 4000);
        assert_eq!(tb.segments.len(), 1);
        assert!(tb.segments[0].is_whole());
        assert_eq!(tb.payload_bits, 2400);
        assert_eq!(tb.padding_bits(), 1600);
        assert!(q.is_empty());
    }

    #[test]
    fn empty_queue_gives_empty_block() {
        let mut q = RlcQueue::default();
        let tb = rlc_segment(&mut q, 4000);
        assert!(tb.is_empty());
        assert_eq!(tb.padding_bits(), 4000);
    }

    #[test]
    fn fragment_leaves_remainder_queued() {
        let mut q = RlcQueue::default();
        q.push(pkt(0, 300));
        let tb = rlc_segment(&mut q, 800);
        assert_eq!(tb.segments[0].len, 100);
        assert_eq!(q.backlog_bits(), 200 * 8);
        let tb = rlc_segment(&mut q, 8000);
        assert_eq!((tb.segments[0].offset, tb.segments[0].len), (100, 200));
        assert!(q.is_empty());
    }

    #[test]
    fn leading_and_trailing_fragments() {
        let mut q = RlcQueue::default();
        for i in 0..3 {
            q.push(pkt(i, 100));
        }
        rlc_segment(&mut q, 400); // 50 bytes of packet 0
        let tb = rlc_segment(&mut q, 1600); // 50 + 100 + 50
        let parts: Vec<_> = tb.segments.iter().map(|s| (s.packet.seq_no, s.offset, s.len)).collect();
        assert_eq!(parts, vec![(0, 50, 50), (1, 0, 100), (2, 0, 50)]);
    }

    #[test]
    fn reorder_waits_for_gap_or_skip() {
        let mut r = RlcReceiver::default();
        assert!(r.deliver_in_order(pkt(1, 10)).is_empty());
        assert!(r.deliver_in_order(pkt(2, 10)).is_empty());
        let out: Vec<_> = r.skip(&pkt(0, 10).key()).iter().map(|p| p.seq_no).collect();
        assert_eq!(out, vec![1, 2]);
        assert_eq!(r.deliver_in_order(pkt(3, 10)).len(), 1);
    }

    proptest! {
        #[test]
        fn segmentation_preserves_bytes(sizes in proptest::collection::vec(1u32..2000, 0..20), tbs in proptest::collection::vec(8u32..20000, 1..40)) {
            let mut q = RlcQueue::default();
            for (i, &s) in sizes.iter().enumerate() {
                q.push(pkt(i as u64, s));
            }
            let total: u64 = sizes.iter().map(|&s| u64::from(s) * 8).sum();
            let mut rx = RlcReceiver::default();
            let mut sent = 0u64;
            let mut completed = Vec::new();
            for &t in &tbs {
                let tb = rlc_segment(&mut q, t);
                prop_assert!(tb.payload_bits <= t);
                sent += u64::from(tb.payload_bits);
                for s in &tb.segments {
                    completed.extend(rx.receive(s).map(|p| p.seq_no));
                }
                prop_assert_eq!(sent + q.backlog_bits(), total);
            }
            // packets complete in order
            prop_assert!(completed.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
