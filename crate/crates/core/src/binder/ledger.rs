use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use super::BinderError;
use crate::types::{LinkDirection, NodeId};

/// Number of TTIs the ledger keeps: the one being allocated and the one
/// whose transmissions are being received.
pub const LEDGER_WINDOW_TTIS: usize = 2;

/// A set of resource-block indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RbSet(BTreeSet<u16>);

impl RbSet {
    /// `start..end`
    pub fn range(start: u16, end: u16) -> Self {
        Self((start..end).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, rb: u16) -> bool {
        self.0.contains(&rb)
    }

    pub fn iter(&self) -> impl Iterator<Item = u16> + '_ {
        self.0.iter().copied()
    }

    pub fn overlaps(&self, other: &RbSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().any(|rb| large.contains(rb))
    }

    pub fn max(&self) -> Option<u16> {
        self.0.last().copied()
    }
}

impl FromIterator<u16> for RbSet {
    fn from_iter<I: IntoIterator<Item = u16>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// `0;1;2`
impl fmt::Display for RbSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for rb in &self.0 {
            if !first {
                f.write_str(";")?;
            }
            write!(f, "{rb}")?;
            first = false;
        }
        Ok(())
    }
}

/// Who transmits on which RBs, in which direction, at what power.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationEntry {
    pub node: NodeId,
    pub direction: LinkDirection,
    pub rbs: RbSet,
    pub tx_power_dbm: f64,
}

impl AllocationEntry {
    pub fn new(node: NodeId, direction: LinkDirection, rbs: RbSet, tx_power_dbm: f64) -> Self {
        Self {
            node,
            direction,
            rbs,
            tx_power_dbm,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub(super) struct Ledger {
    window: VecDeque<(u64, Vec<AllocationEntry>)>,
}

impl Ledger {
    fn slot(&self, tti: u64) -> Option<&Vec<AllocationEntry>> {
        self.window.iter().find(|(t, _)| *t == tti).map(|(_, e)| e)
    }

    pub(super) fn entries(&self, tti: u64) -> &[AllocationEntry] {
        self.slot(tti).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(super) fn record(&mut self, tti: u64, entry: AllocationEntry, num_rbs: u16) -> Result<(), BinderError> {
        if let Some(rb) = entry.rbs.iter().find(|&rb| rb >= num_rbs) {
            return Err(BinderError::OutOfRangeRb { rb, num_rbs });
        }
        let newest = self.window.back().map(|(t, _)| *t);
        match newest {
            Some(newest) if tti + 1 < newest => return Err(BinderError::StaleTti { tti }),
            Some(newest) if tti > newest => self.open(tti),
            None => self.open(tti),
            _ => {}
        }
        if self.slot(tti).is_none() {
            // tti == newest - 1 but that slot was never opened
            let pos = self.window.len() - 1;
            self.window.insert(pos, (tti, Vec::new()));
        }
        let slot = self
            .window
            .iter_mut()
            .find(|(t, _)| *t == tti)
            .map(|(_, e)| e)
            .expect("slot opened above");

        if entry.direction != LinkDirection::Sl {
            for existing in slot.iter().filter(|e| e.direction == entry.direction) {
                if let Some(rb) = entry.rbs.iter().find(|&rb| existing.rbs.contains(rb)) {
                    return Err(BinderError::RbConflict {
                        tti,
                        direction: entry.direction,
                        rb,
                        holder: existing.node,
                    });
                }
            }
        }
        slot.push(entry);
        Ok(())
    }

    fn open(&mut self, tti: u64) {
        self.window.push_back((tti, Vec::new()));
        while self.window.len() > LEDGER_WINDOW_TTIS {
            self.window.pop_front();
        }
        // drop slots that fell out of the window by TTI distance
        while let Some((t, _)) = self.window.front() {
            if *t + (LEDGER_WINDOW_TTIS as u64) <= tti {
                self.window.pop_front();
            } else {
                break;
            }
        }
    }

    pub(super) fn interferers(
        &self,
        tti: u64,
        rbs: &RbSet,
        direction: LinkDirection,
        exclude: NodeId,
    ) -> Vec<AllocationEntry> {
        if rbs.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<AllocationEntry> = self
            .entries(tti)
            .iter()
            .filter(|e| e.node != exclude && e.direction.same_partition(direction) && e.rbs.overlaps(rbs))
            .cloned()
            .collect();
        out.sort_by_key(|e| e.node);
        out
    }

    pub(super) fn infrastructure_usage(&self, tti: u64) -> [usize; 2] {
        let mut used = [0usize; 2];
        for e in self.entries(tti) {
            match e.direction {
                LinkDirection::Dl => used[0] += e.rbs.len(),
                LinkDirection::Ul => used[1] += e.rbs.len(),
                LinkDirection::Sl => {}
            }
        }
        used
    }
}
