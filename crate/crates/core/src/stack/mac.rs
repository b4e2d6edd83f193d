//! MAC: AMC transport block sizing and the eNB round-robin scheduler.

use super::StackError;
use crate::binder::{AllocationEntry, Binder, RbSet};
use crate::channel::{CqiTable, MAX_CQI};
use crate::types::{Destination, LinkDirection, NodeId};

/// Transport block size in bits for `num_rbs` resource blocks at `cqi`.
pub fn amc_tbs(cqi: u8, num_rbs: u32, rb_capacity_re: u32, table: &CqiTable) -> Result<u32, StackError> {
    if !(1..=MAX_CQI).contains(&cqi) {
        return Err(StackError::InvalidCqi(cqi));
    }
    if num_rbs == 0 {
        return Ok(0);
    }
    let eff = table.efficiency(cqi).map_err(|_| StackError::InvalidCqi(cqi))?;
    Ok((f64::from(num_rbs) * f64::from(rb_capacity_re) * eff).floor() as u32)
}

/// Buffer status of one transmitter for one direction, as seen by the eNB.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulingRequest {
    pub node: NodeId,
    pub direction: LinkDirection,
    /// Receiver of the grant: the UE for DL, the eNB for UL, the peer or
    /// group for SL.
    pub target: Destination,
    pub backlog_bits: u64,
    pub cqi: u8,
    pub tx_power_dbm: f64,
    /// A pending HARQ retransmission needs exactly this many RBs.
    pub retx_rbs: Option<u16>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleGrant {
    pub tti: u64,
    pub node: NodeId,
    pub direction: LinkDirection,
    pub target: Destination,
    pub rbs: RbSet,
    pub cqi: u8,
    pub tbs_bits: u32,
    pub tx_power_dbm: f64,
    pub retransmission: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SchedulerSettings<'a> {
    pub table: &'a CqiTable,
    pub rb_capacity_re: u32,
    /// Schedule SL grants over the whole UL band, on top of UL grants.
    pub sidelink_reuse: bool,
}

/// Allocates the resource blocks of `tti` and records every grant in the
/// binder.
///
/// Each spectrum pool is served separately: retransmissions first, with the
/// exact RB count they need, then new data by round-robin water-filling so
/// that no request gets more than it can use and the RBs left over by small
/// requests go to the others. Ties go to the lower node id. Grants are
/// contiguous blocks handed out in (node, direction, target) order.
pub fn mac_schedule(
    tti: u64,
    requests: &[SchedulingRequest],
    settings: &SchedulerSettings<'_>,
    binder: &mut Binder,
) -> Result<Vec<ScheduleGrant>, StackError> {
    for r in requests {
        if !(1..=MAX_CQI).contains(&r.cqi) {
            return Err(StackError::InvalidCqi(r.cqi));
        }
    }
    let num_rbs = binder.num_rbs();
    let in_pool = |pool: usize, r: &SchedulingRequest| match (pool, r.direction) {
        (0, LinkDirection::Dl) => true,
        (1, LinkDirection::Ul) => true,
        (1, LinkDirection::Sl) => !settings.sidelink_reuse,
        (2, LinkDirection::Sl) => settings.sidelink_reuse,
        _ => false,
    };

    let mut grants = Vec::new();
    for pool in 0..3 {
        let mut members: Vec<&SchedulingRequest> = requests.iter().filter(|r| in_pool(pool, r)).collect();
        members.sort_by_key(|r| (r.node, r.direction, r.target));
        // the reuse pool is laid out from the top of the band down
        let from_top = pool == 2;
        grants.extend(schedule_pool(tti, &members, num_rbs, from_top, settings)?);
    }

    for g in &grants {
        binder.record_allocation(
            tti,
            AllocationEntry::new(g.node, g.direction, g.rbs.clone(), g.tx_power_dbm),
        )?;
    }
    Ok(grants)
}

fn schedule_pool(
    tti: u64,
    members: &[&SchedulingRequest],
    num_rbs: u16,
    from_top: bool,
    settings: &SchedulerSettings<'_>,
) -> Result<Vec<ScheduleGrant>, StackError> {
    let mut free = num_rbs;
    let mut amounts: Vec<(&SchedulingRequest, u16, bool)> = Vec::new();

    for r in members.iter().filter(|r| r.retx_rbs.is_some()) {
        let need = r.retx_rbs.unwrap_or(0);
        if need > 0 && need <= free {
            free -= need;
            amounts.push((r, need, true));
        }
    }

    let fresh: Vec<&SchedulingRequest> = members
        .iter()
        .copied()
        .filter(|r| r.retx_rbs.is_none() && r.backlog_bits > 0)
        .collect();
    let mut demand = Vec::with_capacity(fresh.len());
    for r in &fresh {
        let per_rb = u64::from(amc_tbs(r.cqi, 1, settings.rb_capacity_re, settings.table)?.max(1));
        demand.push(r.backlog_bits.div_ceil(per_rb).min(u64::from(num_rbs)) as u16);
    }
    for (r, n) in fresh.iter().zip(water_fill(&demand, free)) {
        if n > 0 {
            amounts.push((r, n, false));
        }
    }

    let mut cursor = 0u16;
    let mut out = Vec::with_capacity(amounts.len());
    for (r, n, retx) in amounts {
        let (lo, hi) = if from_top {
            (num_rbs - cursor - n, num_rbs - cursor)
        } else {
            (cursor, cursor + n)
        };
        cursor += n;
        out.push(ScheduleGrant {
            tti,
            node: r.node,
            direction: r.direction,
            target: r.target,
            rbs: RbSet::range(lo, hi),
            cqi: r.cqi,
            tbs_bits: amc_tbs(r.cqi, u32::from(n), settings.rb_capacity_re, settings.table)?,
            tx_power_dbm: r.tx_power_dbm,
            retransmission: retx,
        });
    }
    Ok(out)
}

/// Round-robin water-filling of `available` units over `demand`, remainder to
/// the earliest entries.
pub(crate) fn water_fill(demand: &[u16], available: u16) -> Vec<u16> {
    let filled = |level: u16| -> u32 { demand.iter().map(|&d| u32::from(d.min(level))).sum() };
    let top = demand.iter().copied().max().unwrap_or(0);
    if filled(top) <= u32::from(available) {
        return demand.to_vec();
    }
    // highest water level that still fits
    let (mut lo, mut hi) = (0u16, top);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if filled(mid) <= u32::from(available) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let mut given: Vec<u16> = demand.iter().map(|&d| d.min(lo)).collect();
    let mut left = u32::from(available) - filled(lo);
    for (g, &d) in given.iter_mut().zip(demand) {
        if left == 0 {
            break;
        }
        if d > lo {
            *g += 1;
            left -= 1;
        }
    }
    given
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binder::NodeRecord;
    use crate::types::{Position, Role};
    use proptest::prelude::*;

    fn binder(ues: usize) -> Binder {
        let mut b = Binder::new(50);
        b.register_node(NodeRecord::new("eNodeB", Role::ENodeB, Position::default(), true))
            .unwrap();
        for i in 0..ues {
            b.register_node(NodeRecord::new(format!("ue[{i}]"), Role::Ue, Position::default(), true))
                .unwrap();
        }
        b
    }

    fn ul(node: u32, backlog_bits: u64) -> SchedulingRequest {
        SchedulingRequest {
            node: NodeId(node),
            direction: LinkDirection::Ul,
            target: Destination::Node(NodeId(0)),
            backlog_bits,
            cqi: 7,
            tx_power_dbm: 26.0,
            retx_rbs: None,
        }
    }

    fn settings(table: &CqiTable, reuse: bool) -> SchedulerSettings<'_> {
        SchedulerSettings {
            table,
            rb_capacity_re: 168,
            sidelink_reuse: reuse,
        }
    }

    #[test]
    fn tbs_zero_rbs_and_cqi7_row() {
        let t = CqiTable::default();
        assert_eq!(amc_tbs(7, 0, 168, &t).unwrap(), 0);
        let expected = (168.0 * t.efficiency(7).unwrap()).floor() as u32;
        assert_eq!(amc_tbs(7, 1, 168, &t).unwrap(), expected);
        assert_eq!(expected, 248);
        assert_eq!(amc_tbs(0, 1, 168, &t), Err(StackError::InvalidCqi(0)));
        assert_eq!(amc_tbs(16, 1, 168, &t), Err(StackError::InvalidCqi(16)));
    }

    #[test]
    fn tbs_monotone_in_cqi_for_every_row() {
        let t = CqiTable::default();
        for n in 0..=100 {
            for c in 1..15 {
                assert!(amc_tbs(c + 1, n, 168, &t).unwrap() >= amc_tbs(c, n, 168, &t).unwrap());
            }
        }
    }

    #[test]
    fn single_request_gets_what_it_needs() {
        let t = CqiTable::default();
        let mut b = binder(1);
        let grants = mac_schedule(0, &[ul(1, 10_000)], &settings(&t, false), &mut b).unwrap();
        let per_rb = u64::from(amc_tbs(7, 1, 168, &t).unwrap());
        let expected = 10_000u64.div_ceil(per_rb).min(50) as usize;
        assert_eq!(grants.len(), 1);
        assert_eq!(grants[0].rbs.len(), expected);
        assert_eq!(expected, 41);
        assert!(grants[0].tbs_bits >= 10_000);
        assert_eq!(b.entries(0).len(), 1);
    }

    #[test]
    fn large_request_capped_at_band() {
        let t = CqiTable::default();
        let mut b = binder(1);
        let grants = mac_schedule(0, &[ul(1, 1_000_000)], &settings(&t, false), &mut b).unwrap();
        assert_eq!(grants[0].rbs, RbSet::range(0, 50));
    }

    #[test]
    fn two_equal_requests_split_evenly() {
        let t = CqiTable::default();
        let mut b = binder(2);
        let grants = mac_schedule(0, &[ul(2, 1_000_000), ul(1, 1_000_000)], &settings(&t, false), &mut b).unwrap();
        assert_eq!(grants[0].node, NodeId(1));
        assert_eq!(grants[0].rbs.len(), 25);
        assert_eq!(grants[1].rbs.len(), 25);
        assert!(!grants[0].rbs.overlaps(&grants[1].rbs));
    }

    #[test]
    fn remainder_goes_to_lower_id() {
        assert_eq!(water_fill(&[50, 50, 50], 50), vec![17, 17, 16]);
        assert_eq!(water_fill(&[3, 50, 50], 50), vec![3, 24, 23]);
        assert_eq!(water_fill(&[], 50), Vec::<u16>::new());
    }

    #[test]
    fn no_requests_no_grants() {
        let t = CqiTable::default();
        let mut b = binder(1);
        assert!(mac_schedule(0, &[], &settings(&t, false), &mut b).unwrap().is_empty());
        assert!(b.entries(0).is_empty());
    }

    #[test]
    fn retransmission_first_and_exact() {
        let t = CqiTable::default();
        let mut b = binder(2);
        let mut retx = ul(2, 0);
        retx.retx_rbs = Some(4);
        let grants = mac_schedule(0, &[ul(1, 1_000_000), retx], &settings(&t, false), &mut b).unwrap();
        let r = grants.iter().find(|g| g.retransmission).unwrap();
        assert_eq!((r.node, r.rbs.clone()), (NodeId(2), RbSet::range(0, 4)));
        let n = grants.iter().find(|g| !g.retransmission).unwrap();
        assert_eq!(n.rbs, RbSet::range(4, 50));
    }

    #[test]
    fn sidelink_shares_ul_pool_or_reuses_it() {
        let t = CqiTable::default();
        let mut sl = ul(2, 1_000_000);
        sl.direction = LinkDirection::Sl;
        sl.target = Destination::Node(NodeId(1));
        let reqs = [ul(1, 1_000_000), sl];

        let mut b = binder(2);
        let g = mac_schedule(0, &reqs, &settings(&t, false), &mut b).unwrap();
        assert_eq!(g.iter().map(|g| g.rbs.len()).sum::<usize>(), 50);

        let mut b = binder(2);
        let g = mac_schedule(0, &reqs, &settings(&t, true), &mut b).unwrap();
        assert!(g.iter().all(|g| g.rbs.len() == 50));
        assert_eq!(
            b.get_interferers(0, &RbSet::range(0, 1), LinkDirection::Sl, NodeId(2))
                .len(),
            1
        );
    }

    proptest! {
        #[test]
        fn water_fill_is_bounded_and_fair(demand in proptest::collection::vec(0u16..60, 0..8), available in 0u16..60) {
            let given = water_fill(&demand, available);
            let total: u16 = given.iter().sum();
            prop_assert!(total <= available);
            prop_assert!(given.iter().zip(&demand).all(|(g, d)| g <= d));
            let unmet = given.iter().zip(&demand).any(|(g, d)| g < d);
            if unmet {
                prop_assert_eq!(total, available);
            }
            // any unsatisfied request gets at least as much as any other, minus the remainder unit
            for (i, (&gi, &di)) in given.iter().zip(&demand).enumerate() {
                if gi < di {
                    for &gj in &given {
                        prop_assert!(gi + 1 >= gj, "entry {} starved", i);
                    }
                }
            }
        }

        #[test]
        fn grants_never_double_book(backlogs in proptest::collection::vec((1u64..200_000, 1u8..=15), 1..6)) {
            let t = CqiTable::default();
            let mut b = binder(backlogs.len());
            let reqs: Vec<_> = backlogs.iter().enumerate().map(|(i, &(bits, cqi))| {
                SchedulingRequest { cqi, ..ul(i as u32 + 1, bits) }
            }).collect();
            let grants = mac_schedule(3, &reqs, &settings(&t, false), &mut b).unwrap();
            prop_assert!(grants.iter().map(|g| g.rbs.len()).sum::<usize>() <= 50);
            for g in &grants {
                prop_assert_eq!(g.tbs_bits, amc_tbs(g.cqi, g.rbs.len() as u32, 168, &t).unwrap());
            }
            prop_assert_eq!(b.conservation_violations(3), 0);
            prop_assert_eq!(b.entries(3).len(), grants.len());
        }
    }
}
