use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::events::{EventKind, EventQueue};
use super::metrics::{
    DeliveryRecord, FlowMetrics, LedgerRecord, LossCause, MetricsReport, ModeSwitchRecord, RunSummary, TraceRecord,
};
use super::rng::{rng_stream, shadowing_key, RngPurpose};
use super::{EngineError, RunOptions};
use crate::binder::{Binder, NodeRecord};
use crate::channel::{ChannelModel, CqiProbe, CqiTable, ShadowingField};
use crate::config::{self, ScenarioConfig, Transport};
use crate::error::{Error, Result};
use crate::mode_selection::{
    apply_mode_switch, do_mode_selection, ModeSelectionPolicy, ModeSwitchCommand, PeeringTable, PolicyRegistry,
    SWITCH_DELAY_TTIS,
};
use crate::stack::{
    harq_on_feedback, mac_schedule, pdcp_classify, phy_receive, phy_send_broadcast, phy_send_unicast, rlc_segment,
    HarqAction, HarqEntity, HarqState, Leg, PacketDescriptor, PacketKey, Reception, RlcQueue, RlcReceiver, RxResult,
    ScheduleGrant, SchedulerSettings, SchedulingRequest, Segment, TransportBlock,
};
use crate::types::{Destination, FlowDirection, LinkDirection, Mode, NodeId, Role};

struct NodeState {
    name: String,
    role: Role,
    ue_tx_power_dbm: f64,
    d2d_tx_power_dbm: f64,
    enb_tx_power_dbm: f64,
    use_preconfigured: bool,
    d2d_cqi: Option<u8>,
    sl_reporting: bool,
    queues: BTreeMap<(LinkDirection, Destination), RlcQueue>,
    harq: BTreeMap<(LinkDirection, NodeId), HarqEntity>,
    receiver: RlcReceiver,
    last_sl_target: Option<Destination>,
}

struct FlowState {
    /// Position in the flow list; packets carry it as their `flow_id`.
    index: u32,
    src: NodeId,
    dst: Destination,
    bytes: u32,
    period: u64,
    start: u64,
    transport: Transport,
    next_seq: [u64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnitStatus {
    InFlight,
    /// Reassembled at its final receiver, waiting in the reorder buffer.
    Held,
    Delivered,
    Lost,
}

/// One packet as seen by one final receiver.
type UnitKey = (PacketKey, NodeId);

/// Reported CQI per (tx, rx, direction). A report becomes visible one TTI
/// after it was measured; until then the previous value is used.
#[derive(Default)]
struct CqiStore {
    entries: HashMap<(NodeId, NodeId, LinkDirection), VecDeque<(u64, u8)>>,
}

impl CqiStore {
    fn record(&mut self, key: (NodeId, NodeId, LinkDirection), cqi: u8, visible_from: u64) {
        let slot = self.entries.entry(key).or_default();
        while slot.len() >= 2 {
            slot.pop_front();
        }
        slot.push_back((visible_from, cqi));
    }

    fn get(&self, key: (NodeId, NodeId, LinkDirection), now: u64) -> u8 {
        self.entries
            .get(&key)
            .and_then(|slot| slot.iter().rev().find(|(from, _)| *from <= now))
            .map_or(0, |&(_, cqi)| cqi)
    }
}

/// A scenario being simulated. Build it with [`Simulation::new`] and consume
/// it with [`Simulation::run`].
pub struct Simulation {
    tti_count: u64,
    num_rbs: u16,
    rb_capacity_re: u32,
    max_harq_retx: u32,
    sidelink_reuse: bool,
    cqi_report_period: u64,
    selection_period: u64,
    binder: Binder,
    channel: ChannelModel,
    table: CqiTable,
    shadowing: ShadowingField,
    peering: PeeringTable,
    policy: Option<Box<dyn ModeSelectionPolicy>>,
    enb: NodeId,
    nodes: Vec<NodeState>,
    flows: Vec<FlowState>,
    queue: EventQueue,
    cqi: CqiStore,
    units: HashMap<UnitKey, UnitStatus>,
    flow_metrics: Vec<FlowMetrics>,
    summary: RunSummary,
    mode_switches: Vec<ModeSwitchRecord>,
    cqi_reports: [[u64; 16]; 3],
    grant_cqi: [[u64; 16]; 3],
    deliveries: Vec<DeliveryRecord>,
    trace: Option<Vec<TraceRecord>>,
    ledger: Option<Vec<LedgerRecord>>,
}

impl Simulation {
    /// Checks the scenario and sets up every node, flow and initial event.
    pub fn new(config: &ScenarioConfig, options: RunOptions) -> Result<Self> {
        config::check(config)?;
        let table = match &config.cqi_table_file {
            Some(path) => CqiTable::load(Path::new(path))?,
            None => CqiTable::default(),
        };

        let mut binder = Binder::new(config.sim.num_rbs);
        let mut nodes = Vec::with_capacity(config.nodes.len());
        for n in &config.nodes {
            binder.register_node(NodeRecord::new(n.name.clone(), n.role, n.position, n.d2d_capable))?;
            nodes.push(NodeState {
                name: n.name.clone(),
                role: n.role,
                ue_tx_power_dbm: n.ue_tx_power_dbm,
                d2d_tx_power_dbm: n.d2d_tx_power_dbm,
                enb_tx_power_dbm: n.enb_tx_power_dbm,
                use_preconfigured: n.use_preconfigured_tx_params,
                d2d_cqi: n.d2d_cqi,
                sl_reporting: config.sl_reporting_enabled(n),
                queues: BTreeMap::new(),
                harq: BTreeMap::new(),
                receiver: RlcReceiver::default(),
                last_sl_target: None,
            });
        }
        let enb = binder
            .enb()
            .ok_or_else(|| EngineError::UnknownNode("eNodeB".to_string()))?;
        for group in &config.multicast_groups {
            let Some(ip) = group.ip() else { continue };
            let members = config
                .group_members(group)
                .into_iter()
                .map(|name| binder.lookup(name))
                .collect::<Result<Vec<_>, _>>()?;
            binder.register_group(ip, members)?;
        }
        binder.freeze_membership();

        let mut peering = PeeringTable::from_config(config, &binder)?;
        let selection = &config.mode_selection;
        let policy = match options.forced_mode {
            Some(mode) => {
                peering.set_all(mode);
                None
            }
            None if selection.enabled => Some(PolicyRegistry::default().create(&selection.policy_name)?),
            None => None,
        };

        let mut jitter: BTreeMap<NodeId, ChaCha8Rng> = BTreeMap::new();
        let mut flows = Vec::with_capacity(config.flows.len());
        let mut flow_metrics = Vec::with_capacity(config.flows.len() * 2);
        for (index, f) in config.flows.iter().enumerate() {
            let src = binder.lookup(&f.source_node)?;
            let dst = match f.multicast_address() {
                Some(ip) => Destination::Group(ip),
                None => Destination::Node(binder.lookup(&f.dest_address)?),
            };
            let offset = match config.sim.traffic_jitter_ttis {
                0 => 0,
                max => jitter
                    .entry(src)
                    .or_insert_with(|| rng_stream(config.sim.seed, RngPurpose::TrafficJitter, src))
                    .random_range(0..=max),
            };
            flows.push(FlowState {
                index: index as u32,
                src,
                dst,
                bytes: f.packet_bytes,
                period: f.period_ttis,
                start: f.start_tti + offset,
                transport: f.transport,
                next_seq: [0; 2],
            });
            let dst_id = dst_node(dst);
            for (leg, a, b) in [(Leg::Forward, Some(src), dst_id), (Leg::Reverse, dst_id, Some(src))] {
                let name = |id: Option<NodeId>| match id {
                    Some(id) => nodes[id.index()].name.clone(),
                    None => f.dest_address.clone(),
                };
                flow_metrics.push(FlowMetrics {
                    flow_id: f.flow_id,
                    leg,
                    src: name(a),
                    dst: name(b),
                    ..Default::default()
                });
            }
        }

        let mut sim = Self {
            tti_count: config.sim.tti_count,
            num_rbs: config.sim.num_rbs,
            rb_capacity_re: config.sim.rb_capacity_re,
            max_harq_retx: config.sim.max_harq_retx,
            sidelink_reuse: config.sim.sidelink_reuse,
            cqi_report_period: config.sim.cqi_report_period,
            selection_period: selection.period_ttis,
            channel: ChannelModel::new(config.channel.clone(), table.clone()),
            table,
            shadowing: ShadowingField::new(shadowing_key(config.sim.seed), config.channel.shadowing_std_dev_db),
            binder,
            peering,
            policy,
            enb,
            nodes,
            flows,
            queue: EventQueue::new(),
            cqi: CqiStore::default(),
            units: HashMap::new(),
            flow_metrics,
            summary: RunSummary {
                tti_count: config.sim.tti_count,
                seed: config.sim.seed,
                ..Default::default()
            },
            mode_switches: Vec::new(),
            cqi_reports: [[0; 16]; 3],
            grant_cqi: [[0; 16]; 3],
            deliveries: Vec::new(),
            trace: options.trace.then(Vec::new),
            ledger: options.ledger_dump.then(Vec::new),
        };

        for (i, f) in sim.flows.iter().enumerate() {
            if f.start < sim.tti_count {
                sim.queue.schedule(f.start, EventKind::PacketArrival { flow: i })?;
            }
        }
        sim.schedule_if_running(0, EventKind::CqiReport)?;
        if sim.policy.is_some() {
            sim.schedule_if_running(0, EventKind::ModeSelection { forced: None })?;
        }
        if let (None, Some(s)) = (options.forced_mode, selection.scripted_switch) {
            sim.schedule_if_running(s.at_tti, EventKind::ModeSelection { forced: Some(s.to) })?;
        }
        sim.schedule_if_running(0, EventKind::Schedule)?;
        Ok(sim)
    }

    /// Runs every TTI and returns the collected metrics.
    ///
    /// Fails if packet accounting does not balance at the end of the run.
    pub fn run(mut self) -> Result<MetricsReport> {
        for tti in 0..self.tti_count {
            while let Some(event) = self.queue.pop_due(tti) {
                self.dispatch(tti, event.kind).map_err(|e| Error::AtTti {
                    tti,
                    source: Box::new(e),
                })?;
            }
            self.end_of_tti(tti);
        }
        self.finish()
    }

    fn schedule_if_running(&mut self, tti: u64, kind: EventKind) -> Result<()> {
        if tti < self.tti_count {
            self.queue.schedule(tti, kind)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, tti: u64, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::PacketArrival { flow } => self.on_packet_arrival(tti, flow),
            EventKind::CqiReport => self.on_cqi_report(tti),
            EventKind::ModeSelection { forced } => self.on_mode_selection(tti, forced),
            EventKind::ModeSwitchApply(cmd) => self.on_mode_switch_apply(tti, &cmd),
            EventKind::Schedule => self.on_schedule(tti),
            EventKind::Transmit(grant) => self.on_transmit(tti, &grant),
            EventKind::Receive(reception) => self.on_receive(tti, &reception),
            EventKind::HarqFeedback {
                tx,
                rx,
                direction,
                process,
                generation,
                ack,
            } => self.on_harq_feedback(tti, tx, rx, direction, process, generation, ack),
        }
    }

    fn name(&self, id: NodeId) -> String {
        self.nodes[id.index()].name.clone()
    }

    fn dest_name(&self, dst: Destination) -> String {
        match dst {
            Destination::Node(id) => self.name(id),
            Destination::Group(ip) => ip.to_string(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn trace(
        &mut self,
        tti: u64,
        event: &'static str,
        src: String,
        dst: String,
        direction: &str,
        rbs: String,
        sinr_db: Option<f64>,
        decoded: Option<bool>,
    ) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                tti,
                event,
                src,
                dst,
                direction: direction.to_string(),
                rbs,
                sinr_db,
                decoded,
            });
        }
    }

    fn metrics_mut(&mut self, key: &PacketKey) -> &mut FlowMetrics {
        let leg = match key.leg {
            Leg::Forward => 0,
            Leg::Reverse => 1,
        };
        &mut self.flow_metrics[key.flow_id as usize * 2 + leg]
    }

    // ---- traffic -------------------------------------------------------

    fn on_packet_arrival(&mut self, tti: u64, flow: usize) -> Result<()> {
        let (src, dst, period) = {
            let f = &self.flows[flow];
            (f.src, f.dst, f.period)
        };
        self.new_packet(tti, flow, Leg::Forward, src, dst)?;
        self.schedule_if_running(tti + period, EventKind::PacketArrival { flow })
    }

    fn new_packet(&mut self, tti: u64, flow: usize, leg: Leg, src: NodeId, dst: Destination) -> Result<()> {
        let direction = pdcp_classify(src, &dst, &self.binder, &self.peering)?;
        let f = &mut self.flows[flow];
        let slot = &mut f.next_seq[leg as usize];
        let packet = PacketDescriptor {
            flow_id: f.index,
            leg,
            seq_no: *slot,
            bytes: f.bytes,
            src,
            dst,
            direction,
            created_tti: tti,
            delivered_tti: None,
        };
        *slot += 1;

        let receivers: Vec<NodeId> = match dst {
            Destination::Node(n) => vec![n],
            Destination::Group(_) => self.binder.ues().map(|u| u.id).filter(|&u| u != src).collect(),
        };
        let key = packet.key();
        for &r in &receivers {
            self.units.insert((key, r), UnitStatus::InFlight);
        }
        let m = self.metrics_mut(&key);
        if m.direction.is_empty() {
            m.direction = direction.as_str().to_string();
        }
        m.offered_packets += receivers.len() as u64;
        m.offered_bits += packet.bits() * receivers.len() as u64;

        let queue_key = match direction {
            FlowDirection::D2d | FlowDirection::D2dMulti => (LinkDirection::Sl, dst),
            FlowDirection::Ul => (LinkDirection::Ul, Destination::Node(self.enb)),
            FlowDirection::Dl => (LinkDirection::Dl, dst),
        };
        self.nodes[src.index()]
            .queues
            .entry(queue_key)
            .or_default()
            .push(packet);
        let (s, d) = (self.name(src), self.dest_name(dst));
        self.trace(tti, "pdcp", s, d, direction.as_str(), String::new(), None, None);
        Ok(())
    }

    // ---- CQI -----------------------------------------------------------

    fn on_cqi_report(&mut self, tti: u64) -> Result<()> {
        let enb = self.enb;
        let ues: Vec<NodeId> = self.binder.ues().map(|u| u.id).collect();
        for ue in ues {
            let (ue_power, d2d_power, preconfigured, sl_reporting) = {
                let n = &self.nodes[ue.index()];
                (
                    n.ue_tx_power_dbm,
                    n.d2d_tx_power_dbm,
                    n.use_preconfigured,
                    n.sl_reporting,
                )
            };
            let enb_power = self.nodes[enb.index()].enb_tx_power_dbm;
            self.report(tti, ue, enb, LinkDirection::Ul, ue_power, true)?;
            self.report(tti, enb, ue, LinkDirection::Dl, enb_power, true)?;
            if preconfigured || !sl_reporting {
                continue;
            }
            let peers: Vec<NodeId> = self.peering.peers(ue).iter().map(|&(p, _)| p).collect();
            for peer in peers {
                self.report(tti, ue, peer, LinkDirection::Sl, d2d_power, sl_reporting)?;
                self.summary.sl_cqi_reports += 1;
            }
        }
        self.schedule_if_running(tti + self.cqi_report_period, EventKind::CqiReport)
    }

    fn report(
        &mut self,
        tti: u64,
        tx: NodeId,
        rx: NodeId,
        direction: LinkDirection,
        power: f64,
        sl_reporting_enabled: bool,
    ) -> Result<()> {
        let probe = CqiProbe {
            tx,
            rx,
            direction,
            tx_power_dbm: power,
            sl_reporting_enabled,
        };
        let cqi = self.channel.report_cqi(&self.binder, &self.shadowing, &probe, tti)?;
        self.cqi.record((tx, rx, direction), cqi, tti + 1);
        self.cqi_reports[direction.index()][usize::from(cqi)] += 1;
        let (s, d) = (self.name(tx), self.name(rx));
        self.trace(tti, "cqiReport", s, d, direction.as_str(), cqi.to_string(), None, None);
        Ok(())
    }

    /// CQI the scheduler uses for `sender` on the sidelink towards `target`.
    fn sl_cqi(&self, sender: NodeId, target: Destination, tti: u64) -> u8 {
        let node = &self.nodes[sender.index()];
        if node.use_preconfigured {
            return node.d2d_cqi.unwrap_or(0);
        }
        match target {
            Destination::Node(peer) => self.cqi.get((sender, peer, LinkDirection::Sl), tti),
            Destination::Group(_) => 0,
        }
    }

    // ---- mode selection -------------------------------------------------

    fn on_mode_selection(&mut self, tti: u64, forced: Option<Mode>) -> Result<()> {
        let commands = match forced {
            Some(mode) => self
                .peering
                .pairs()
                .filter(|&(_, _, m)| m != mode)
                .map(|(sender, receiver, _)| ModeSwitchCommand {
                    sender,
                    receiver,
                    new_mode: mode,
                    issued_tti: tti,
                })
                .collect(),
            None => {
                let Some(mut policy) = self.policy.take() else {
                    return Ok(());
                };
                let enb = self.enb;
                let commands = do_mode_selection(
                    tti,
                    &self.peering,
                    |s, r| {
                        (
                            self.cqi.get((s, enb, LinkDirection::Ul), tti),
                            self.sl_cqi(s, Destination::Node(r), tti),
                        )
                    },
                    policy.as_mut(),
                );
                self.policy = Some(policy);
                self.schedule_if_running(tti + self.selection_period, EventKind::ModeSelection { forced: None })?;
                commands
            }
        };
        for cmd in commands {
            let (s, r) = (self.name(cmd.sender), self.name(cmd.receiver));
            self.trace(
                tti,
                "modeSwitchIssued",
                s,
                r,
                cmd.new_mode.as_str(),
                String::new(),
                None,
                None,
            );
            self.schedule_if_running(tti + SWITCH_DELAY_TTIS, EventKind::ModeSwitchApply(cmd))?;
        }
        Ok(())
    }

    fn on_mode_switch_apply(&mut self, tti: u64, cmd: &ModeSwitchCommand) -> Result<()> {
        let Some(old) = apply_mode_switch(cmd, &mut self.peering) else {
            return Ok(());
        };
        let flushed = self.flush_old_path(tti, cmd.sender, cmd.receiver, old);
        self.summary.mode_switches += 1;
        self.summary.mode_switch_losses += flushed;
        self.mode_switches.push(ModeSwitchRecord {
            tti,
            sender: self.name(cmd.sender),
            receiver: self.name(cmd.receiver),
            old_mode: old.as_str().to_string(),
            new_mode: cmd.new_mode.as_str().to_string(),
            flushed_packets: flushed,
        });
        let (s, r) = (self.name(cmd.sender), self.name(cmd.receiver));
        self.trace(
            tti,
            "modeSwitch",
            s,
            r,
            cmd.new_mode.as_str(),
            String::new(),
            None,
            None,
        );
        Ok(())
    }

    /// Drops the sender's buffered data for `receiver` on the path it is
    /// leaving. Returns the number of packets lost.
    fn flush_old_path(&mut self, tti: u64, sender: NodeId, receiver: NodeId, old: Mode) -> u64 {
        let enb = self.enb;
        let peer = Destination::Node(receiver);
        let node = &mut self.nodes[sender.index()];
        let mut dropped: Vec<PacketKey> = Vec::new();
        match old {
            Mode::Dm => {
                if let Some(q) = node.queues.get_mut(&(LinkDirection::Sl, peer)) {
                    dropped.extend(q.remove_where(|_| true).iter().map(PacketDescriptor::key));
                }
                if let Some(entity) = node.harq.get_mut(&(LinkDirection::Sl, receiver)) {
                    for p in entity.processes_mut() {
                        if let Some(block) = p.flush() {
                            dropped.extend(block.packet_keys());
                        }
                    }
                }
            }
            Mode::Im => {
                if let Some(q) = node.queues.get_mut(&(LinkDirection::Ul, Destination::Node(enb))) {
                    dropped.extend(q.remove_where(|p| p.dst == peer).iter().map(PacketDescriptor::key));
                }
                if let Some(entity) = node.harq.get_mut(&(LinkDirection::Ul, enb)) {
                    for p in entity.processes_mut() {
                        let Some(block) = &p.pdu else { continue };
                        let for_peer: Vec<PacketKey> = block
                            .segments
                            .iter()
                            .filter(|s| s.packet.dst == peer)
                            .map(|s| s.packet.key())
                            .collect();
                        if for_peer.len() == block.segments.len() {
                            p.flush();
                        }
                        dropped.extend(for_peer);
                    }
                }
            }
        }
        dropped.sort();
        dropped.dedup();
        let mut lost = 0;
        for key in dropped {
            if self.declare_lost(tti, (key, receiver), LossCause::ModeSwitch) {
                lost += 1;
            }
        }
        lost
    }

    // ---- scheduling -----------------------------------------------------

    fn on_schedule(&mut self, tti: u64) -> Result<()> {
        let mut requests = Vec::new();
        let enb = self.enb;
        let max_retx = self.max_harq_retx;
        for idx in 0..self.nodes.len() {
            let id = NodeId(idx as u32);
            match self.nodes[idx].role {
                Role::Ue => {
                    let ul_cqi = self.cqi.get((id, enb, LinkDirection::Ul), tti);
                    let power = self.nodes[idx].ue_tx_power_dbm;
                    let backlog = self.backlog(id, LinkDirection::Ul, Destination::Node(enb));
                    if let Some(r) = self.unicast_request(id, LinkDirection::Ul, enb, backlog, ul_cqi, power, max_retx)
                    {
                        requests.push(r);
                    }
                    if let Some(r) = self.sidelink_request(tti, id, max_retx) {
                        requests.push(r);
                    }
                }
                Role::ENodeB => {
                    let power = self.nodes[idx].enb_tx_power_dbm;
                    let mut targets: Vec<NodeId> = self.nodes[idx]
                        .queues
                        .iter()
                        .filter(|((d, _), q)| *d == LinkDirection::Dl && !q.is_empty())
                        .filter_map(|((_, t), _)| match t {
                            Destination::Node(n) => Some(*n),
                            Destination::Group(_) => None,
                        })
                        .chain(
                            self.nodes[idx]
                                .harq
                                .iter()
                                .filter(|((d, _), e)| *d == LinkDirection::Dl && e.pending_retx().is_some())
                                .map(|((_, n), _)| *n),
                        )
                        .collect();
                    targets.sort();
                    targets.dedup();
                    for ue in targets {
                        let cqi = self.cqi.get((id, ue, LinkDirection::Dl), tti);
                        let backlog = self.backlog(id, LinkDirection::Dl, Destination::Node(ue));
                        if let Some(r) = self.unicast_request(id, LinkDirection::Dl, ue, backlog, cqi, power, max_retx)
                        {
                            requests.push(r);
                        }
                    }
                }
            }
        }

        let settings = SchedulerSettings {
            table: &self.table,
            rb_capacity_re: self.rb_capacity_re,
            sidelink_reuse: self.sidelink_reuse,
        };
        let grants = mac_schedule(tti, &requests, &settings, &mut self.binder)?;
        for g in grants {
            let d = g.direction.index();
            self.summary.rbs_used[d] += g.rbs.len() as u64;
            self.summary.grants[d] += 1;
            self.grant_cqi[d][usize::from(g.cqi)] += 1;
            let (s, t) = (self.name(g.node), self.dest_name(g.target));
            self.trace(tti, "grant", s, t, g.direction.as_str(), g.rbs.to_string(), None, None);
            self.queue.schedule(tti, EventKind::Transmit(g))?;
        }
        self.schedule_if_running(tti + 1, EventKind::Schedule)
    }

    fn backlog(&self, node: NodeId, direction: LinkDirection, target: Destination) -> u64 {
        self.nodes[node.index()]
            .queues
            .get(&(direction, target))
            .map_or(0, RlcQueue::backlog_bits)
    }

    /// A retransmission if one is pending, otherwise new data if there is a
    /// free HARQ process and a usable CQI.
    #[allow(clippy::too_many_arguments)]
    fn unicast_request(
        &mut self,
        node: NodeId,
        direction: LinkDirection,
        target: NodeId,
        backlog_bits: u64,
        cqi: u8,
        tx_power_dbm: f64,
        max_retx: u32,
    ) -> Option<SchedulingRequest> {
        let entity = self.nodes[node.index()]
            .harq
            .entry((direction, target))
            .or_insert_with(|| HarqEntity::new(direction, max_retx));
        let base = SchedulingRequest {
            node,
            direction,
            target: Destination::Node(target),
            backlog_bits,
            cqi,
            tx_power_dbm,
            retx_rbs: None,
        };
        if let Some(pid) = entity.pending_retx() {
            let p = entity.process(pid);
            return Some(SchedulingRequest {
                cqi: p.cqi,
                retx_rbs: Some(p.rbs),
                ..base
            });
        }
        (backlog_bits > 0 && cqi >= 1 && entity.idle_process().is_some()).then_some(base)
    }

    /// One SL request per UE and TTI; targets take turns in round-robin
    /// order, with pending retransmissions served before new data.
    fn sidelink_request(&mut self, tti: u64, node: NodeId, max_retx: u32) -> Option<SchedulingRequest> {
        let state = &self.nodes[node.index()];
        let power = state.d2d_tx_power_dbm;
        let mut targets: Vec<Destination> = state
            .queues
            .iter()
            .filter(|((d, _), q)| *d == LinkDirection::Sl && !q.is_empty())
            .map(|((_, t), _)| *t)
            .chain(
                state
                    .harq
                    .iter()
                    .filter(|((d, _), e)| *d == LinkDirection::Sl && e.pending_retx().is_some())
                    .map(|((_, n), _)| Destination::Node(*n)),
            )
            .collect();
        targets.sort();
        targets.dedup();

        let mut retx = Vec::new();
        let mut fresh = Vec::new();
        for target in targets {
            let backlog = self.backlog(node, LinkDirection::Sl, target);
            let cqi = self.sl_cqi(node, target, tti);
            match target {
                Destination::Group(_) => {
                    if backlog > 0 && cqi >= 1 {
                        fresh.push(SchedulingRequest {
                            node,
                            direction: LinkDirection::Sl,
                            target,
                            backlog_bits: backlog,
                            cqi,
                            tx_power_dbm: power,
                            retx_rbs: None,
                        });
                    }
                }
                Destination::Node(peer) => {
                    if let Some(r) = self.unicast_request(node, LinkDirection::Sl, peer, backlog, cqi, power, max_retx)
                    {
                        if r.retx_rbs.is_some() {
                            retx.push(r);
                        } else {
                            fresh.push(r);
                        }
                    }
                }
            }
        }
        let candidates = if retx.is_empty() { fresh } else { retx };
        let last = self.nodes[node.index()].last_sl_target;
        let chosen = candidates
            .iter()
            .position(|r| last.is_none_or(|l| r.target > l))
            .unwrap_or(0);
        let request = candidates.into_iter().nth(chosen)?;
        self.nodes[node.index()].last_sl_target = Some(request.target);
        Some(request)
    }

    // ---- transmission ---------------------------------------------------

    fn on_transmit(&mut self, tti: u64, grant: &ScheduleGrant) -> Result<()> {
        let node = grant.node;
        let mut receptions: Vec<Reception> = Vec::new();
        match grant.target {
            Destination::Group(group) => {
                let block = match self.nodes[node.index()]
                    .queues
                    .get_mut(&(grant.direction, grant.target))
                {
                    Some(q) => rlc_segment(q, grant.tbs_bits),
                    None => return Ok(()),
                };
                if block.is_empty() {
                    return Ok(());
                }
                receptions.extend(phy_send_broadcast(&block, node, group, grant, &self.binder));
            }
            Destination::Node(rx) => {
                let state = &mut self.nodes[node.index()];
                let Some(entity) = state.harq.get_mut(&(grant.direction, rx)) else {
                    return Ok(());
                };
                let (pid, block) = if grant.retransmission {
                    let Some(pid) = entity.pending_retx() else {
                        return Ok(());
                    };
                    let p = entity.process_mut(pid);
                    p.retransmitted()?;
                    (pid, p.pdu.clone().unwrap_or_default())
                } else {
                    let Some(pid) = entity.idle_process() else {
                        return Ok(());
                    };
                    let block = match state.queues.get_mut(&(grant.direction, grant.target)) {
                        Some(q) => rlc_segment(q, grant.tbs_bits),
                        None => TransportBlock::default(),
                    };
                    if block.is_empty() {
                        return Ok(());
                    }
                    let entity = state.harq.get_mut(&(grant.direction, rx)).expect("entity exists");
                    entity
                        .process_mut(pid)
                        .start(block.clone(), grant.rbs.len() as u16, grant.cqi)?;
                    (pid, block)
                };
                let entity = &state.harq[&(grant.direction, rx)];
                let generation = entity.process(pid).generation;
                let mut r = phy_send_unicast(block, node, rx, grant, Some(pid));
                r.harq_generation = generation;
                receptions.push(r);
                self.audit_harq(node);
            }
        }
        for r in receptions {
            let (s, d) = (self.name(r.tx), self.name(r.rx));
            let event = if grant.retransmission { "retx" } else { "tx" };
            self.trace(
                tti,
                event,
                s,
                d,
                grant.direction.as_str(),
                grant.rbs.to_string(),
                None,
                None,
            );
            self.queue.schedule(r.fire_tti, EventKind::Receive(Box::new(r)))?;
        }
        Ok(())
    }

    fn audit_harq(&mut self, node: NodeId) {
        let held: usize = self.nodes[node.index()]
            .harq
            .values()
            .map(HarqEntity::multicast_blocks_held)
            .sum();
        self.summary.harq_multicast_violations += held as u64;
    }

    // ---- reception ------------------------------------------------------

    fn on_receive(&mut self, tti: u64, r: &Reception) -> Result<()> {
        let result = phy_receive(r, &self.binder, &self.channel, &self.shadowing)?;
        let (sinr, decoded) = match &result {
            RxResult::Filtered => (None, None),
            RxResult::Decoded(rep) => (Some(rep.mean_sinr_db), Some(true)),
            RxResult::Failed(rep) => (Some(rep.mean_sinr_db), Some(false)),
        };
        let (s, d) = (self.name(r.tx), self.name(r.rx));
        self.trace(tti, "rx", s, d, r.direction.as_str(), r.rbs.to_string(), sinr, decoded);

        match result {
            RxResult::Filtered => {
                for key in r.block.packet_keys().collect::<Vec<_>>() {
                    self.declare_lost(tti, (key, r.rx), LossCause::Filtered);
                }
            }
            RxResult::Decoded(_) => {
                for seg in &r.block.segments {
                    self.accept_segment(tti, r.rx, seg)?;
                }
            }
            RxResult::Failed(_) => {
                if r.group.is_some() {
                    for key in r.block.packet_keys().collect::<Vec<_>>() {
                        self.declare_lost(tti, (key, r.rx), LossCause::DecodeFailed);
                    }
                }
            }
        }
        if let Some(process) = r.harq_process {
            self.schedule_if_running(
                tti + 1,
                EventKind::HarqFeedback {
                    tx: r.tx,
                    rx: r.rx,
                    direction: r.direction,
                    process,
                    generation: r.harq_generation,
                    ack: decoded == Some(true),
                },
            )?;
        }
        Ok(())
    }

    fn accept_segment(&mut self, tti: u64, rx: NodeId, seg: &Segment) -> Result<()> {
        let packet = seg.packet;
        let key = packet.key();
        let final_rx = match packet.dst {
            Destination::Node(d) => d,
            Destination::Group(_) => rx,
        };
        if self.units.get(&(key, final_rx)) != Some(&UnitStatus::InFlight) {
            self.nodes[rx.index()].receiver.discard(&key);
            return Ok(());
        }
        let Some(complete) = self.nodes[rx.index()].receiver.receive(seg) else {
            return Ok(());
        };
        if final_rx == rx {
            self.units.insert((key, rx), UnitStatus::Held);
            let released = self.nodes[rx.index()].receiver.deliver_in_order(complete);
            for p in released {
                self.deliver(tti, rx, p)?;
            }
        } else {
            self.nodes[rx.index()]
                .queues
                .entry((LinkDirection::Dl, packet.dst))
                .or_default()
                .push(complete);
            let (s, d) = (self.name(rx), self.dest_name(packet.dst));
            self.trace(
                tti,
                "relay",
                s,
                d,
                LinkDirection::Dl.as_str(),
                String::new(),
                None,
                None,
            );
        }
        Ok(())
    }

    fn deliver(&mut self, tti: u64, rx: NodeId, mut packet: PacketDescriptor) -> Result<()> {
        let key = packet.key();
        if self.units.get(&(key, rx)) != Some(&UnitStatus::Held) {
            return Ok(());
        }
        self.units.insert((key, rx), UnitStatus::Delivered);
        packet.delivered_tti = Some(tti);
        let latency = tti - packet.created_tti;
        let m = self.metrics_mut(&key);
        m.delivered_packets += 1;
        m.delivered_bits += packet.bits();
        m.latency_sum_ttis += latency;
        m.max_latency_ttis = m.max_latency_ttis.max(latency);
        let flow_id = self.metrics_mut(&key).flow_id;
        self.deliveries.push(DeliveryRecord {
            flow_id,
            leg: key.leg,
            seq_no: key.seq_no,
            receiver: rx.0,
            created_tti: packet.created_tti,
            delivered_tti: tti,
        });
        let (s, d) = (self.name(packet.src), self.name(rx));
        self.trace(
            tti,
            "deliver",
            s,
            d,
            packet.direction.as_str(),
            String::new(),
            None,
            None,
        );

        let flow = key.flow_id as usize;
        if key.leg == Leg::Forward && self.flows[flow].transport == Transport::RequestResponse {
            self.new_packet(tti, flow, Leg::Reverse, rx, Destination::Node(packet.src))?;
        }
        Ok(())
    }

    /// Marks an in-flight packet as lost for `unit.1`, drops its partial
    /// reassembly and lets the receiver's reorder buffer move past it.
    /// Returns false if the packet was no longer in flight.
    fn declare_lost(&mut self, tti: u64, unit: UnitKey, cause: LossCause) -> bool {
        if self.units.get(&unit) != Some(&UnitStatus::InFlight) {
            return false;
        }
        let (key, rx) = unit;
        self.units.insert(unit, UnitStatus::Lost);
        self.metrics_mut(&key).lost[cause.index()] += 1;
        let enb = self.enb;
        self.nodes[enb.index()].receiver.discard(&key);
        self.nodes[rx.index()].receiver.discard(&key);
        let released = self.nodes[rx.index()].receiver.skip(&key);
        let src = self.flows[key.flow_id as usize].src;
        let (s, d) = (self.name(src), self.name(rx));
        self.trace(tti, "lost", s, d, cause.as_str(), String::new(), None, None);
        for p in released {
            // reply generation cannot fail for a packet that was already classified
            let _ = self.deliver(tti, rx, p);
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn on_harq_feedback(
        &mut self,
        tti: u64,
        tx: NodeId,
        rx: NodeId,
        direction: LinkDirection,
        process: u8,
        generation: u64,
        ack: bool,
    ) -> Result<()> {
        let Some(entity) = self.nodes[tx.index()].harq.get_mut(&(direction, rx)) else {
            return Ok(());
        };
        let p = entity.process_mut(process);
        if p.generation != generation || p.state != HarqState::WaitingFeedback {
            return Ok(());
        }
        let action = harq_on_feedback(p, ack)?;
        let event = match &action {
            HarqAction::Release => "harqAck",
            HarqAction::Retransmit => "harqNack",
            HarqAction::DropAndRelease { .. } => "harqDrop",
        };
        let (s, d) = (self.name(tx), self.name(rx));
        self.trace(tti, event, s, d, direction.as_str(), String::new(), None, None);
        if let HarqAction::DropAndRelease { dropped } = action {
            let mut keys: Vec<(PacketKey, NodeId)> = dropped
                .segments
                .iter()
                .map(|s| {
                    let final_rx = match s.packet.dst {
                        Destination::Node(d) => d,
                        Destination::Group(_) => rx,
                    };
                    (s.packet.key(), final_rx)
                })
                .collect();
            keys.dedup();
            for unit in keys {
                self.declare_lost(tti, unit, LossCause::HarqExhausted);
            }
        }
        self.audit_harq(tx);
        Ok(())
    }

    // ---- bookkeeping ----------------------------------------------------

    fn end_of_tti(&mut self, tti: u64) {
        self.summary.rb_conservation_violations += self.binder.conservation_violations(tti) as u64;
        let peak =
            self.binder.infrastructure_usage(tti).into_iter().max().unwrap_or(0) as f64 / f64::from(self.num_rbs);
        self.summary.peak_infrastructure_utilization = self.summary.peak_infrastructure_utilization.max(peak);
        if let Some(ledger) = &mut self.ledger {
            for e in self.binder.entries(tti) {
                ledger.push(LedgerRecord {
                    tti,
                    node: self.nodes[e.node.index()].name.clone(),
                    direction: e.direction,
                    rbs: e.rbs.to_string(),
                    power_dbm: e.tx_power_dbm,
                });
            }
        }
    }

    /// Packet keys that still have bytes somewhere in the system.
    fn resident_keys(&self) -> HashSet<PacketKey> {
        let mut keys = HashSet::new();
        for n in &self.nodes {
            for q in n.queues.values() {
                keys.extend(q.packets().map(PacketDescriptor::key));
            }
            for e in n.harq.values() {
                for p in e.processes() {
                    if let Some(b) = &p.pdu {
                        keys.extend(b.packet_keys());
                    }
                }
            }
            keys.extend(n.receiver.partial_keys().copied());
        }
        for ev in self.queue.pending() {
            if let EventKind::Receive(r) = &ev.kind {
                keys.extend(r.block.packet_keys());
            }
        }
        keys
    }

    fn finish(mut self) -> Result<MetricsReport> {
        let resident = self.resident_keys();
        let held: HashSet<UnitKey> = self
            .nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| n.receiver.held().map(move |p| (p.key(), NodeId(i as u32))))
            .collect();
        let mut leaked = 0u64;
        let mut in_flight: Vec<PacketKey> = Vec::new();
        for (&(key, rx), &status) in &self.units {
            match status {
                UnitStatus::InFlight => {
                    in_flight.push(key);
                    if !resident.contains(&key) {
                        leaked += 1;
                    }
                }
                UnitStatus::Held => {
                    in_flight.push(key);
                    if !held.contains(&(key, rx)) {
                        leaked += 1;
                    }
                }
                UnitStatus::Delivered | UnitStatus::Lost => {}
            }
        }
        for key in in_flight {
            self.metrics_mut(&key).in_flight += 1;
        }

        let mut flows = Vec::new();
        for (i, m) in self.flow_metrics.iter().enumerate() {
            let flow = &self.flows[i / 2];
            if m.leg == Leg::Reverse && flow.transport != Transport::RequestResponse {
                continue;
            }
            flows.push(m.clone());
        }
        let s = &mut self.summary;
        for m in &flows {
            s.offered_packets += m.offered_packets;
            s.delivered_packets += m.delivered_packets;
            s.lost_packets += m.lost_total();
            s.in_flight_packets += m.in_flight;
            s.max_latency_ttis = s.max_latency_ttis.max(m.max_latency_ttis);
            if !m.is_conserved() {
                s.packet_conservation_mismatches += 1;
            }
        }
        let latency_sum: u64 = flows.iter().map(|m| m.latency_sum_ttis).sum();
        s.mean_latency_ttis = (s.delivered_packets > 0).then(|| latency_sum as f64 / s.delivered_packets as f64);
        let band = f64::from(self.num_rbs) * self.tti_count.max(1) as f64;
        for d in 0..3 {
            s.rb_utilization[d] = s.rbs_used[d] as f64 / band;
        }
        s.leaked_packets = leaked;

        let mismatches = s.packet_conservation_mismatches;
        if mismatches > 0 || leaked > 0 {
            return Err(EngineError::ConservationViolated { mismatches, leaked }.into());
        }
        Ok(MetricsReport {
            flows,
            summary: self.summary,
            mode_switches: self.mode_switches,
            cqi_reports: self.cqi_reports,
            grant_cqi: self.grant_cqi,
            deliveries: self.deliveries,
            trace: self.trace,
            ledger: self.ledger,
        })
    }
}

fn dst_node(dst: Destination) -> Option<NodeId> {
    match dst {
        Destination::Node(n) => Some(n),
        Destination::Group(_) => None,
    }
}
