use std::io;
use std::thread;

use crate::binder::{Binder, NodeRecord, RbSet};
use crate::channel::{ChannelModel, CqiTable, ShadowingField, MAX_CQI};
use crate::config::ScenarioConfig;
use crate::engine::{self, MetricsReport, RunOptions};
use crate::error::{Error, Result};
use crate::stack::amc_tbs;
use crate::types::{Mode, Position, Role};

pub const CQI_RANGE_FILE: &str = "sweep_cqi_range.csv";
pub const MODE_COMPARISON_FILE: &str = "mode_comparison.csv";

/// Distances are searched up to this bound.
const MAX_SEARCH_DISTANCE_M: f64 = 1.0e6;
/// Bisection stops once the bracket is narrower than this.
const DISTANCE_RESOLUTION_M: f64 = 1.0e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CqiRangeRow {
    pub cqi: u8,
    /// Largest sender-receiver distance at which a packet sent on
    /// `rbs_per_packet` RBs still decodes; 0 if it never does.
    pub max_decode_distance_m: f64,
    pub rbs_per_packet: u32,
    pub tbs_bits_per_rb: u32,
    pub packet_bits: u64,
}

/// For each CQI, finds the largest distance at which the scenario's multicast
/// packet still decodes on an otherwise idle band, and the number of RBs the
/// packet needs.
///
/// The first multicast flow supplies the packet size and its sender the D2D
/// transmit power. Shadowing must be off and the sender must use
/// preconfigured transmission parameters.
pub fn sweep_cqi_range(config: &ScenarioConfig, cqis: &[u8]) -> Result<Vec<CqiRangeRow>> {
    crate::config::check(config)?;
    if config.channel.shadowing_std_dev_db != 0.0 {
        return Err(Error::SweepRequiresDeterministicChannel);
    }
    let flow = config
        .flows
        .iter()
        .find(|f| f.multicast_address().is_some())
        .ok_or_else(|| Error::SweepPrecondition("a multicast flow".to_string()))?;
    let sender = config
        .node(&flow.source_node)
        .ok_or_else(|| Error::SweepPrecondition(format!("a declared sender `{}`", flow.source_node)))?;
    if !sender.use_preconfigured_tx_params {
        return Err(Error::SweepPrecondition(format!(
            "usePreconfiguredTxParams = true on `{}`",
            sender.name
        )));
    }
    let table = match &config.cqi_table_file {
        Some(path) => CqiTable::load(std::path::Path::new(path))?,
        None => CqiTable::default(),
    };
    let channel = ChannelModel::new(config.channel.clone(), table);
    let packet_bits = u64::from(flow.packet_bytes) * 8;

    let mut rows = Vec::with_capacity(cqis.len());
    for &cqi in cqis {
        if !(1..=MAX_CQI).contains(&cqi) {
            return Err(crate::stack::StackError::InvalidCqi(cqi).into());
        }
        let per_rb = amc_tbs(cqi, 1, config.sim.rb_capacity_re, &channel.table)?;
        let rbs = packet_bits
            .div_ceil(u64::from(per_rb.max(1)))
            .min(u64::from(config.sim.num_rbs)) as u32;
        let distance = max_decode_distance(&channel, config.sim.num_rbs, rbs as u16, sender.d2d_tx_power_dbm, cqi)?;
        rows.push(CqiRangeRow {
            cqi,
            max_decode_distance_m: distance,
            rbs_per_packet: rbs,
            tbs_bits_per_rb: per_rb,
            packet_bits,
        });
    }
    Ok(rows)
}

fn max_decode_distance(channel: &ChannelModel, num_rbs: u16, rbs: u16, power_dbm: f64, cqi: u8) -> Result<f64> {
    let rb_set = RbSet::range(0, rbs.max(1));
    let decodes = |d: f64| -> Result<bool> {
        let mut binder = Binder::new(num_rbs);
        let tx = binder.register_node(NodeRecord::new("tx", Role::Ue, Position::new(0.0, 0.0), true))?;
        let rx = binder.register_node(NodeRecord::new("rx", Role::Ue, Position::new(d, 0.0), true))?;
        let report = channel.compute_sinr(&binder, &ShadowingField::disabled(), tx, rx, &rb_set, power_dbm, 0)?;
        Ok(channel.decode(&report, cqi)?)
    };
    let mut lo = channel.params.min_distance_m;
    if !decodes(lo)? {
        return Ok(0.0);
    }
    let mut hi = lo * 2.0;
    while decodes(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SEARCH_DISTANCE_M {
            return Ok(MAX_SEARCH_DISTANCE_M);
        }
    }
    while hi - lo > DISTANCE_RESOLUTION_M {
        let mid = 0.5 * (lo + hi);
        if decodes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn write_cqi_range_csv<W: io::Write>(rows: &[CqiRangeRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "cqi",
        "max_decode_distance_m",
        "rbs_per_packet",
        "tbs_bits_per_rb",
        "packet_bits",
    ])?;
    for r in rows {
        out.write_record([
            r.cqi.to_string(),
            format!("{:.3}", r.max_decode_distance_m),
            r.rbs_per_packet.to_string(),
            r.tbs_bits_per_rb.to_string(),
            r.packet_bits.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeComparisonRow {
    pub mode: String,
    pub seed: u64,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub lost_packets: u64,
    pub mean_latency_ttis: Option<f64>,
    pub rbs_total: u64,
    pub rbs_dl: u64,
    pub rbs_ul: u64,
    pub rbs_sl: u64,
}

impl ModeComparisonRow {
    fn new(mode: Mode, report: &MetricsReport) -> Self {
        let s = &report.summary;
        Self {
            mode: mode.as_str().to_string(),
            seed: s.seed,
            offered_packets: s.offered_packets,
            delivered_packets: s.delivered_packets,
            lost_packets: s.lost_packets,
            mean_latency_ttis: s.mean_latency_ttis,
            rbs_total: s.total_rbs(),
            rbs_dl: s.rbs_used[0],
            rbs_ul: s.rbs_used[1],
            rbs_sl: s.rbs_used[2],
        }
    }
}

/// Runs `config` twice, every peered pair forced to DM and then to IM, with
/// the same seed. The two runs execute on separate threads; rows come back
/// DM first.
pub fn mode_comparison(
    config: &ScenarioConfig,
    options: RunOptions,
) -> Result<(Vec<ModeComparisonRow>, Vec<MetricsReport>)> {
    let run = |mode: Mode| {
        engine::run(
            config,
            RunOptions {
                forced_mode: Some(mode),
                ..options
            },
        )
    };
    let (dm, im) = thread::scope(|s| {
        let dm = s.spawn(|| run(Mode::Dm));
        let im = s.spawn(|| run(Mode::Im));
        (dm.join().expect("DM run panicked"), im.join().expect("IM run panicked"))
    });
    let (dm, im) = (dm?, im?);
    let rows = vec![
        ModeComparisonRow::new(Mode::Dm, &dm),
        ModeComparisonRow::new(Mode::Im, &im),
    ];
    Ok((rows, vec![dm, im]))
}

pub fn write_mode_comparison_csv<W: io::Write>(rows: &[ModeComparisonRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "mode",
        "seed",
        "offered_packets",
        "delivered_packets",
        "lost_packets",
        "mean_latency_ttis",
        "rbs_total",
        "rbs_dl",
        "rbs_ul",
        "rbs_sl",
    ])?;
    for r in rows {
        out.write_record([
            r.mode.clone(),
            r.seed.to_string(),
            r.offered_packets.to_string(),
            r.delivered_packets.to_string(),
            r.lost_packets.to_string(),
            r.mean_latency_ttis.map(|l| format!("{l:.6}")).unwrap_or_default(),
            r.rbs_total.to_string(),
            r.rbs_dl.to_string(),
            r.rbs_ul.to_string(),
            r.rbs_sl.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
