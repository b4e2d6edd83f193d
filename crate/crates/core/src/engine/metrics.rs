//! Run metrics and their CSV serialization.
//!
//! All files have a header row and a fixed column order. Reals are written
//! with six decimals.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::stack::Leg;
use crate::types::LinkDirection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LossCause {
    HarqExhausted,
    ModeSwitch,
    /// Multicast copy at a UE that is not in the group.
    Filtered,
    /// Multicast copy that a member could not decode.
    DecodeFailed,
}

impl LossCause {
    pub const ALL: [LossCause; 4] = [
        LossCause::HarqExhausted,
        LossCause::ModeSwitch,
        LossCause::Filtered,
        LossCause::DecodeFailed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossCause::HarqExhausted => "harqExhausted",
            LossCause::ModeSwitch => "modeSwitch",
            LossCause::Filtered => "filtered",
            LossCause::DecodeFailed => "decodeFailed",
        }
    }
}

/// Counters of one flow leg. Multicast flows count one packet per receiving
/// UE.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowMetrics {
    pub flow_id: u32,
    pub leg: Leg,
    pub src: String,
    pub dst: String,
    /// Direction given to the leg's first packet.
    pub direction: String,
    pub offered_packets: u64,
    pub offered_bits: u64,
    pub delivered_packets: u64,
    pub delivered_bits: u64,
    pub latency_sum_ttis: u64,
    pub max_latency_ttis: u64,
    pub lost: [u64; 4],
    pub in_flight: u64,
}

impl FlowMetrics {
    pub fn lost_total(&self) -> u64 {
        self.lost.iter().sum()
    }

    pub fn lost_by(&self, cause: LossCause) -> u64 {
        self.lost[cause.index()]
    }

    pub fn mean_latency_ttis(&self) -> Option<f64> {
        (self.delivered_packets > 0).then(|| self.latency_sum_ttis as f64 / self.delivered_packets as f64)
    }

    /// `offered = delivered + lost + in flight`.
    pub fn is_conserved(&self) -> bool {
        self.offered_packets == self.delivered_packets + self.lost_total() + self.in_flight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSwitchRecord {
    pub tti: u64,
    pub sender: String,
    pub receiver: String,
    pub old_mode: String,
    pub new_mode: String,
    pub flushed_packets: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub tti: u64,
    pub event: &'static str,
    pub src: String,
    pub dst: String,
    pub direction: String,
    pub rbs: String,
    pub sinr_db: Option<f64>,
    pub decoded: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRecord {
    pub tti: u64,
    pub node: String,
    pub direction: LinkDirection,
    pub rbs: String,
    pub power_dbm: f64,
}

/// One packet handed to the application at its destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub flow_id: u32,
    pub leg: Leg,
    pub seq_no: u64,
    pub receiver: u32,
    pub created_tti: u64,
    pub delivered_tti: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub tti_count: u64,
    pub seed: u64,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub lost_packets: u64,
    pub in_flight_packets: u64,
    pub mean_latency_ttis: Option<f64>,
    pub max_latency_ttis: u64,
    /// RBs granted over the run, indexed by [`LinkDirection::index`].
    pub rbs_used: [u64; 3],
    pub grants: [u64; 3],
    /// Mean fraction of the band used per TTI, by direction.
    pub rb_utilization: [f64; 3],
    /// Highest infrastructure usage of any partition in any TTI, as a
    /// fraction of the band.
    pub peak_infrastructure_utilization: f64,
    pub sl_cqi_reports: u64,
    pub mode_switches: u64,
    pub mode_switch_losses: u64,
    pub harq_multicast_violations: u64,
    pub rb_conservation_violations: u64,
    pub packet_conservation_mismatches: u64,
    pub leaked_packets: u64,
}

impl RunSummary {
    pub fn total_rbs(&self) -> u64 {
        self.rbs_used.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub flows: Vec<FlowMetrics>,
    pub summary: RunSummary,
    pub mode_switches: Vec<ModeSwitchRecord>,
    /// Reported CQI values, `[direction][cqi]`.
    pub cqi_reports: [[u64; 16]; 3],
    /// CQI used by grants, `[direction][cqi]`.
    pub grant_cqi: [[u64; 16]; 3],
    pub deliveries: Vec<DeliveryRecord>,
    pub trace: Option<Vec<TraceRecord>>,
    pub ledger: Option<Vec<LedgerRecord>>,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MODE_SWITCH_FILE: &str = "mode_switches.csv";
pub const CQI_HISTOGRAM_FILE: &str = "cqi_histogram.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const LEDGER_FILE: &str = "ledger.csv";

fn real(v: f64) -> String {
    format!("{v:.6}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

impl MetricsReport {
    pub fn write_metrics_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "flow_id",
            "leg",
            "src",
            "dst",
            "direction",
            "offered_packets",
            "offered_bits",
            "delivered_packets",
            "delivered_bits",
            "mean_latency_ttis",
            "max_latency_ttis",
            "lost_harq_exhausted",
            "lost_mode_switch",
            "lost_filtered",
            "lost_decode_failed",
            "in_flight",
        ])?;
        for f in &self.flows {
            out.write_record([
                f.flow_id.to_string(),
                f.leg.as_str().to_string(),
                f.src.clone(),
                f.dst.clone(),
                f.direction.clone(),
                f.offered_packets.to_string(),
                f.offered_bits.to_string(),
                f.delivered_packets.to_string(),
                f.delivered_bits.to_string(),
                opt_real(f.mean_latency_ttis()),
                f.max_latency_ttis.to_string(),
                f.lost[0].to_string(),
                f.lost[1].to_string(),
                f.lost[2].to_string(),
                f.lost[3].to_string(),
                f.in_flight.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_rows(&self) -> Vec<(&'static str, String)> {
        let s = &self.summary;
        vec![
            ("tti_count", s.tti_count.to_string()),
            ("seed", s.seed.to_string()),
            ("offered_packets", s.offered_packets.to_string()),
            ("delivered_packets", s.delivered_packets.to_string()),
            ("lost_packets", s.lost_packets.to_string()),
            ("in_flight_packets", s.in_flight_packets.to_string()),
            ("mean_latency_ttis", opt_real(s.mean_latency_ttis)),
            ("max_latency_ttis", s.max_latency_ttis.to_string()),
            ("rbs_dl", s.rbs_used[0].to_string()),
            ("rbs_ul", s.rbs_used[1].to_string()),
            ("rbs_sl", s.rbs_used[2].to_string()),
            ("rbs_total", s.total_rbs().to_string()),
            ("grants_dl", s.grants[0].to_string()),
            ("grants_ul", s.grants[1].to_string()),
            ("grants_sl", s.grants[2].to_string()),
            ("rb_utilization_dl", real(s.rb_utilization[0])),
            ("rb_utilization_ul", real(s.rb_utilization[1])),
            ("rb_utilization_sl", real(s.rb_utilization[2])),
            (
                "peak_infrastructure_utilization",
                real(s.peak_infrastructure_utilization),
            ),
            ("sl_cqi_reports", s.sl_cqi_reports.to_string()),
            ("mode_switches", s.mode_switches.to_string()),
            ("mode_switch_losses", s.mode_switch_losses.to_string()),
            ("harq_multicast_violations", s.harq_multicast_violations.to_string()),
            ("rb_conservation_violations", s.rb_conservation_violations.to_string()),
            (
                "packet_conservation_mismatches",
                s.packet_conservation_mismatches.to_string(),
            ),
            ("leaked_packets", s.leaked_packets.to_string()),
        ]
    }

    pub fn write_summary_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value"])?;
        for (k, v) in self.summary_rows() {
            out.write_record([k, v.as_str()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_mode_switches_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tti", "sender", "receiver", "old_mode", "new_mode", "flushed_packets"])?;
        for r in &self.mode_switches {
            out.write_record([
                r.tti.to_string(),
                r.sender.clone(),
                r.receiver.clone(),
                r.old_mode.clone(),
                r.new_mode.clone(),
                r.flushed_packets.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_cqi_histogram_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kind", "direction", "cqi", "count"])?;
        for (kind, hist) in [("report", &self.cqi_reports), ("grant", &self.grant_cqi)] {
            for dir in LinkDirection::ALL {
                for (cqi, count) in hist[dir.index()].iter().enumerate() {
                    out.write_record([kind, dir.as_str(), &cqi.to_string(), &count.to_string()])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_trace_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tti", "event", "src", "dst", "direction", "rbs", "sinr_db", "decoded"])?;
        for r in self.trace.iter().flatten() {
            out.write_record([
                r.tti.to_string(),
                r.event.to_string(),
                r.src.clone(),
                r.dst.clone(),
                r.direction.clone(),
                r.rbs.clone(),
                opt_real(r.sinr_db),
                r.decoded.map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_ledger_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tti", "node", "direction", "rb_list", "power_dbm"])?;
        for r in self.ledger.iter().flatten() {
            out.write_record([
                r.tti.to_string(),
                r.node.clone(),
                r.direction.as_str().to_string(),
                r.rbs.clone(),
                real(r.power_dbm),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes every CSV of the run into `dir`, prefixing file names with
    /// `prefix`. Returns the written paths.
    pub fn write_to_dir(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> csv::Result<()>| -> Result<()> {
            let path = dir.join(format!("{prefix}{name}"));
            let mut buf = Vec::new();
            f(&mut buf)?;
            fs::write(&path, buf).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
            Ok(())
        };
        emit(METRICS_FILE, &|b| self.write_metrics_csv(b))?;
        emit(SUMMARY_FILE, &|b| self.write_summary_csv(b))?;
        emit(MODE_SWITCH_FILE, &|b| self.write_mode_switches_csv(b))?;
        emit(CQI_HISTOGRAM_FILE, &|b| self.write_cqi_histogram_csv(b))?;
        if self.trace.is_some() {
            emit(TRACE_FILE, &|b| self.write_trace_csv(b))?;
        }
        if self.ledger.is_some() {
            emit(LEDGER_FILE, &|b| self.write_ledger_csv(b))?;
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_has_headers_only() {
        let r = MetricsReport::default();
        let mut buf = Vec::new();
        r.write_metrics_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("flow_id,leg,src,dst,direction,"));
    }

    #[test]
    fn conservation_check() {
        let mut f = FlowMetrics {
            offered_packets: 10,
            delivered_packets: 6,
            in_flight: 1,
            ..Default::default()
        };
        f.lost[LossCause::ModeSwitch.index()] = 3;
        assert!(f.is_conserved());
        f.in_flight = 0;
        assert!(!f.is_conserved());
    }
}
