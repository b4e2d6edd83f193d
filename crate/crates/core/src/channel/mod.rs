//! Channel model: path loss, SINR against the allocation ledger, CQI and
//! decode decisions.

mod cqi;
mod shadowing;

use thiserror::Error;

use crate::binder::{Binder, BinderError, RbSet};
use crate::types::{LinkDirection, NodeId, Role};

pub use cqi::{decode, sinr_to_cqi, CqiTable, MAX_CQI};
pub use shadowing::ShadowingField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    UnknownNode(#[from] BinderError),
    #[error("empty resource block set")]
    EmptyRbSet,
    #[error("invalid CQI {0}; expected 1..=15")]
    InvalidCqi(u8),
    #[error("CQI reporting on the sidelink is disabled for this sender")]
    ReportingDisabled,
    #[error("malformed CQI table{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    MalformedTable { line: Option<usize>, message: String },
}

/// Log-distance propagation and receiver noise.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    /// Loss at the 1 m reference distance.
    pub reference_loss_db: f64,
    /// 0 disables shadowing.
    pub shadowing_std_dev_db: f64,
    pub noise_figure_db: f64,
    pub thermal_noise_dbm_per_rb: f64,
    pub min_distance_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.5,
            // free space at 1 m, 2 GHz
            reference_loss_db: 38.5,
            shadowing_std_dev_db: 0.0,
            noise_figure_db: 5.0,
            // -174 dBm/Hz over 180 kHz
            thermal_noise_dbm_per_rb: -121.45,
            min_distance_m: 1.0,
        }
    }
}

impl ChannelParams {
    pub fn noise_dbm_per_rb(&self) -> f64 {
        self.thermal_noise_dbm_per_rb + self.noise_figure_db
    }

    /// Invariant violations, as `(key, message)` pairs.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            out.push(("channel.pathLossExponent", "must be > 0".to_string()));
        }
        if !(self.shadowing_std_dev_db.is_finite() && self.shadowing_std_dev_db >= 0.0) {
            out.push(("channel.shadowingStdDevDb", "must be >= 0".to_string()));
        }
        if !(self.min_distance_m.is_finite() && self.min_distance_m > 0.0) {
            out.push(("channel.minDistanceM", "must be > 0".to_string()));
        }
        for (key, v) in [
            ("channel.referenceLossDb", self.reference_loss_db),
            ("channel.noiseFigureDb", self.noise_figure_db),
            ("channel.thermalNoiseDbmPerRb", self.thermal_noise_dbm_per_rb),
        ] {
            if !v.is_finite() {
                out.push((key, "must be finite".to_string()));
            }
        }
        out
    }
}

/// `reference + 10·n·log10(max(d, d_min)) + shadow`.
pub fn path_loss_db(distance_m: f64, params: &ChannelParams, shadow_sample_db: f64) -> f64 {
    let d = distance_m.max(params.min_distance_m);
    params.reference_loss_db + 10.0 * params.path_loss_exponent * d.log10() + shadow_sample_db
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Per-RB SINR of one reception plus its wideband (linear-mean) value.
#[derive(Clone, Debug, PartialEq)]
pub struct SinrReport {
    pub rbs: Vec<u16>,
    pub per_rb_sinr_db: Vec<f64>,
    pub mean_sinr_db: f64,
}

impl SinrReport {
    pub fn from_per_rb(rbs: Vec<u16>, per_rb_sinr_db: Vec<f64>) -> Self {
        let mean_lin =
            per_rb_sinr_db.iter().map(|&s| db_to_linear(s)).sum::<f64>() / per_rb_sinr_db.len().max(1) as f64;
        Self {
            rbs,
            per_rb_sinr_db,
            mean_sinr_db: linear_to_db(mean_lin),
        }
    }
}

/// A full-band channel probe used for CQI reporting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CqiProbe {
    pub tx: NodeId,
    pub rx: NodeId,
    pub direction: LinkDirection,
    pub tx_power_dbm: f64,
    /// Only consulted for `Sl` probes.
    pub sl_reporting_enabled: bool,
}

#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub params: ChannelParams,
    pub table: CqiTable,
}

impl ChannelModel {
    pub fn new(params: ChannelParams, table: CqiTable) -> Self {
        Self { params, table }
    }

    fn link_loss_db(
        &self,
        binder: &Binder,
        shadowing: &ShadowingField,
        tx: NodeId,
        rx: NodeId,
        tti: u64,
    ) -> Result<f64, ChannelError> {
        let a = binder.node(tx)?.position;
        let b = binder.node(rx)?.position;
        Ok(path_loss_db(
            a.distance_to(&b),
            &self.params,
            shadowing.sample_db(tx, rx, tti),
        ))
    }

    /// SINR at `rx` for a transmission by `tx` on `rbs` during `tti`.
    ///
    /// Interference is every other ledger entry of the same spectrum
    /// partition that overlaps an RB, attenuated by its own path loss to `rx`.
    #[allow(clippy::too_many_arguments)]
    pub fn compute_sinr(
        &self,
        binder: &Binder,
        shadowing: &ShadowingField,
        tx: NodeId,
        rx: NodeId,
        rbs: &RbSet,
        tx_power_dbm: f64,
        tti: u64,
    ) -> Result<SinrReport, ChannelError> {
        if rbs.is_empty() {
            return Err(ChannelError::EmptyRbSet);
        }
        let direction = match binder.node(tx)?.role {
            Role::ENodeB => LinkDirection::Dl,
            Role::Ue => LinkDirection::Ul,
        };
        binder.node(rx)?;
        let signal_dbm = tx_power_dbm - self.link_loss_db(binder, shadowing, tx, rx, tti)?;
        let noise_mw = db_to_linear(self.params.noise_dbm_per_rb());

        let interferers = binder.get_interferers(tti, rbs, direction, tx);
        let mut received_mw = Vec::with_capacity(interferers.len());
        for entry in &interferers {
            let loss = self.link_loss_db(binder, shadowing, entry.node, rx, tti)?;
            received_mw.push(db_to_linear(entry.tx_power_dbm - loss));
        }

        let mut per_rb = Vec::with_capacity(rbs.len());
        for rb in rbs.iter() {
            let interference_mw: f64 = interferers
                .iter()
                .zip(&received_mw)
                .filter(|(e, _)| e.rbs.contains(rb))
                .map(|(_, p)| p)
                .sum();
            per_rb.push(signal_dbm - linear_to_db(noise_mw + interference_mw));
        }
        Ok(SinrReport::from_per_rb(rbs.iter().collect(), per_rb))
    }

    /// Interference-free full-band SINR, as measured by a CQI probe.
    pub fn probe_sinr(
        &self,
        binder: &Binder,
        shadowing: &ShadowingField,
        tx: NodeId,
        rx: NodeId,
        tx_power_dbm: f64,
        tti: u64,
    ) -> Result<SinrReport, ChannelError> {
        let signal_dbm = tx_power_dbm - self.link_loss_db(binder, shadowing, tx, rx, tti)?;
        let sinr = signal_dbm - self.params.noise_dbm_per_rb();
        let n = binder.num_rbs();
        Ok(SinrReport::from_per_rb((0..n).collect(), vec![sinr; usize::from(n)]))
    }

    pub fn report_cqi(
        &self,
        binder: &Binder,
        shadowing: &ShadowingField,
        probe: &CqiProbe,
        tti: u64,
    ) -> Result<u8, ChannelError> {
        if probe.direction == LinkDirection::Sl && !probe.sl_reporting_enabled {
            return Err(ChannelError::ReportingDisabled);
        }
        let report = self.probe_sinr(binder, shadowing, probe.tx, probe.rx, probe.tx_power_dbm, tti)?;
        Ok(sinr_to_cqi(&report, &self.table))
    }

    pub fn decode(&self, report: &SinrReport, cqi_used: u8) -> Result<bool, ChannelError> {
        decode(report, cqi_used, &self.table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binder::{AllocationEntry, NodeRecord};
    use crate::types::Position;
    use proptest::prelude::*;

    fn binder_with(positions: &[(Role, f64, f64)]) -> Binder {
        let mut b = Binder::new(50);
        for (i, &(role, x, y)) in positions.iter().enumerate() {
            b.register_node(NodeRecord::new(format!("n{i}"), role, Position::new(x, y), true))
                .unwrap();
        }
        b
    }

    fn model(params: ChannelParams) -> ChannelModel {
        ChannelModel::new(params, CqiTable::default())
    }

    #[test]
    fn reference_distance_gives_reference_loss() {
        let p = ChannelParams::default();
        assert_eq!(path_loss_db(1.0, &p, 0.0), p.reference_loss_db);
    }

    #[test]
    fn decade_of_distance_costs_ten_times_exponent() {
        let p = ChannelParams {
            path_loss_exponent: 3.5,
            ..ChannelParams::default()
        };
        let diff = path_loss_db(100.0, &p, 0.0) - path_loss_db(10.0, &p, 0.0);
        assert!((diff - 35.0).abs() < 1e-9, "{diff}");
    }

    #[test]
    fn zero_distance_is_clamped() {
        let p = ChannelParams {
            min_distance_m: 2.5,
            ..ChannelParams::default()
        };
        assert_eq!(path_loss_db(0.0, &p, 0.0), path_loss_db(2.5, &p, 0.0));
        assert_eq!(path_loss_db(1.0, &p, 0.0), path_loss_db(2.5, &p, 0.0));
    }

    #[test]
    fn shadow_sample_adds_directly() {
        let p = ChannelParams::default();
        assert_eq!(path_loss_db(10.0, &p, 4.0), path_loss_db(10.0, &p, 0.0) + 4.0);
    }

    #[test]
    fn noise_limited_sinr() {
        // received -90 dBm over -116 dBm noise
        let params = ChannelParams {
            reference_loss_db: 0.0,
            noise_figure_db: 0.0,
            thermal_noise_dbm_per_rb: -116.0,
            ..ChannelParams::default()
        };
        let binder = binder_with(&[(Role::Ue, 0.0, 0.0), (Role::Ue, 1.0, 0.0)]);
        let r = model(params)
            .compute_sinr(
                &binder,
                &ShadowingField::disabled(),
                NodeId(0),
                NodeId(1),
                &RbSet::range(0, 3),
                -90.0,
                0,
            )
            .unwrap();
        assert_eq!(r.per_rb_sinr_db.len(), 3);
        for s in &r.per_rb_sinr_db {
            assert!((s - 26.0).abs() < 1e-9);
        }
        assert!((r.mean_sinr_db - 26.0).abs() < 1e-9);
    }

    #[test]
    fn equal_interferer_gives_zero_db() {
        // tx and interferer both 10 m from rx at equal power; noise negligible
        let mut binder = binder_with(&[
            (Role::ENodeB, 500.0, 500.0),
            (Role::Ue, -10.0, 0.0),
            (Role::Ue, 0.0, 0.0),
            (Role::Ue, 10.0, 0.0),
        ]);
        let rbs = RbSet::from_iter([2u16]);
        binder
            .record_allocation(0, AllocationEntry::new(NodeId(1), LinkDirection::Sl, rbs.clone(), 20.0))
            .unwrap();
        binder
            .record_allocation(0, AllocationEntry::new(NodeId(3), LinkDirection::Ul, rbs.clone(), 20.0))
            .unwrap();
        let r = model(ChannelParams::default())
            .compute_sinr(
                &binder,
                &ShadowingField::disabled(),
                NodeId(1),
                NodeId(2),
                &rbs,
                20.0,
                0,
            )
            .unwrap();
        // hand sum: S / (S + N) with S/N = 20 - 73.5 + 116.45 = 62.95 dB
        let snr_lin = db_to_linear(20.0 - (38.5 + 35.0) + 116.45);
        let expected = linear_to_db(snr_lin / (snr_lin + 1.0));
        assert!((r.mean_sinr_db - expected).abs() < 1e-9);
        assert!(r.mean_sinr_db.abs() < 1e-5);
    }

    #[test]
    fn empty_rbs_rejected() {
        let binder = binder_with(&[(Role::Ue, 0.0, 0.0), (Role::Ue, 1.0, 0.0)]);
        let err = model(ChannelParams::default())
            .compute_sinr(
                &binder,
                &ShadowingField::disabled(),
                NodeId(0),
                NodeId(1),
                &RbSet::default(),
                20.0,
                0,
            )
            .unwrap_err();
        assert_eq!(err, ChannelError::EmptyRbSet);
    }

    #[test]
    fn unknown_node_rejected() {
        let binder = binder_with(&[(Role::Ue, 0.0, 0.0)]);
        let err = model(ChannelParams::default())
            .compute_sinr(
                &binder,
                &ShadowingField::disabled(),
                NodeId(0),
                NodeId(9),
                &RbSet::range(0, 1),
                20.0,
                0,
            )
            .unwrap_err();
        assert!(matches!(err, ChannelError::UnknownNode(_)));
    }

    #[test]
    fn sl_report_refused_when_disabled() {
        let binder = binder_with(&[(Role::Ue, 0.0, 0.0), (Role::Ue, 1.0, 0.0)]);
        let probe = CqiProbe {
            tx: NodeId(0),
            rx: NodeId(1),
            direction: LinkDirection::Sl,
            tx_power_dbm: 20.0,
            sl_reporting_enabled: false,
        };
        let m = model(ChannelParams::default());
        assert_eq!(
            m.report_cqi(&binder, &ShadowingField::disabled(), &probe, 0),
            Err(ChannelError::ReportingDisabled)
        );
        // UL probes ignore the sidelink flag
        let ul = CqiProbe {
            direction: LinkDirection::Ul,
            ..probe
        };
        assert!(m.report_cqi(&binder, &ShadowingField::disabled(), &ul, 0).is_ok());
    }

    #[test]
    fn ue_on_top_of_enb_reports_best_cqi() {
        let binder = binder_with(&[(Role::ENodeB, 0.0, 0.0), (Role::Ue, 0.0, 0.0)]);
        let probe = CqiProbe {
            tx: NodeId(1),
            rx: NodeId(0),
            direction: LinkDirection::Ul,
            tx_power_dbm: 26.0,
            sl_reporting_enabled: false,
        };
        let cqi = model(ChannelParams::default())
            .report_cqi(&binder, &ShadowingField::disabled(), &probe, 0)
            .unwrap();
        assert_eq!(cqi, 15);
    }

    #[test]
    fn tenfold_distance_lowers_sl_cqi() {
        // reference pair 40 m apart: SINR = 20 - (38.5 + 35·log10 40) + 116.45 ≈ 41.9 dB → 15
        // far pair 400 m apart: 35 dB lower ≈ 6.9 dB → CQI 7
        let binder = binder_with(&[
            (Role::Ue, 0.0, 0.0),
            (Role::Ue, 40.0, 0.0),
            (Role::Ue, 1000.0, 0.0),
            (Role::Ue, 1400.0, 0.0),
        ]);
        let m = model(ChannelParams::default());
        let probe = |tx, rx| CqiProbe {
            tx: NodeId(tx),
            rx: NodeId(rx),
            direction: LinkDirection::Sl,
            tx_power_dbm: 20.0,
            sl_reporting_enabled: true,
        };
        let near = m
            .report_cqi(&binder, &ShadowingField::disabled(), &probe(0, 1), 0)
            .unwrap();
        let far = m
            .report_cqi(&binder, &ShadowingField::disabled(), &probe(2, 3), 0)
            .unwrap();
        let near_sinr = 20.0 - path_loss_db(40.0, &m.params, 0.0) - m.params.noise_dbm_per_rb();
        let far_sinr = 20.0 - path_loss_db(400.0, &m.params, 0.0) - m.params.noise_dbm_per_rb();
        assert!((near_sinr - far_sinr - 35.0).abs() < 1e-9);
        assert_eq!(near, 15);
        assert_eq!(far, 7);
        assert!(far < near);
    }

    proptest! {
        #[test]
        fn path_loss_is_monotone(d1 in 0.0f64..5000.0, d2 in 0.0f64..5000.0, n in 2.0f64..5.0) {
            let p = ChannelParams { path_loss_exponent: n, ..ChannelParams::default() };
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(path_loss_db(lo, &p, 0.0) <= path_loss_db(hi, &p, 0.0));
        }

        #[test]
        fn sinr_drops_as_receiver_moves_away(d1 in 1.0f64..3000.0, d2 in 1.0f64..3000.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let m = model(ChannelParams::default());
            let mean_at = |d: f64| {
                let b = binder_with(&[(Role::Ue, 0.0, 0.0), (Role::Ue, d, 0.0), (Role::Ue, -50.0, 0.0)]);
                let mut b = b;
                b.record_allocation(0, AllocationEntry::new(NodeId(2), LinkDirection::Ul, RbSet::range(0, 4), 23.0)).unwrap();
                m.compute_sinr(&b, &ShadowingField::disabled(), NodeId(0), NodeId(1), &RbSet::range(0, 4), 20.0, 0)
                    .unwrap()
                    .mean_sinr_db
            };
            prop_assert!(mean_at(hi) <= mean_at(lo) + 1e-9);
        }

        #[test]
        fn interferer_never_helps(x in -500.0f64..500.0, y in -500.0f64..500.0, power in -10.0f64..30.0, rb in 0u16..4) {
            let m = model(ChannelParams::default());
            let mut b = binder_with(&[(Role::Ue, 0.0, 0.0), (Role::Ue, 30.0, 0.0), (Role::Ue, x, y)]);
            let rbs = RbSet::range(0, 4);
            let shadow = ShadowingField::new(3, 4.0);
            let before = m.compute_sinr(&b, &shadow, NodeId(0), NodeId(1), &rbs, 20.0, 5).unwrap();
            b.record_allocation(5, AllocationEntry::new(NodeId(2), LinkDirection::Sl, RbSet::from_iter([rb]), power)).unwrap();
            let after = m.compute_sinr(&b, &shadow, NodeId(0), NodeId(1), &rbs, 20.0, 5).unwrap();
            for (a, bb) in after.per_rb_sinr_db.iter().zip(&before.per_rb_sinr_db) {
                prop_assert!(a <= bb);
            }
        }

        #[test]
        fn mean_is_linear_average(values in proptest::collection::vec(-20.0f64..40.0, 1..10)) {
            let r = SinrReport::from_per_rb((0..values.len() as u16).collect(), values.clone());
            let lin = values.iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>() / values.len() as f64;
            prop_assert!((r.mean_sinr_db - 10.0 * lin.log10()).abs() < 1e-9);
        }
    }
}
