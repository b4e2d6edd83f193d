use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use super::pattern::Pattern;
use super::{Diagnostic, DiagnosticKind, ScenarioConfig, Transport};
use crate::channel::MAX_CQI;
use crate::types::Role;

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn violation(&mut self, key: impl Into<String>, node: Option<&str>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            kind: DiagnosticKind::ConstraintViolation,
            key: key.into(),
            node: node.map(str::to_string),
            message: message.into(),
            reference: None,
        });
    }

    fn unresolved(&mut self, key: impl Into<String>, node: Option<&str>, reference: &str) {
        self.0.push(Diagnostic {
            kind: DiagnosticKind::UnresolvedNodeReference,
            key: key.into(),
            node: node.map(str::to_string),
            message: format!("`{reference}` is not a declared node"),
            reference: Some(reference.to_string()),
        });
    }
}

/// Checks every scenario invariant. An empty result means the configuration
/// can be run.
pub fn validate(config: &ScenarioConfig) -> Vec<Diagnostic> {
    let mut out = Collector(Vec::new());

    let enbs = config.nodes.iter().filter(|n| n.role == Role::ENodeB).count();
    if enbs != 1 {
        out.violation("network.enb", None, format!("exactly one eNB required, found {enbs}"));
    }
    let mut seen = BTreeSet::new();
    for node in &config.nodes {
        if !seen.insert(node.name.as_str()) {
            out.violation("network", Some(&node.name), "node declared more than once");
        }
    }

    let sim = &config.sim;
    if sim.num_rbs < 1 {
        out.violation("sim.numRbs", None, "must be >= 1");
    }
    if sim.rb_capacity_re < 1 {
        out.violation("sim.rbCapacityRe", None, "must be >= 1");
    }
    if sim.cqi_report_period < 1 {
        out.violation("sim.cqiReportPeriod", None, "must be >= 1");
    }
    if config.mode_selection.period_ttis < 1 {
        out.violation("nic.d2dModeSelectionPeriod", None, "must be >= 1");
    }
    for (key, message) in config.channel.problems() {
        out.violation(key, None, message);
    }
    if !matches!(config.amc_mode.as_str(), "AUTO" | "D2D") {
        out.violation(
            "nic.mac.amcMode",
            config.enb().map(|e| e.name.as_str()),
            format!("unsupported AMC mode `{}` (AUTO or D2D)", config.amc_mode),
        );
    }

    let is_ue = |name: &str| config.node(name).is_some_and(|n| n.role == Role::Ue);
    let mut uses_sidelink = false;

    for node in &config.nodes {
        let name = Some(node.name.as_str());
        if !node.position.is_finite() {
            out.violation("mobility", name, "position must be finite");
        }
        for (key, v) in [
            ("nic.phy.ueTxPower", node.ue_tx_power_dbm),
            ("nic.phy.d2dTxPower", node.d2d_tx_power_dbm),
            ("nic.phy.eNodeBTxPower", node.enb_tx_power_dbm),
        ] {
            if !v.is_finite() {
                out.violation(key, name, "power must be finite");
            }
        }
        if let Some(cqi) = node.d2d_cqi {
            if !(1..=MAX_CQI).contains(&cqi) {
                out.violation("nic.phy.d2dCqi", name, format!("CQI {cqi} outside 1..=15"));
            }
        }
        if node.use_preconfigured_tx_params && node.d2d_cqi.is_none() {
            out.violation("nic.phy.d2dCqi", name, "required when usePreconfiguredTxParams is true");
        }
        if node.d2d_peer_addresses.is_empty() {
            continue;
        }
        uses_sidelink = true;
        if !node.d2d_capable {
            out.violation(
                "nic.d2dPeerAddresses",
                name,
                "peers listed on a node that is not d2dCapable",
            );
        }
        let mut peers = BTreeSet::new();
        for peer in &node.d2d_peer_addresses {
            if config.node(peer).is_none() {
                out.unresolved("nic.d2dPeerAddresses", name, peer);
            } else if !is_ue(peer) {
                out.violation("nic.d2dPeerAddresses", name, format!("peer `{peer}` is not a UE"));
            } else if peer == &node.name {
                out.violation("nic.d2dPeerAddresses", name, "a node cannot peer with itself");
            }
            if !peers.insert(peer) {
                out.violation("nic.d2dPeerAddresses", name, format!("peer `{peer}` listed twice"));
            }
        }
        if !node.use_preconfigured_tx_params && !config.sl_reporting_enabled(node) {
            out.violation(
                "nic.phy.enableD2DCqiReporting",
                name,
                "no sidelink CQI source: enable reporting or usePreconfiguredTxParams",
            );
        }
    }

    for group in &config.multicast_groups {
        match group.address.parse::<Ipv4Addr>() {
            Ok(ip) if ip.is_multicast() => {}
            _ => out.violation(
                format!("multicast.{}", group.address),
                None,
                "group address must be a dotted-quad in 224.0.0.0/4",
            ),
        }
        if let Err(e) = Pattern::parse(&group.member_pattern) {
            out.violation(format!("multicast.{}", group.address), None, e.to_string());
        }
    }

    for flow in &config.flows {
        let key = format!("udpApp[{}]", flow.app_index);
        let src = Some(flow.source_node.as_str());
        let Some(source) = config.node(&flow.source_node) else {
            out.unresolved(&key, None, &flow.source_node);
            continue;
        };
        if flow.packet_bytes < 1 {
            out.violation(format!("{key}.packetBytes"), src, "must be >= 1");
        }
        if flow.period_ttis < 1 {
            out.violation(format!("{key}.periodTtis"), src, "must be >= 1");
        }
        if flow.dest_address.is_empty() {
            out.violation(format!("{key}.destAddress"), src, "destination not set");
            continue;
        }
        if let Ok(ip) = flow.dest_address.parse::<Ipv4Addr>() {
            if !ip.is_multicast() {
                out.violation(
                    format!("{key}.destAddress"),
                    src,
                    "only multicast IP literals are supported; address nodes by name",
                );
                continue;
            }
            uses_sidelink = true;
            if config.group(&flow.dest_address).is_none() {
                out.unresolved(format!("{key}.destAddress"), src, &flow.dest_address);
            }
            if source.role != Role::Ue || !source.d2d_capable {
                out.violation(
                    format!("{key}.destAddress"),
                    src,
                    "multicast sender must be a D2D-capable UE",
                );
            }
            if !source.use_preconfigured_tx_params {
                out.violation(
                    "nic.phy.usePreconfiguredTxParams",
                    src,
                    "one-to-many sidelink requires a preconfigured CQI",
                );
            }
            if flow.transport == Transport::RequestResponse {
                out.violation(
                    format!("{key}.transport"),
                    src,
                    "a multicast flow cannot be request/response",
                );
            }
            continue;
        }
        match config.node(&flow.dest_address) {
            None => out.unresolved(format!("{key}.destAddress"), src, &flow.dest_address),
            Some(dest) if dest.name == source.name => {
                out.violation(format!("{key}.destAddress"), src, "flow addressed to its own source");
            }
            Some(dest) if dest.role == Role::ENodeB && source.role == Role::ENodeB => {
                out.violation(format!("{key}.destAddress"), src, "eNB-to-eNB flow");
            }
            Some(_) => {}
        }
    }

    if uses_sidelink {
        if let Some(enb) = config.enb() {
            if !enb.d2d_capable {
                out.violation(
                    "d2dCapable",
                    Some(&enb.name),
                    "sidelink traffic requires a D2D-capable eNB",
                );
            }
            if !config.amc_d2d_enabled() {
                out.violation(
                    "nic.mac.amcMode",
                    Some(&enb.name),
                    "sidelink traffic requires amcMode = \"D2D\"",
                );
            }
        }
    }

    out.0
}

#[cfg(test)]
mod tests {
    use super::super::{parse_scenario, FlowConfig, MulticastGroup, NodeConfig, ScenarioConfig};
    use super::*;

    fn base() -> ScenarioConfig {
        parse_scenario(
            "network.enb = eNodeB\nnetwork.ues = ueD2DTx[0] ueD2DRx[0]\n\
             *.eNodeB.d2dCapable = true\n*.ueD2D*[*].d2dCapable = true\n\
             *.eNodeB.nic.mac.amcMode = D2D\n*.ueD2DTx[0].nic.d2dPeerAddresses = ueD2DRx[0]\n",
        )
        .unwrap()
    }

    #[test]
    fn base_is_clean() {
        assert!(validate(&base()).is_empty());
    }

    #[test]
    fn two_enbs() {
        let mut c = base();
        c.nodes.push(NodeConfig::new("eNodeB2", Role::ENodeB));
        let d = validate(&c);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("exactly one eNB required"));
        assert_eq!(d[0].kind, DiagnosticKind::ConstraintViolation);
    }

    #[test]
    fn unknown_peer_names_node_and_key() {
        let mut c = base();
        c.node_mut("ueD2DTx[0]").unwrap().d2d_peer_addresses = vec!["ghost[0]".into()];
        let d = validate(&c);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::UnresolvedNodeReference);
        assert_eq!(d[0].node.as_deref(), Some("ueD2DTx[0]"));
        assert_eq!(d[0].key, "nic.d2dPeerAddresses");
        assert_eq!(d[0].reference.as_deref(), Some("ghost[0]"));
    }

    #[test]
    fn peers_require_capability() {
        let mut c = base();
        c.node_mut("ueD2DTx[0]").unwrap().d2d_capable = false;
        let d = validate(&c);
        assert!(d.iter().any(|d| d.message.contains("not d2dCapable")));
    }

    #[test]
    fn preconfigured_needs_cqi() {
        let mut c = base();
        c.node_mut("ueD2DRx[0]").unwrap().use_preconfigured_tx_params = true;
        assert!(validate(&c).iter().any(|d| d.key == "nic.phy.d2dCqi"));
        c.node_mut("ueD2DRx[0]").unwrap().d2d_cqi = Some(16);
        assert!(validate(&c).iter().any(|d| d.message.contains("outside 1..=15")));
        c.node_mut("ueD2DRx[0]").unwrap().d2d_cqi = Some(15);
        assert!(validate(&c).is_empty());
    }

    #[test]
    fn sidelink_requires_d2d_amc_and_capable_enb() {
        let mut c = base();
        c.amc_mode = "AUTO".into();
        c.node_mut("eNodeB").unwrap().d2d_capable = false;
        let d = validate(&c);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn missing_sl_cqi_source() {
        let mut c = base();
        c.node_mut("eNodeB").unwrap().enable_d2d_cqi_reporting = false;
        assert!(validate(&c)
            .iter()
            .any(|d| d.message.contains("no sidelink CQI source")));
    }

    #[test]
    fn flow_checks() {
        let mut c = base();
        let flow = |dest: &str| FlowConfig {
            flow_id: 0,
            source_node: "ueD2DTx[0]".into(),
            app_index: 0,
            dest_address: dest.into(),
            packet_bytes: 100,
            period_ttis: 10,
            start_tti: 0,
            transport: Transport::OneWay,
        };
        c.flows = vec![flow("ueD2DRx[0]")];
        assert!(validate(&c).is_empty());

        c.flows = vec![flow("nobody")];
        assert_eq!(validate(&c)[0].kind, DiagnosticKind::UnresolvedNodeReference);

        c.flows = vec![flow("10.0.0.1")];
        assert!(validate(&c)[0].message.contains("multicast"));

        c.flows = vec![flow("ueD2DTx[0]")];
        assert!(validate(&c)[0].message.contains("own source"));

        c.flows = vec![FlowConfig {
            packet_bytes: 0,
            period_ttis: 0,
            ..flow("eNodeB")
        }];
        assert_eq!(validate(&c).len(), 2);

        // multicast: group must exist and the sender must be preconfigured
        c.flows = vec![flow("224.0.0.10")];
        let d = validate(&c);
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::UnresolvedNodeReference));
        assert!(d.iter().any(|d| d.message.contains("preconfigured CQI")));
        c.multicast_groups.push(MulticastGroup {
            address: "224.0.0.10".into(),
            member_pattern: "ueD2D*[*]".into(),
        });
        let tx = c.node_mut("ueD2DTx[0]").unwrap();
        tx.use_preconfigured_tx_params = true;
        tx.d2d_cqi = Some(7);
        assert!(validate(&c).is_empty());
    }

    #[test]
    fn bad_group_address() {
        let mut c = base();
        c.multicast_groups.push(MulticastGroup {
            address: "192.168.0.1".into(),
            member_pattern: "*".into(),
        });
        assert_eq!(validate(&c).len(), 1);
    }

    #[test]
    fn channel_and_sim_invariants() {
        let mut c = base();
        c.sim.num_rbs = 0;
        c.sim.rb_capacity_re = 0;
        c.channel.path_loss_exponent = 0.0;
        c.channel.min_distance_m = -1.0;
        c.channel.shadowing_std_dev_db = -2.0;
        assert_eq!(validate(&c).len(), 5);
    }
}
