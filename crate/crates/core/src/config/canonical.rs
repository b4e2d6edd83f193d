use std::fmt::Write;

use super::parse::{AppParam, NodeParam};
use super::{FlowConfig, NodeConfig, ScenarioConfig};
use crate::types::Role;

/// Serializes a resolved configuration as one literal assignment per
/// parameter. Parsing the output yields a configuration equal to the input.
pub fn to_canonical(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    let net = &config.network_name;
    let names = |role: Role| {
        config
            .nodes
            .iter()
            .filter(|n| n.role == role)
            .map(|n| n.name.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    line(&mut out, "network.name", net);
    line(&mut out, "network.enb", &names(Role::ENodeB));
    line(&mut out, "network.ues", &names(Role::Ue));

    let sim = &config.sim;
    let sim_values = [
        sim.tti_count.to_string(),
        sim.seed.to_string(),
        sim.num_rbs.to_string(),
        sim.rb_capacity_re.to_string(),
        sim.max_harq_retx.to_string(),
        sim.sidelink_reuse.to_string(),
        sim.traffic_jitter_ttis.to_string(),
        sim.cqi_report_period.to_string(),
    ];
    for (key, value) in super::parse::SIM_KEYS.iter().zip(&sim_values) {
        line(&mut out, key, value);
    }

    let ch = &config.channel;
    let channel_values = [
        real(ch.path_loss_exponent),
        real(ch.reference_loss_db),
        real(ch.shadowing_std_dev_db),
        real(ch.noise_figure_db),
        real(ch.thermal_noise_dbm_per_rb),
        real(ch.min_distance_m),
        config.cqi_table_file.clone().unwrap_or_default(),
    ];
    for (key, value) in super::parse::CHANNEL_KEYS.iter().zip(&channel_values) {
        line(&mut out, key, value);
    }

    for node in &config.nodes {
        let flows: Vec<&FlowConfig> = config.flows.iter().filter(|f| f.source_node == node.name).collect();
        for param in NodeParam::ALL {
            if !param.applies_to(node.role) {
                continue;
            }
            if let Some(value) = node_value(config, node, param, flows.len()) {
                line(&mut out, &format!("{net}.{}.{}", node.name, param.suffix()), &value);
            }
        }
        for flow in flows {
            for param in AppParam::ALL {
                let value = match param {
                    AppParam::DestAddress => flow.dest_address.clone(),
                    AppParam::PacketBytes => flow.packet_bytes.to_string(),
                    AppParam::PeriodTtis => flow.period_ttis.to_string(),
                    AppParam::StartTti => flow.start_tti.to_string(),
                    AppParam::Transport => flow.transport.as_str().to_string(),
                };
                let key = format!("{net}.{}.udpApp[{}].{}", node.name, flow.app_index, param.name());
                line(&mut out, &key, &value);
            }
        }
    }

    if !config.multicast_groups.is_empty() {
        out.push_str("\n[multicast]\n");
        for group in &config.multicast_groups {
            line(&mut out, &group.address, &group.member_pattern);
        }
    }
    out
}

fn node_value(config: &ScenarioConfig, node: &NodeConfig, param: NodeParam, apps: usize) -> Option<String> {
    let ms = &config.mode_selection;
    Some(match param {
        NodeParam::D2dCapable => node.d2d_capable.to_string(),
        NodeParam::InitialX => real(node.position.x),
        NodeParam::InitialY => real(node.position.y),
        NodeParam::NumUdpApps => apps.to_string(),
        NodeParam::PeerAddresses => node.d2d_peer_addresses.join(" "),
        NodeParam::UeTxPower => real(node.ue_tx_power_dbm),
        NodeParam::D2dTxPower => real(node.d2d_tx_power_dbm),
        NodeParam::EnbTxPower => real(node.enb_tx_power_dbm),
        NodeParam::EnableD2dCqiReporting => node.enable_d2d_cqi_reporting.to_string(),
        NodeParam::UsePreconfiguredTxParams => node.use_preconfigured_tx_params.to_string(),
        NodeParam::D2dCqi => node.d2d_cqi?.to_string(),
        NodeParam::AmcMode => config.amc_mode.clone(),
        NodeParam::ModeSelection => ms.enabled.to_string(),
        NodeParam::ModeSelectionType => ms.policy_name.clone(),
        NodeParam::ModeSelectionPeriod => ms.period_ttis.to_string(),
        NodeParam::ModeSwitchAt => ms.scripted_switch?.at_tti.to_string(),
        NodeParam::ModeSwitchTo => ms.scripted_switch?.to.as_str().to_string(),
    })
}

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn line(out: &mut String, key: &str, value: &str) {
    let _ = writeln!(out, "{key} = \"{value}\"");
}
