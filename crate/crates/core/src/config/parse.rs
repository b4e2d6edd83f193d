use std::collections::HashMap;

use super::pattern::Pattern;
use super::{
    check, ConfigError, FlowConfig, ModeSelectionConfig, MulticastGroup, NodeConfig, ScenarioConfig, ScriptedSwitch,
    Transport,
};
use crate::types::{Mode, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    General,
    Multicast,
}

#[derive(Clone, Debug)]
struct Assignment {
    line: usize,
    section: Section,
    lhs: String,
    value: String,
}

/// Per-node parameters, addressed as `<net>.<node>.<suffix>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum NodeParam {
    D2dCapable,
    InitialX,
    InitialY,
    NumUdpApps,
    PeerAddresses,
    UeTxPower,
    D2dTxPower,
    EnbTxPower,
    EnableD2dCqiReporting,
    UsePreconfiguredTxParams,
    D2dCqi,
    AmcMode,
    ModeSelection,
    ModeSelectionType,
    ModeSelectionPeriod,
    ModeSwitchAt,
    ModeSwitchTo,
}

impl NodeParam {
    pub(super) const ALL: [NodeParam; 17] = [
        NodeParam::D2dCapable,
        NodeParam::InitialX,
        NodeParam::InitialY,
        NodeParam::NumUdpApps,
        NodeParam::PeerAddresses,
        NodeParam::UeTxPower,
        NodeParam::D2dTxPower,
        NodeParam::EnbTxPower,
        NodeParam::EnableD2dCqiReporting,
        NodeParam::UsePreconfiguredTxParams,
        NodeParam::D2dCqi,
        NodeParam::AmcMode,
        NodeParam::ModeSelection,
        NodeParam::ModeSelectionType,
        NodeParam::ModeSelectionPeriod,
        NodeParam::ModeSwitchAt,
        NodeParam::ModeSwitchTo,
    ];

    pub(super) fn suffix(self) -> &'static str {
        match self {
            NodeParam::D2dCapable => "d2dCapable",
            NodeParam::InitialX => "mobility.initialX",
            NodeParam::InitialY => "mobility.initialY",
            NodeParam::NumUdpApps => "numUdpApps",
            NodeParam::PeerAddresses => "nic.d2dPeerAddresses",
            NodeParam::UeTxPower => "nic.phy.ueTxPower",
            NodeParam::D2dTxPower => "nic.phy.d2dTxPower",
            NodeParam::EnbTxPower => "nic.phy.eNodeBTxPower",
            NodeParam::EnableD2dCqiReporting => "nic.phy.enableD2DCqiReporting",
            NodeParam::UsePreconfiguredTxParams => "nic.phy.usePreconfiguredTxParams",
            NodeParam::D2dCqi => "nic.phy.d2dCqi",
            NodeParam::AmcMode => "nic.mac.amcMode",
            NodeParam::ModeSelection => "nic.d2dModeSelection",
            NodeParam::ModeSelectionType => "nic.d2dModeSelectionType",
            NodeParam::ModeSelectionPeriod => "nic.d2dModeSelectionPeriod",
            NodeParam::ModeSwitchAt => "nic.d2dModeSwitchAt",
            NodeParam::ModeSwitchTo => "nic.d2dModeSwitchTo",
        }
    }

    fn name(self) -> &'static str {
        self.suffix().rsplit('.').next().unwrap_or_default()
    }

    pub(super) fn applies_to(self, role: Role) -> bool {
        use NodeParam::*;
        match self {
            D2dCapable | InitialX | InitialY | NumUdpApps | EnableD2dCqiReporting => true,
            PeerAddresses | UeTxPower | D2dTxPower | UsePreconfiguredTxParams | D2dCqi => role == Role::Ue,
            EnbTxPower | AmcMode | ModeSelection | ModeSelectionType | ModeSelectionPeriod | ModeSwitchAt
            | ModeSwitchTo => role == Role::ENodeB,
        }
    }
}

/// Per-application parameters, addressed as `<net>.<node>.udpApp[<i>].<name>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum AppParam {
    DestAddress,
    PacketBytes,
    PeriodTtis,
    StartTti,
    Transport,
}

impl AppParam {
    pub(super) const ALL: [AppParam; 5] = [
        AppParam::DestAddress,
        AppParam::PacketBytes,
        AppParam::PeriodTtis,
        AppParam::StartTti,
        AppParam::Transport,
    ];

    pub(super) fn name(self) -> &'static str {
        match self {
            AppParam::DestAddress => "destAddress",
            AppParam::PacketBytes => "packetBytes",
            AppParam::PeriodTtis => "periodTtis",
            AppParam::StartTti => "startTti",
            AppParam::Transport => "transport",
        }
    }
}

pub(super) const SIM_KEYS: [&str; 8] = [
    "sim.ttiCount",
    "sim.seed",
    "sim.numRbs",
    "sim.rbCapacityRe",
    "sim.maxHarqRetx",
    "sim.sidelinkReuse",
    "sim.trafficJitterTtis",
    "sim.cqiReportPeriod",
];

pub(super) const CHANNEL_KEYS: [&str; 7] = [
    "channel.pathLossExponent",
    "channel.referenceLossDb",
    "channel.shadowingStdDevDb",
    "channel.noiseFigureDb",
    "channel.thermalNoiseDbmPerRb",
    "channel.minDistanceM",
    "channel.cqiTableFile",
];

#[derive(Clone, Copy, Debug)]
enum Slot {
    Node(usize, NodeParam),
    App(usize, u32, AppParam),
}

#[derive(Clone, Debug)]
struct AppDraft {
    dest_address: String,
    packet_bytes: u32,
    period_ttis: u64,
    start_tti: u64,
    transport: Transport,
}

impl Default for AppDraft {
    fn default() -> Self {
        Self {
            dest_address: String::new(),
            packet_bytes: 100,
            period_ttis: 10,
            start_tti: 0,
            transport: Transport::OneWay,
        }
    }
}

/// Parses and validates a scenario.
///
/// Parameter assignments are applied in file order, so the last line that
/// resolves to a given parameter wins.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let assignments = lex(text)?;
    let mut config = ScenarioConfig::default();

    let (general, multicast): (Vec<_>, Vec<_>) = assignments.into_iter().partition(|a| a.section == Section::General);

    // pass 1: network declaration
    let mut enb_names: Vec<String> = Vec::new();
    let mut ue_names: Vec<String> = Vec::new();
    let mut rest = Vec::new();
    for a in general {
        match a.lhs.as_str() {
            "network.name" => {
                if !is_plain_identifier(&a.value) || is_reserved_prefix(&a.value) {
                    return Err(syntax(a.line, format!("invalid network name `{}`", a.value)));
                }
                config.network_name = a.value.clone();
            }
            "network.enb" => enb_names = node_list(&a)?,
            "network.ues" => ue_names = node_list(&a)?,
            lhs if lhs.starts_with("network.") => {
                return Err(ConfigError::UnknownKey {
                    line: a.line,
                    key: a.lhs.clone(),
                })
            }
            _ => rest.push(a),
        }
    }
    config.nodes = enb_names
        .iter()
        .map(|n| NodeConfig::new(n.clone(), Role::ENodeB))
        .chain(ue_names.iter().map(|n| NodeConfig::new(n.clone(), Role::Ue)))
        .collect();

    // pass 2: application counts, which decide the udpApp[i] paths
    let node_slots: Vec<(String, Slot)> = config
        .nodes
        .iter()
        .enumerate()
        .flat_map(|(i, node)| {
            let net = config.network_name.clone();
            NodeParam::ALL
                .into_iter()
                .filter(move |p| p.applies_to(node.role))
                .map(move |p| (format!("{net}.{}.{}", node.name, p.suffix()), Slot::Node(i, p)))
        })
        .collect();
    let mut app_counts = vec![0u32; config.nodes.len()];
    let mut remaining = Vec::new();
    for a in rest {
        if last_segment(&a.lhs) == NodeParam::NumUdpApps.name() {
            let pattern = compile(&a)?;
            let mut hit = false;
            for (path, slot) in &node_slots {
                if let Slot::Node(i, NodeParam::NumUdpApps) = slot {
                    if pattern.matches(path) {
                        app_counts[*i] = parse_int(&a)?;
                        hit = true;
                    }
                }
            }
            if !hit {
                return Err(unresolved(&a));
            }
        } else {
            remaining.push(a);
        }
    }

    let mut slots = node_slots;
    for (i, node) in config.nodes.iter().enumerate() {
        for k in 0..app_counts[i] {
            for p in AppParam::ALL {
                slots.push((
                    format!("{}.{}.udpApp[{k}].{}", config.network_name, node.name, p.name()),
                    Slot::App(i, k, p),
                ));
            }
        }
    }
    let mut apps: HashMap<(usize, u32), AppDraft> = HashMap::new();
    let mut switch_at: Option<u64> = None;
    let mut switch_to = Mode::Im;

    // pass 3: everything else, in file order
    for a in remaining {
        if a.lhs.starts_with("sim.") {
            apply_sim(&mut config, &a)?;
            continue;
        }
        if a.lhs.starts_with("channel.") {
            apply_channel(&mut config, &a)?;
            continue;
        }
        let name = last_segment(&a.lhs);
        let known = NodeParam::ALL.iter().any(|p| p.name() == name) || AppParam::ALL.iter().any(|p| p.name() == name);
        if !known || !a.lhs.contains('.') {
            return Err(ConfigError::UnknownKey {
                line: a.line,
                key: a.lhs.clone(),
            });
        }
        let pattern = compile(&a)?;
        let mut hit = false;
        for (path, slot) in &slots {
            if last_segment(path) != name || !pattern.matches(path) {
                continue;
            }
            hit = true;
            match *slot {
                Slot::Node(i, p) => apply_node(&mut config, i, p, &a, &mut switch_at, &mut switch_to)?,
                Slot::App(i, k, p) => apply_app(apps.entry((i, k)).or_default(), p, &a)?,
            }
        }
        if !hit {
            return Err(unresolved(&a));
        }
    }

    config.mode_selection.scripted_switch = switch_at.map(|at_tti| ScriptedSwitch { at_tti, to: switch_to });

    let mut flow_id = 0;
    for (i, node) in config.nodes.iter().enumerate() {
        for k in 0..app_counts[i] {
            let draft = apps.remove(&(i, k)).unwrap_or_default();
            config.flows.push(FlowConfig {
                flow_id,
                source_node: node.name.clone(),
                app_index: k,
                dest_address: draft.dest_address,
                packet_bytes: draft.packet_bytes,
                period_ttis: draft.period_ttis,
                start_tti: draft.start_tti,
                transport: draft.transport,
            });
            flow_id += 1;
        }
    }

    for a in multicast {
        compile_value_pattern(&a)?;
        if a.lhs.contains('*') {
            return Err(syntax(
                a.line,
                format!("multicast address `{}` cannot be a pattern", a.lhs),
            ));
        }
        let group = MulticastGroup {
            address: a.lhs.clone(),
            member_pattern: a.value.clone(),
        };
        match config.multicast_groups.iter_mut().find(|g| g.address == a.lhs) {
            Some(existing) => *existing = group,
            None => config.multicast_groups.push(group),
        }
    }

    check(&config)?;
    Ok(config)
}

fn lex(text: &str) -> Result<Vec<Assignment>, ConfigError> {
    let mut out = Vec::new();
    let mut section = Section::General;
    let mut seen_multicast = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = strip_comment(raw).trim();
        if stripped.is_empty() {
            continue;
        }
        if stripped.starts_with('[') {
            if !stripped.ends_with(']') {
                return Err(syntax(line, format!("malformed section header `{stripped}`")));
            }
            match stripped[1..stripped.len() - 1].trim() {
                "general" => section = Section::General,
                "multicast" => {
                    if seen_multicast {
                        return Err(syntax(line, "only one [multicast] section is allowed".into()));
                    }
                    seen_multicast = true;
                    section = Section::Multicast;
                }
                other => return Err(syntax(line, format!("unknown section `[{other}]`"))),
            }
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return Err(syntax(line, "expected `key = value`".into()));
        };
        let lhs = stripped[..eq].trim();
        if lhs.is_empty() || lhs.contains(char::is_whitespace) || lhs.contains('"') {
            return Err(syntax(line, format!("invalid key `{lhs}`")));
        }
        let value = unquote(stripped[eq + 1..].trim()).ok_or_else(|| syntax(line, "unbalanced quotes".into()))?;
        out.push(Assignment {
            line,
            section,
            lhs: lhs.to_string(),
            value,
        });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(value: &str) -> Option<String> {
    if let Some(inner) = value.strip_prefix('"') {
        let inner = inner.strip_suffix('"')?;
        (!inner.contains('"')).then(|| inner.to_string())
    } else {
        (!value.contains('"')).then(|| value.to_string())
    }
}

fn syntax(line: usize, message: String) -> ConfigError {
    ConfigError::Syntax { line, message }
}

fn unresolved(a: &Assignment) -> ConfigError {
    ConfigError::UnresolvedNodeReference {
        line: Some(a.line),
        reference: a.lhs.clone(),
    }
}

fn last_segment(lhs: &str) -> &str {
    lhs.rsplit('.').next().unwrap_or(lhs)
}

fn compile(a: &Assignment) -> Result<Pattern, ConfigError> {
    Pattern::parse(&a.lhs).map_err(|e| with_line(e, a.line))
}

fn compile_value_pattern(a: &Assignment) -> Result<Pattern, ConfigError> {
    Pattern::parse(&a.value).map_err(|e| with_line(e, a.line))
}

fn with_line(err: ConfigError, line: usize) -> ConfigError {
    match err {
        ConfigError::MalformedPattern { pattern, reason, .. } => ConfigError::MalformedPattern {
            line: Some(line),
            pattern,
            reason,
        },
        other => other,
    }
}

fn is_plain_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn is_reserved_prefix(s: &str) -> bool {
    matches!(s, "network" | "sim" | "channel")
}

/// A node name is an identifier with an optional `[index]` suffix.
pub(super) fn is_valid_node_name(s: &str) -> bool {
    let (base, index) = match s.find('[') {
        Some(open) => (&s[..open], Some(&s[open..])),
        None => (s, None),
    };
    if !is_plain_identifier(base) || is_reserved_prefix(base) {
        return false;
    }
    match index {
        None => true,
        Some(idx) => idx.len() > 2 && idx.ends_with(']') && idx[1..idx.len() - 1].chars().all(|c| c.is_ascii_digit()),
    }
}

/// Expands `a b c[0..2]` into individual node names.
fn node_list(a: &Assignment) -> Result<Vec<String>, ConfigError> {
    let mut names = Vec::new();
    for token in a.value.split_whitespace() {
        if let Some((base, lo, hi)) = parse_range(token) {
            if lo > hi {
                return Err(syntax(a.line, format!("empty range `{token}`")));
            }
            names.extend((lo..=hi).map(|i| format!("{base}[{i}]")));
        } else if is_valid_node_name(token) {
            names.push(token.to_string());
        } else {
            return Err(syntax(a.line, format!("invalid node name `{token}`")));
        }
    }
    Ok(names)
}

fn parse_range(token: &str) -> Option<(&str, u32, u32)> {
    let open = token.find('[')?;
    let inner = token[open + 1..].strip_suffix(']')?;
    let (lo, hi) = inner.split_once("..")?;
    let base = &token[..open];
    is_plain_identifier(base).then_some(())?;
    Some((base, lo.parse().ok()?, hi.parse().ok()?))
}

fn parse_bool(a: &Assignment) -> Result<bool, ConfigError> {
    match a.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        v => Err(syntax(a.line, format!("`{}` expects true or false, got `{v}`", a.lhs))),
    }
}

fn parse_int<T: std::str::FromStr>(a: &Assignment) -> Result<T, ConfigError> {
    a.value
        .parse()
        .map_err(|_| syntax(a.line, format!("`{}` expects an integer, got `{}`", a.lhs, a.value)))
}

fn parse_real(a: &Assignment) -> Result<f64, ConfigError> {
    a.value
        .parse()
        .map_err(|_| syntax(a.line, format!("`{}` expects a number, got `{}`", a.lhs, a.value)))
}

fn apply_sim(config: &mut ScenarioConfig, a: &Assignment) -> Result<(), ConfigError> {
    let sim = &mut config.sim;
    match a.lhs.as_str() {
        "sim.ttiCount" => sim.tti_count = parse_int(a)?,
        "sim.seed" => sim.seed = parse_int(a)?,
        "sim.numRbs" => sim.num_rbs = parse_int(a)?,
        "sim.rbCapacityRe" => sim.rb_capacity_re = parse_int(a)?,
        "sim.maxHarqRetx" => sim.max_harq_retx = parse_int(a)?,
        "sim.sidelinkReuse" => sim.sidelink_reuse = parse_bool(a)?,
        "sim.trafficJitterTtis" => sim.traffic_jitter_ttis = parse_int(a)?,
        "sim.cqiReportPeriod" => sim.cqi_report_period = parse_int(a)?,
        _ => {
            return Err(ConfigError::UnknownKey {
                line: a.line,
                key: a.lhs.clone(),
            })
        }
    }
    Ok(())
}

fn apply_channel(config: &mut ScenarioConfig, a: &Assignment) -> Result<(), ConfigError> {
    let ch = &mut config.channel;
    match a.lhs.as_str() {
        "channel.pathLossExponent" => ch.path_loss_exponent = parse_real(a)?,
        "channel.referenceLossDb" => ch.reference_loss_db = parse_real(a)?,
        "channel.shadowingStdDevDb" => ch.shadowing_std_dev_db = parse_real(a)?,
        "channel.noiseFigureDb" => ch.noise_figure_db = parse_real(a)?,
        "channel.thermalNoiseDbmPerRb" => ch.thermal_noise_dbm_per_rb = parse_real(a)?,
        "channel.minDistanceM" => ch.min_distance_m = parse_real(a)?,
        "channel.cqiTableFile" => {
            config.cqi_table_file = (!a.value.is_empty()).then(|| a.value.clone());
        }
        _ => {
            return Err(ConfigError::UnknownKey {
                line: a.line,
                key: a.lhs.clone(),
            })
        }
    }
    Ok(())
}

fn apply_node(
    config: &mut ScenarioConfig,
    index: usize,
    param: NodeParam,
    a: &Assignment,
    switch_at: &mut Option<u64>,
    switch_to: &mut Mode,
) -> Result<(), ConfigError> {
    let ms: &mut ModeSelectionConfig = &mut config.mode_selection;
    let node = &mut config.nodes[index];
    match param {
        NodeParam::D2dCapable => node.d2d_capable = parse_bool(a)?,
        NodeParam::InitialX => node.position.x = parse_real(a)?,
        NodeParam::InitialY => node.position.y = parse_real(a)?,
        NodeParam::NumUdpApps => unreachable!("handled in pass 2"),
        NodeParam::PeerAddresses => {
            node.d2d_peer_addresses = a.value.split_whitespace().map(str::to_string).collect();
        }
        NodeParam::UeTxPower => node.ue_tx_power_dbm = parse_real(a)?,
        NodeParam::D2dTxPower => node.d2d_tx_power_dbm = parse_real(a)?,
        NodeParam::EnbTxPower => node.enb_tx_power_dbm = parse_real(a)?,
        NodeParam::EnableD2dCqiReporting => node.enable_d2d_cqi_reporting = parse_bool(a)?,
        NodeParam::UsePreconfiguredTxParams => node.use_preconfigured_tx_params = parse_bool(a)?,
        NodeParam::D2dCqi => node.d2d_cqi = Some(parse_int(a)?),
        NodeParam::AmcMode => config.amc_mode = a.value.clone(),
        NodeParam::ModeSelection => ms.enabled = parse_bool(a)?,
        NodeParam::ModeSelectionType => ms.policy_name = a.value.clone(),
        NodeParam::ModeSelectionPeriod => ms.period_ttis = parse_int(a)?,
        NodeParam::ModeSwitchAt => *switch_at = Some(parse_int(a)?),
        NodeParam::ModeSwitchTo => {
            *switch_to = Mode::parse(&a.value)
                .ok_or_else(|| syntax(a.line, format!("`{}` expects DM or IM, got `{}`", a.lhs, a.value)))?;
        }
    }
    Ok(())
}

fn apply_app(app: &mut AppDraft, param: AppParam, a: &Assignment) -> Result<(), ConfigError> {
    match param {
        AppParam::DestAddress => app.dest_address = a.value.clone(),
        AppParam::PacketBytes => app.packet_bytes = parse_int(a)?,
        AppParam::PeriodTtis => app.period_ttis = parse_int(a)?,
        AppParam::StartTti => app.start_tti = parse_int(a)?,
        AppParam::Transport => {
            app.transport = Transport::parse(&a.value).ok_or_else(|| {
                syntax(
                    a.line,
                    format!("`{}` expects oneWay or requestResponse, got `{}`", a.lhs, a.value),
                )
            })?;
        }
    }
    Ok(())
}
