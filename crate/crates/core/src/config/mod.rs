//! Scenario files.
//!
//! A scenario is a small INI dialect modelled on `omnetpp.ini`. Node
//! parameters are addressed by full parameter paths of the form
//! `<network>.<node>.<submodule path>.<parameter>`, and a left-hand side may
//! use the wildcards described in [`pattern`]. Global settings live under the
//! reserved `network.`, `sim.` and `channel.` prefixes, and multicast groups
//! under a `[multicast]` section. See `docs/scenario-format.md` for the full
//! grammar and the list of parameters.

mod canonical;
mod parse;
pub mod pattern;
mod validate;

use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::channel::ChannelParams;
use crate::types::{Mode, Position, Role};

pub use canonical::to_canonical;
pub use parse::parse_scenario;
pub use pattern::{resolve_pattern, Pattern};
pub use validate::validate;

pub const DEFAULT_NETWORK_NAME: &str = "net";
pub const DEFAULT_POLICY_NAME: &str = "D2DModeSelectionBestCqi";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("{}unresolved node reference `{reference}`", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    UnresolvedNodeReference { line: Option<usize>, reference: String },
    #[error("{}malformed pattern `{pattern}`: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    MalformedPattern {
        line: Option<usize>,
        pattern: String,
        reason: String,
    },
    #[error("invalid scenario:{}", diagnostics.iter().map(|d| format!("\n  {d}")).collect::<String>())]
    ConstraintViolation { diagnostics: Vec<Diagnostic> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    ConstraintViolation,
    UnresolvedNodeReference,
}

/// One broken invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub key: String,
    pub node: Option<String>,
    pub message: String,
    /// The name that failed to resolve, for `UnresolvedNodeReference`.
    pub reference: Option<String>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Some(node) => write!(f, "{} ({}): {}", self.key, node, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

/// Runs [`validate`] and turns the first unresolved reference, or else the
/// full list of violations, into an error.
pub fn check(config: &ScenarioConfig) -> Result<(), ConfigError> {
    let diagnostics = validate(config);
    if let Some(d) = diagnostics
        .iter()
        .find(|d| d.kind == DiagnosticKind::UnresolvedNodeReference)
    {
        return Err(ConfigError::UnresolvedNodeReference {
            line: None,
            reference: d.reference.clone().unwrap_or_else(|| d.to_string()),
        });
    }
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::ConstraintViolation { diagnostics })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub tti_count: u64,
    pub seed: u64,
    pub num_rbs: u16,
    pub rb_capacity_re: u32,
    pub max_harq_retx: u32,
    /// Let SL grants reuse UL resource blocks instead of sharing one pool.
    pub sidelink_reuse: bool,
    /// Upper bound of the random start offset drawn per flow.
    pub traffic_jitter_ttis: u64,
    pub cqi_report_period: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            tti_count: 1000,
            seed: 1,
            num_rbs: 50,
            rb_capacity_re: 168,
            max_harq_retx: 3,
            sidelink_reuse: false,
            traffic_jitter_ttis: 0,
            cqi_report_period: 1,
        }
    }
}

/// A one-shot switch of every peered pair, issued by the eNB at `at_tti`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScriptedSwitch {
    pub at_tti: u64,
    pub to: Mode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSelectionConfig {
    pub enabled: bool,
    pub policy_name: String,
    pub period_ttis: u64,
    pub scripted_switch: Option<ScriptedSwitch>,
}

impl Default for ModeSelectionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            policy_name: DEFAULT_POLICY_NAME.to_string(),
            period_ttis: 100,
            scripted_switch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub name: String,
    pub role: Role,
    pub position: Position,
    pub d2d_capable: bool,
    pub d2d_peer_addresses: Vec<String>,
    pub ue_tx_power_dbm: f64,
    pub d2d_tx_power_dbm: f64,
    pub enb_tx_power_dbm: f64,
    /// On a UE: report SL CQI for its peers. On the eNB: cell-wide gate.
    pub enable_d2d_cqi_reporting: bool,
    pub use_preconfigured_tx_params: bool,
    pub d2d_cqi: Option<u8>,
}

impl NodeConfig {
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        Self {
            name: name.into(),
            role,
            position: Position::default(),
            d2d_capable: false,
            d2d_peer_addresses: Vec::new(),
            ue_tx_power_dbm: 26.0,
            d2d_tx_power_dbm: 20.0,
            enb_tx_power_dbm: 46.0,
            enable_d2d_cqi_reporting: true,
            use_preconfigured_tx_params: false,
            d2d_cqi: None,
        }
    }

    pub fn is_enb(&self) -> bool {
        self.role == Role::ENodeB
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Transport {
    #[default]
    OneWay,
    /// Every delivered packet triggers a same-size reply from the destination.
    RequestResponse,
}

impl Transport {
    pub fn as_str(self) -> &'static str {
        match self {
            Transport::OneWay => "oneWay",
            Transport::RequestResponse => "requestResponse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oneWay" => Some(Transport::OneWay),
            "requestResponse" => Some(Transport::RequestResponse),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub flow_id: u32,
    pub source_node: String,
    /// Position of the generating application on its node (`udpApp[i]`).
    pub app_index: u32,
    pub dest_address: String,
    pub packet_bytes: u32,
    pub period_ttis: u64,
    pub start_tti: u64,
    pub transport: Transport,
}

impl FlowConfig {
    /// The destination as a multicast literal, if it is one.
    pub fn multicast_address(&self) -> Option<Ipv4Addr> {
        self.dest_address.parse().ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MulticastGroup {
    pub address: String,
    pub member_pattern: String,
}

impl MulticastGroup {
    pub fn ip(&self) -> Option<Ipv4Addr> {
        self.address.parse().ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub network_name: String,
    pub sim: SimParams,
    pub nodes: Vec<NodeConfig>,
    pub flows: Vec<FlowConfig>,
    pub channel: ChannelParams,
    /// CQI table file; `None` selects the built-in table.
    pub cqi_table_file: Option<String>,
    /// `nic.mac.amcMode` of the eNB; `"D2D"` enables sidelink-aware AMC.
    pub amc_mode: String,
    pub mode_selection: ModeSelectionConfig,
    pub multicast_groups: Vec<MulticastGroup>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            network_name: DEFAULT_NETWORK_NAME.to_string(),
            sim: SimParams::default(),
            nodes: Vec::new(),
            flows: Vec::new(),
            channel: ChannelParams::default(),
            cqi_table_file: None,
            amc_mode: "AUTO".to_string(),
            mode_selection: ModeSelectionConfig::default(),
            multicast_groups: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn node(&self, name: &str) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut NodeConfig> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }

    pub fn enb(&self) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.is_enb())
    }

    pub fn node_names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    pub fn group(&self, address: &str) -> Option<&MulticastGroup> {
        self.multicast_groups.iter().find(|g| g.address == address)
    }

    /// UE members of a multicast group, in node declaration order. The eNB is
    /// never a member even if the pattern matches it.
    pub fn group_members(&self, group: &MulticastGroup) -> Vec<&str> {
        let Ok(pattern) = Pattern::parse(&group.member_pattern) else {
            return Vec::new();
        };
        self.nodes
            .iter()
            .filter(|n| n.role == Role::Ue && pattern.matches(&n.name))
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn amc_d2d_enabled(&self) -> bool {
        self.amc_mode == "D2D"
    }

    /// Whether SL CQI reports are produced for peers of `sender`: both the
    /// UE's own flag and the eNB's cell-wide flag must be on.
    pub fn sl_reporting_enabled(&self, sender: &NodeConfig) -> bool {
        sender.enable_d2d_cqi_reporting && self.enb().map(|e| e.enable_d2d_cqi_reporting).unwrap_or(false)
    }
}
