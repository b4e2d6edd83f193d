mod common;

use d2dsim::config::parse_scenario;
use d2dsim::engine::{self, LossCause, RunOptions};
use d2dsim::mode_selection::{
    best_cqi_decide, BestCqiPolicy, ModeSelectionError, ModeSelectionPolicy, PairState, PolicyRegistry, TIE_BREAK_MODE,
};
use d2dsim::{Mode, NodeId};
use proptest::prelude::*;

#[test]
fn registry_resolves_best_cqi() {
    let policy = PolicyRegistry::default().create("D2DModeSelectionBestCqi").unwrap();
    assert_eq!(policy.name(), BestCqiPolicy::NAME);
}

#[test]
fn registry_rejects_unknown_name() {
    assert!(matches!(
        PolicyRegistry::default().create("Coin"),
        Err(ModeSelectionError::UnknownPolicy(n)) if n == "Coin"
    ));
}

struct AlwaysIm;

impl ModeSelectionPolicy for AlwaysIm {
    fn name(&self) -> &str {
        "AlwaysIm"
    }

    fn select(&mut self, _tti: u64, pairs: &[PairState]) -> Vec<(NodeId, NodeId, Mode)> {
        pairs.iter().map(|p| (p.sender, p.receiver, Mode::Im)).collect()
    }
}

#[test]
fn registry_accepts_new_policies() {
    let mut r = PolicyRegistry::default();
    r.register("AlwaysIm", || Box::new(AlwaysIm));
    assert_eq!(
        r.names().collect::<Vec<_>>(),
        vec!["AlwaysIm", "D2DModeSelectionBestCqi"]
    );
    assert_eq!(r.create("AlwaysIm").unwrap().name(), "AlwaysIm");
}

#[test]
fn unknown_policy_fails_before_the_first_tti() {
    let mut config = common::scenario("shadowing.ini");
    config.mode_selection.policy_name = "NoSuchPolicy".into();
    let err = engine::run(&config, RunOptions::default()).unwrap_err();
    assert!(err.is_config_error(), "{err}");
    assert!(err.to_string().contains("NoSuchPolicy"), "{err}");
}

#[test]
fn disabled_selection_keeps_initial_modes() {
    let mut config = common::scenario("shadowing.ini");
    config.mode_selection.enabled = false;
    let report = engine::run(&config, RunOptions::default()).unwrap();
    assert_eq!(report.summary.mode_switches, 0);
    assert!(report.mode_switches.is_empty());
    assert!(report.flows.iter().all(|f| f.direction == "D2D"));
}

#[test]
fn best_cqi_examples() {
    assert_eq!(best_cqi_decide(7, 10), Mode::Dm);
    assert_eq!(best_cqi_decide(9, 5), Mode::Im);
    assert_eq!(best_cqi_decide(7, 7), Mode::Dm);
    assert_eq!(TIE_BREAK_MODE, Mode::Dm);
}

/// Sender at 600 m from the eNB, receiver 1200 m from the sender: the
/// sidelink reports CQI 0, so nothing leaves the SL queue before the switch.
fn stranded_pair(flow_start: u64) -> String {
    format!(
        "network.enb = eNodeB
network.ues = tx rx
sim.ttiCount = 40
*.eNodeB.mobility.initialX = 0
*.tx.mobility.initialX = -600
*.rx.mobility.initialX = 600
**.d2dCapable = true
*.eNodeB.nic.mac.amcMode = \"D2D\"
*.eNodeB.nic.phy.enableD2DCqiReporting = true
*.tx.nic.phy.enableD2DCqiReporting = true
*.tx.nic.d2dPeerAddresses = \"rx\"
*.eNodeB.nic.d2dModeSwitchAt = 25
*.eNodeB.nic.d2dModeSwitchTo = \"IM\"
*.tx.numUdpApps = 1
*.tx.udpApp[0].destAddress = \"rx\"
*.tx.udpApp[0].packetBytes = 100
*.tx.udpApp[0].periodTtis = 10
*.tx.udpApp[0].startTti = {flow_start}
"
    )
}

#[test]
fn switch_flushes_the_three_queued_packets() {
    let config = parse_scenario(&stranded_pair(0)).unwrap();
    let report = engine::run(&config, RunOptions::default()).unwrap();
    assert_eq!(report.mode_switches.len(), 1);
    let sw = &report.mode_switches[0];
    assert_eq!((sw.tti, sw.old_mode.as_str(), sw.new_mode.as_str()), (26, "DM", "IM"));
    // packets generated at TTIs 0, 10 and 20
    assert_eq!(sw.flushed_packets, 3);
    assert_eq!(report.summary.mode_switch_losses, 3);
    let flow = &report.flows[0];
    assert_eq!(flow.lost_by(LossCause::ModeSwitch), 3);
    assert_eq!(flow.offered_packets, 4);
    assert!(flow.is_conserved());
}

#[test]
fn switch_with_empty_queues_loses_nothing() {
    let config = parse_scenario(&stranded_pair(30)).unwrap();
    let report = engine::run(&config, RunOptions::default()).unwrap();
    assert_eq!(report.mode_switches.len(), 1);
    assert_eq!(report.mode_switches[0].flushed_packets, 0);
    assert_eq!(report.summary.mode_switch_losses, 0);
}

proptest! {
    #[test]
    fn decision_is_shift_invariant(ul in 0u8..=15, sl in 0u8..=15, c in 0u8..=15) {
        prop_assume!(ul.max(sl) + c <= 15);
        prop_assert_eq!(best_cqi_decide(ul, sl), best_cqi_decide(ul + c, sl + c));
    }
}
