#![allow(dead_code)]

use std::path::PathBuf;

use d2dsim::cli::load_scenario;
use d2dsim::config::ScenarioConfig;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn scenario(name: &str) -> ScenarioConfig {
    load_scenario(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Knobs for [`random_scenario`].
#[derive(Clone, Copy, Debug)]
pub struct RandomShape {
    pub ues: usize,
    pub ttis: u64,
    pub multicast: bool,
}

/// Builds scenario text with `shape.ues` UEs (named `ua[i]` and `ub[j]`) scattered over a 1.4 km square
/// and a random mix of D2D, uplink, downlink, request/response and (if
/// asked) multicast flows. The same `seed` always gives the same text.
pub fn random_scenario(seed: u64, shape: RandomShape) -> String {
    use rand::{Rng, SeedableRng};
    use std::fmt::Write;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = shape.ues;
    // names `ua[i]` then `ub[j]`
    let split = rng.random_range(1..n.max(2)).min(n);
    let names: Vec<String> = (0..n)
        .map(|i| {
            if i < split {
                format!("ua[{i}]")
            } else {
                format!("ub[{}]", i - split)
            }
        })
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, "network.enb = eNodeB");
    let _ = writeln!(s, "network.ues = {}", names.join(" "));
    let _ = writeln!(s, "sim.ttiCount = {}\nsim.seed = {}", shape.ttis, rng.random::<u32>());
    let _ = writeln!(s, "sim.numRbs = {}", [15, 25, 50][rng.random_range(0..3)]);
    let _ = writeln!(s, "sim.trafficJitterTtis = {}", rng.random_range(0..10));
    let _ = writeln!(s, "sim.sidelinkReuse = {}", rng.random_bool(0.3));
    let _ = writeln!(s, "channel.shadowingStdDevDb = {}", rng.random_range(0..7));
    let _ = writeln!(s, "**.d2dCapable = true\n*.eNodeB.nic.mac.amcMode = \"D2D\"");
    for name in &names {
        let _ = writeln!(s, "*.{name}.mobility.initialX = {:.1}", rng.random_range(-700.0..700.0));
        let _ = writeln!(s, "*.{name}.mobility.initialY = {:.1}", rng.random_range(-700.0..700.0));
        if rng.random_bool(0.3) {
            let _ = writeln!(s, "*.{name}.nic.phy.usePreconfiguredTxParams = true");
            let _ = writeln!(s, "*.{name}.nic.phy.d2dCqi = {}", rng.random_range(1..=15));
        }
    }
    if rng.random_bool(0.5) {
        let _ = writeln!(s, "*.eNodeB.nic.d2dModeSelection = true");
        let _ = writeln!(s, "*.eNodeB.nic.d2dModeSelectionPeriod = {}", rng.random_range(5..200));
    } else if rng.random_bool(0.5) {
        let _ = writeln!(
            s,
            "*.eNodeB.nic.d2dModeSwitchAt = {}",
            rng.random_range(0..shape.ttis.max(1))
        );
        let _ = writeln!(
            s,
            "*.eNodeB.nic.d2dModeSwitchTo = \"{}\"",
            ["IM", "DM"][rng.random_range(0..2)]
        );
    }

    let mut apps: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut enb_apps = Vec::new();
    let mut peers: Vec<Vec<usize>> = vec![Vec::new(); n];
    let app = |dst: &str, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut a = format!(
            "destAddress = \"{dst}\"\npacketBytes = {}\nperiodTtis = {}\nstartTti = {}",
            rng.random_range(20..1500),
            rng.random_range(1..30),
            rng.random_range(0..50)
        );
        if rng.random_bool(0.2) {
            a.push_str("\ntransport = \"requestResponse\"");
        }
        a
    };
    if n > 1 {
        for _ in 0..rng.random_range(1..=n) {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            if !peers[a].contains(&b) {
                peers[a].push(b);
            }
            let text = app(&names[b], &mut rng);
            apps[a].push(text);
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let a = rng.random_range(0..n);
        let text = app("eNodeB", &mut rng);
        apps[a].push(text);
    }
    for _ in 0..rng.random_range(0..3) {
        let b = rng.random_range(0..n);
        enb_apps.push(app(&names[b], &mut rng));
    }
    let mut groups = Vec::new();
    if shape.multicast {
        for (g, pattern) in ["ua[*]", "ub[*]", "u*[*]"].iter().enumerate() {
            if g > 0 && rng.random_bool(0.5) {
                continue;
            }
            let covered: Vec<usize> = (0..n)
                .filter(|&i| match g {
                    0 => i < split,
                    1 => i >= split,
                    _ => true,
                })
                .collect();
            if covered.is_empty() {
                continue;
            }
            let sender = covered[rng.random_range(0..covered.len())];
            let addr = format!("224.0.1.{g}");
            groups.push(format!("{addr} = {pattern}"));
            let _ = writeln!(s, "*.{}.nic.phy.usePreconfiguredTxParams = true", names[sender]);
            let _ = writeln!(s, "*.{}.nic.phy.d2dCqi = {}", names[sender], rng.random_range(1..=15));
            let text = app(&addr, &mut rng).replace("\ntransport = \"requestResponse\"", "");
            apps[sender].push(text);
        }
    }
    for (i, p) in peers.iter().enumerate() {
        if !p.is_empty() {
            let list: Vec<&str> = p.iter().map(|&j| names[j].as_str()).collect();
            let _ = writeln!(s, "*.{}.nic.d2dPeerAddresses = \"{}\"", names[i], list.join(" "));
        }
    }
    let mut emit = |node: &str, list: &[String]| {
        if list.is_empty() {
            return;
        }
        let _ = writeln!(s, "*.{node}.numUdpApps = {}", list.len());
        for (k, a) in list.iter().enumerate() {
            for line in a.lines() {
                let _ = writeln!(s, "*.{node}.udpApp[{k}].{line}");
            }
        }
    };
    for (name, list) in names.iter().zip(&apps) {
        emit(name, list);
    }
    emit("eNodeB", &enb_apps);
    if !groups.is_empty() {
        let _ = writeln!(s, "[multicast]\n{}", groups.join("\n"));
    }
    s
}
