mod common;

use std::fs;
use std::path::Path;

use d2dsim::cli::{run_cli, sweep_cqi_range, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use d2dsim::Error;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("d2dsim").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn single_run_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("fig4.ini");
    let (code, out, err) = cli(&[
        "--scenario",
        path_str(&scenario),
        "--seed",
        "42",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("seed 42"), "{out}");
    let metrics = dir.path().join("metrics.csv");
    assert!(metrics.exists());
    assert!(!csv_rows(&metrics).is_empty());
}

#[test]
fn missing_scenario_names_the_path() {
    let (code, _, err) = cli(&["--scenario", "/nonexistent/nowhere.ini"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("/nonexistent/nowhere.ini"), "{err}");
}

#[test]
fn malformed_scenario_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ini");
    fs::write(&bad, "network.enb = eNodeB\nnetwork.ues = a\n*.a.nic.bogusKey = 1\n").unwrap();
    let (code, _, err) = cli(&["--scenario", path_str(&bad), "--out", path_str(dir.path())]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn bad_flag_is_a_usage_error() {
    let (code, _, err) = cli(&["--scenario", "x.ini", "--sweep", "sideways"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(!err.is_empty());
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let scenario = common::scenario_path("fig4.ini");
    let (code, _, err) = cli(&[
        "--scenario",
        path_str(&scenario),
        "--ttis",
        "10",
        "--out",
        path_str(&blocker.join("sub")),
    ]);
    assert_eq!(code, EXIT_RUNTIME, "{err}");
}

#[test]
fn cqi_range_sweep_has_one_row_per_cqi() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("fig6.ini");
    let (code, _, err) = cli(&[
        "--sweep",
        "cqi-range",
        "--scenario",
        path_str(&scenario),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rows = csv_rows(&dir.path().join("sweep_cqi_range.csv"));
    let cqis: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(cqis, ["3", "7", "11", "15"]);
}

#[test]
fn sweep_is_monotone_in_cqi() {
    let config = common::scenario("fig6.ini");
    let rows = sweep_cqi_range(&config, &[3, 7]).unwrap();
    assert!(rows[0].max_decode_distance_m >= rows[1].max_decode_distance_m);
    assert!(rows[0].rbs_per_packet >= rows[1].rbs_per_packet);
    let single = sweep_cqi_range(&config, &[15]).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].cqi, 15);
}

#[test]
fn sweep_rbs_match_the_transport_block_table() {
    let config = common::scenario("fig6.ini");
    let table = d2dsim::channel::CqiTable::default();
    for row in sweep_cqi_range(&config, &[1, 4, 9, 15]).unwrap() {
        let per_rb = (f64::from(config.sim.rb_capacity_re) * table.efficiency(row.cqi).unwrap()).floor() as u64;
        assert_eq!(u64::from(row.rbs_per_packet), row.packet_bits.div_ceil(per_rb));
    }
}

#[test]
fn sweep_refuses_shadowing() {
    let mut config = common::scenario("fig6.ini");
    config.channel.shadowing_std_dev_db = 3.0;
    assert!(matches!(
        sweep_cqi_range(&config, &[7]),
        Err(Error::SweepRequiresDeterministicChannel)
    ));
}

#[test]
fn sweep_refuses_shadowing_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("shadowing.ini");
    let (code, _, err) = cli(&[
        "--sweep",
        "cqi-range",
        "--scenario",
        path_str(&scenario),
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("shadowing"), "{err}");
}

#[test]
fn mode_comparison_pairs_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::scenario_path("fig4.ini");
    let (code, _, err) = cli(&[
        "--sweep",
        "mode-comparison",
        "--scenario",
        path_str(&scenario),
        "--seed",
        "9",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let rows = csv_rows(&dir.path().join("mode_comparison.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((&rows[0][0], &rows[1][0]), ("DM", "IM"));
    assert_eq!((&rows[0][1], &rows[1][1]), ("9", "9"));
    assert!(dir.path().join("dm_metrics.csv").exists());
    assert!(dir.path().join("im_metrics.csv").exists());
}

#[test]
fn reruns_write_identical_files() {
    let scenario = common::scenario_path("mixed.ini");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let (code, _, err) = cli(&[
            "--scenario",
            path_str(&scenario),
            "--ttis",
            "2000",
            "--trace",
            "--ledger-dump",
            "--out",
            path_str(dir.path()),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 4);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}
