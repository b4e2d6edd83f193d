//! Command-line runner and built-in sweeps.
//!
//! Exit codes: 0 on success, 1 when the invocation or the scenario is
//! invalid, 2 when a run fails or its output cannot be written.

mod sweep;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::config::{parse_scenario, ScenarioConfig};
use crate::engine::{self, RunOptions};
use crate::error::{Error, Result};

pub use sweep::{
    mode_comparison, sweep_cqi_range, write_cqi_range_csv, write_mode_comparison_csv, CqiRangeRow, ModeComparisonRow,
    CQI_RANGE_FILE, MODE_COMPARISON_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// CQIs swept by `--sweep cqi-range` unless `--cqis` is given.
pub const DEFAULT_SWEEP_CQIS: [u8; 4] = [3, 7, 11, 15];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Largest decode distance and RBs per packet for each CQI.
    CqiRange,
    /// The scenario forced to DM and to IM, with the same seed.
    ModeComparison,
}

#[derive(Debug, Parser)]
#[command(name = "d2dsim", version, about = "TTI-level LTE-A cell simulator with D2D sidelink")]
pub struct CliArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Replaces `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces `sim.ttiCount`.
    #[arg(long)]
    pub ttis: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write trace.csv with one row per event.
    #[arg(long)]
    pub trace: bool,
    /// Also write ledger.csv with every RB allocation of every TTI.
    #[arg(long)]
    pub ledger_dump: bool,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepKind>,
    /// CQIs for `--sweep cqi-range`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cqis: Option<Vec<u8>>,
}

/// Reads and parses a scenario file. A relative `channel.cqiTableFile` is
/// taken relative to the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_scenario(&text)?;
    if let Some(table) = &config.cqi_table_file {
        let p = Path::new(table);
        if p.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            config.cqi_table_file = Some(base.join(p).to_string_lossy().into_owned());
        }
    }
    Ok(config)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match CliArgs::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{text}");
            return code;
        }
    };

    let mut config = match load_scenario(&args.scenario) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", args.scenario.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        config.sim.seed = seed;
    }
    if let Some(ttis) = args.ttis {
        config.sim.tti_count = ttis;
    }

    match execute(&args, &config, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn write_file(path: PathBuf, bytes: Vec<u8>) -> Result<PathBuf> {
    fs::write(&path, bytes).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn execute(args: &CliArgs, config: &ScenarioConfig, stdout: &mut dyn Write) -> Result<()> {
    let options = RunOptions {
        forced_mode: None,
        trace: args.trace,
        ledger_dump: args.ledger_dump,
    };
    let written = match args.sweep {
        None => {
            let report = engine::run(config, options)?;
            let s = &report.summary;
            let _ = writeln!(
                stdout,
                "{} TTIs, seed {}: offered {}, delivered {}, lost {}, in flight {}",
                s.tti_count, s.seed, s.offered_packets, s.delivered_packets, s.lost_packets, s.in_flight_packets
            );
            report.write_to_dir(&args.out, "")?
        }
        Some(SweepKind::CqiRange) => {
            let cqis = args.cqis.clone().unwrap_or_else(|| DEFAULT_SWEEP_CQIS.to_vec());
            let rows = sweep_cqi_range(config, &cqis)?;
            for r in &rows {
                let _ = writeln!(
                    stdout,
                    "CQI {:>2}: max decode distance {:.2} m, {} RBs per packet",
                    r.cqi, r.max_decode_distance_m, r.rbs_per_packet
                );
            }
            create_out_dir(&args.out)?;
            let mut buf = Vec::new();
            write_cqi_range_csv(&rows, &mut buf)?;
            vec![write_file(args.out.join(CQI_RANGE_FILE), buf)?]
        }
        Some(SweepKind::ModeComparison) => {
            let (rows, reports) = mode_comparison(config, options)?;
            for r in &rows {
                let _ = writeln!(
                    stdout,
                    "{}: mean latency {} TTIs, {} RBs",
                    r.mode,
                    r.mean_latency_ttis.map_or("-".to_string(), |l| format!("{l:.3}")),
                    r.rbs_total
                );
            }
            create_out_dir(&args.out)?;
            let mut written = Vec::new();
            for (row, report) in rows.iter().zip(&reports) {
                let prefix = format!("{}_", row.mode.to_ascii_lowercase());
                written.extend(report.write_to_dir(&args.out, &prefix)?);
            }
            let mut buf = Vec::new();
            write_mode_comparison_csv(&rows, &mut buf)?;
            written.push(write_file(args.out.join(MODE_COMPARISON_FILE), buf)?);
            written
        }
    };
    for p in written {
        let _ = writeln!(stdout, "wrote {}", p.display());
    }
    Ok(())
}
