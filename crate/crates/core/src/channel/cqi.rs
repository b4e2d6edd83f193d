use std::cmp::Ordering;
use std::path::Path;

use super::{ChannelError, SinrReport};

pub const MAX_CQI: u8 = 15;

const BUILTIN_TABLE: &str = include_str!("../../data/cqi_table.txt");

/// Wideband CQI table: minimum SINR and spectral efficiency for CQI 1..=15.
///
/// CQI 0 is "out of range" and has no row.
#[derive(Clone, Debug, PartialEq)]
pub struct CqiTable {
    thresholds_db: [f64; 15],
    efficiency_bits_per_re: [f64; 15],
}

impl Default for CqiTable {
    fn default() -> Self {
        Self::parse(BUILTIN_TABLE).expect("built-in CQI table is well formed")
    }
}

impl CqiTable {
    pub fn new(thresholds_db: [f64; 15], efficiency_bits_per_re: [f64; 15]) -> Result<Self, ChannelError> {
        for i in 1..15 {
            if thresholds_db[i].partial_cmp(&thresholds_db[i - 1]) != Some(Ordering::Greater) {
                return Err(ChannelError::MalformedTable {
                    line: None,
                    message: format!("threshold for CQI {} is not above CQI {}", i + 1, i),
                });
            }
            if efficiency_bits_per_re[i].partial_cmp(&efficiency_bits_per_re[i - 1]) != Some(Ordering::Greater) {
                return Err(ChannelError::MalformedTable {
                    line: None,
                    message: format!("efficiency for CQI {} is not above CQI {}", i + 1, i),
                });
            }
        }
        if thresholds_db
            .iter()
            .chain(&efficiency_bits_per_re)
            .any(|v| !v.is_finite())
            || efficiency_bits_per_re[0] <= 0.0
        {
            return Err(ChannelError::MalformedTable {
                line: None,
                message: "values must be finite and efficiencies positive".into(),
            });
        }
        Ok(Self {
            thresholds_db,
            efficiency_bits_per_re,
        })
    }

    /// Parses the `cqi threshold_db efficiency_bits_per_re` format. Blank
    /// lines and `#` comments are ignored; exactly the rows 1..=15 must be
    /// present, in order.
    pub fn parse(text: &str) -> Result<Self, ChannelError> {
        let mut thresholds = [0.0; 15];
        let mut efficiencies = [0.0; 15];
        let mut rows = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| ChannelError::MalformedTable {
                line: Some(line_no),
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let cqi: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("invalid CQI `{}`", fields[0])))?;
            if cqi != rows + 1 {
                return Err(bad(format!("expected row for CQI {}, found {cqi}", rows + 1)));
            }
            thresholds[rows] = fields[1]
                .parse()
                .map_err(|_| bad(format!("invalid threshold `{}`", fields[1])))?;
            efficiencies[rows] = fields[2]
                .parse()
                .map_err(|_| bad(format!("invalid efficiency `{}`", fields[2])))?;
            rows += 1;
            if rows > 15 {
                return Err(bad("more than 15 rows".into()));
            }
        }
        if rows != 15 {
            return Err(ChannelError::MalformedTable {
                line: None,
                message: format!("expected 15 rows, found {rows}"),
            });
        }
        Self::new(thresholds, efficiencies)
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChannelError::MalformedTable {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    fn check(cqi: u8) -> Result<usize, ChannelError> {
        if (1..=MAX_CQI).contains(&cqi) {
            Ok(usize::from(cqi) - 1)
        } else {
            Err(ChannelError::InvalidCqi(cqi))
        }
    }

    pub fn threshold_db(&self, cqi: u8) -> Result<f64, ChannelError> {
        Ok(self.thresholds_db[Self::check(cqi)?])
    }

    pub fn efficiency(&self, cqi: u8) -> Result<f64, ChannelError> {
        Ok(self.efficiency_bits_per_re[Self::check(cqi)?])
    }

    pub fn thresholds_db(&self) -> &[f64; 15] {
        &self.thresholds_db
    }

    pub fn efficiencies(&self) -> &[f64; 15] {
        &self.efficiency_bits_per_re
    }

    /// Largest CQI whose threshold does not exceed `sinr_db`, 0 if none.
    pub fn cqi_for_sinr(&self, sinr_db: f64) -> u8 {
        // thresholds are ascending, so the count of satisfied rows is the CQI
        self.thresholds_db.partition_point(|&t| t <= sinr_db) as u8
    }
}

/// Step-function decoder: succeeds iff the mean SINR reaches the threshold
/// of the CQI the block was sent with. The boundary is inclusive.
pub fn decode(report: &SinrReport, cqi_used: u8, table: &CqiTable) -> Result<bool, ChannelError> {
    Ok(report.mean_sinr_db >= table.threshold_db(cqi_used)?)
}

pub fn sinr_to_cqi(report: &SinrReport, table: &CqiTable) -> u8 {
    table.cqi_for_sinr(report.mean_sinr_db)
}
