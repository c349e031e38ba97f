//! Per-run result rows and their CSV encoding.
//!
//! Column order (fixed):
//!
//! | column    | meaning                                                   |
//! |-----------|-----------------------------------------------------------|
//! | schema    | format version of the row, currently `1`                  |
//! | dataset   | dataset label (`AP`, `CAB`, ...)                          |
//! | n         | number of nodes                                           |
//! | alpha     | inter-hub discount                                        |
//! | norm_C    | collection and distribution norm                          |
//! | norm_H    | inter-hub norm                                            |
//! | gauge     | neighborhood shape                                        |
//! | tau, rho  | radius and dilation-price multipliers                     |
//! | method    | `F1` or `F2-BnC`                                          |
//! | time_s    | wall-clock seconds                                        |
//! | status    | `OPTIMAL`, `TIME_LIMIT`, `NODE_LIMIT`, `INFEASIBLE`, `ERROR` |
//! | objective | best objective found (empty if none)                      |
//! | gap       | relative gap at termination (empty if unknown)            |
//! | cuts      | lazy cuts added                                           |
//! | nodes     | tree nodes explored                                       |

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use hubloc::NormKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 16] = [
    "schema", "dataset", "n", "alpha", "norm_C", "norm_H", "gauge", "tau", "rho", "method", "time_s", "status",
    "objective", "gap", "cuts", "nodes",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "F1", alias = "f1")]
    F1,
    #[serde(rename = "F2-BnC", alias = "F2", alias = "f2")]
    F2,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::F1, Method::F2];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::F1 => "F1",
            Method::F2 => "F2-BnC",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Method::F1),
            "f2" | "f2-bnc" => Ok(Method::F2),
            other => Err(format!("unknown method '{other}' (expected f1 or f2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunStatus {
    #[serde(rename = "OPTIMAL")]
    Optimal,
    #[serde(rename = "TIME_LIMIT")]
    TimeLimit,
    #[serde(rename = "NODE_LIMIT")]
    NodeLimit,
    #[serde(rename = "INFEASIBLE")]
    Infeasible,
    #[serde(rename = "ERROR")]
    Error,
}

impl RunStatus {
    pub fn solved(self) -> bool {
        self == RunStatus::Optimal
    }
}

impl From<hubloc::TerminationStatus> for RunStatus {
    fn from(s: hubloc::TerminationStatus) -> Self {
        use hubloc::TerminationStatus as T;
        match s {
            T::Optimal => RunStatus::Optimal,
            T::TimeLimit => RunStatus::TimeLimit,
            T::NodeLimit => RunStatus::NodeLimit,
            T::Infeasible => RunStatus::Infeasible,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Optimal => "OPTIMAL",
            RunStatus::TimeLimit => "TIME_LIMIT",
            RunStatus::NodeLimit => "NODE_LIMIT",
            RunStatus::Infeasible => "INFEASIBLE",
            RunStatus::Error => "ERROR",
        })
    }
}

/// One solve of one scenario with one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub dataset: String,
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "norm_C")]
    pub norm_c: NormKind,
    #[serde(rename = "norm_H")]
    pub norm_h: NormKind,
    pub gauge: NormKind,
    pub tau: f64,
    pub rho: f64,
    pub method: Method,
    pub time_s: f64,
    pub status: RunStatus,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
    pub cuts: usize,
    pub nodes: usize,
}

impl RunRecord {
    /// Identity of the scenario, without the method.
    pub fn scenario_key(&self) -> String {
        format!(
            "{}/{}/a{}-{}-{}-g{}-t{}-r{}",
            self.dataset, self.n, self.alpha, self.norm_c, self.norm_h, self.gauge, self.tau, self.rho
        )
    }
}

pub fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(w)
}

pub fn write_records<W: Write>(w: W, records: &[RunRecord]) -> CliResult<()> {
    let mut wtr = writer(w);
    for r in records {
        wtr.serialize(r).map_err(CliError::data)?;
    }
    wtr.flush().map_err(CliError::data)
}

/// Reads records, rejecting unknown schema versions and missing columns.
pub fn read_records<R: Read>(r: R) -> CliResult<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rdr.headers().map_err(CliError::data)?.clone();
    let missing: Vec<&str> = COLUMNS.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!("results file lacks columns: {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<RunRecord>().enumerate() {
        let rec = row.map_err(|e| CliError::Data(format!("record {}: {e}", line + 1)))?;
        if rec.schema != SCHEMA_VERSION {
            return Err(CliError::Data(format!(
                "record {}: schema version {} (this build reads {SCHEMA_VERSION})",
                line + 1,
                rec.schema
            )));
        }
        out.push(rec);
    }
    Ok(out)
}
