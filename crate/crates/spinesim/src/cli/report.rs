//! Report and trace serialization. JSON through serde, CSV assembled by
//! hand (four fixed columns, no quoting needed for the kinds we emit).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelSpec;
use crate::stats::{EstimateReport, TraceRow, Verdict};

/// Top-level JSON artifact of a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub model: ModelSpec,
    pub seed: u64,
    pub replicates: u64,
    pub items: Vec<EstimateReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Worst verdict over the items: pass only when everything passed.
    pub fn overall(&self) -> Verdict {
        let mut verdict = Verdict::Pass;
        for item in &self.items {
            match item.verdict {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Inconclusive => verdict = Verdict::Inconclusive,
                Verdict::Pass => {}
            }
        }
        verdict
    }
}

/// Process exit code for a verdict: 0 pass, 1 fail, 2 inconclusive.
pub fn exit_code(verdict: Verdict) -> u8 {
    match verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}

pub fn traces_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("replicate,kind,t,value\n");
    for row in rows {
        out.push_str(&format!("{},{},{},{}\n", row.replicate, row.kind, row.t, row.value));
    }
    out
}

/// One point of a deterministic extinction curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionRow {
    pub state: usize,
    pub t: f64,
    pub v: f64,
}

pub fn extinction_csv(rows: &[ExtinctionRow]) -> String {
    let mut out = String::from("state,t,v_t\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.state, row.t, row.v));
    }
    out
}
