//! Structured verification reports.
//!
//! A report is a list of gated verdicts (statistic, tolerance, direction,
//! pass) plus ungated diagnostics. The JSON rendering written to disk is
//! deterministic — bit-stable across runs and worker counts — so wall-clock
//! timings are kept out of it; `to_json_timed` adds them for humans.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Comparison direction of a verdict: pass iff `statistic cmp tolerance`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub test: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub cmp: Cmp,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

impl TestVerdict {
    pub fn gate(test: impl Into<String>, statistic: f64, tolerance: f64, cmp: Cmp) -> Self {
        let pass = match cmp {
            Cmp::Le => statistic <= tolerance,
            Cmp::Ge => statistic >= tolerance,
        };
        Self {
            test: test.into(),
            statistic,
            tolerance,
            cmp,
            pass,
            runtime_ms: None,
        }
    }

    pub fn with_runtime(mut self, ms: u64) -> Self {
        self.runtime_ms = Some(ms);
        self
    }
}

/// An ungated reported numeric; never affects the exit code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: u32,
    pub scenario: String,
    pub version: String,
    pub master_seed: u64,
    pub verdicts: Vec<TestVerdict>,
    pub diagnostics: Vec<Diagnostic>,
}

impl TestReport {
    pub fn new(scenario: impl Into<String>, master_seed: u64) -> Self {
        Self {
            schema: REPORT_SCHEMA_VERSION,
            scenario: scenario.into(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            verdicts: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn push(&mut self, verdict: TestVerdict) {
        self.verdicts.push(verdict);
    }

    pub fn diagnostic(&mut self, name: impl Into<String>, value: f64) {
        self.diagnostics.push(Diagnostic {
            name: name.into(),
            value,
        });
    }

    pub fn merge(&mut self, other: TestReport) {
        self.verdicts.extend(other.verdicts);
        self.diagnostics.extend(other.diagnostics);
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Deterministic JSON: identical bytes for identical statistics,
    /// regardless of wall-clock or worker count (timings are stripped).
    pub fn to_json_deterministic(&self) -> String {
        let mut clone = self.clone();
        for v in &mut clone.verdicts {
            v.runtime_ms = None;
        }
        serde_json::to_string_pretty(&clone).expect("report serialization")
    }

    /// JSON including per-verdict runtimes.
    pub fn to_json_timed(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Fixed-width table for standard output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .verdicts
            .iter()
            .map(|v| v.test.len())
            .chain(self.diagnostics.iter().map(|d| d.name.len()))
            .max()
            .unwrap_or(4)
            .max(4);
        out.push_str(&format!(
            "scenario: {} (seed {})\n",
            self.scenario, self.master_seed
        ));
        out.push_str(&format!(
            "{:<width$}  {:>14}  {:>4}  {:>14}  {:>6}  {:>10}\n",
            "test", "statistic", "cmp", "tolerance", "pass", "runtime_ms"
        ));
        for v in &self.verdicts {
            out.push_str(&format!(
                "{:<width$}  {:>14.6e}  {:>4}  {:>14.6e}  {:>6}  {:>10}\n",
                v.test,
                v.statistic,
                match v.cmp {
                    Cmp::Le => "<=",
                    Cmp::Ge => ">=",
                },
                v.tolerance,
                if v.pass { "PASS" } else { "FAIL" },
                v.runtime_ms.map_or(String::new(), |m| m.to_string()),
            ));
        }
        if !self.diagnostics.is_empty() {
            out.push_str("diagnostics (ungated):\n");
            for d in &self.diagnostics {
                out.push_str(&format!("{:<width$}  {:>14.6e}\n", d.name, d.value));
            }
        }
        out
    }
}
