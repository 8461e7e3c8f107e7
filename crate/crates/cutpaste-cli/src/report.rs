//! Schema-versioned experiment reports and their structural diff.

use cutpaste::Verdict;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// One verdict row. `anchor` names the identity or construction step being
/// checked (or "plumbing" for artifact-level rows); `inputs`/`outputs` are
/// free-form JSON so every number behind the verdict is preserved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub anchor: String,
    pub inputs: serde_json::Value,
    pub outputs: serde_json::Value,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    /// Wall-clock time; excluded from diffs so reports stay comparable.
    pub elapsed_ms: u128,
}

impl Report {
    pub fn new(experiment: &str, config: serde_json::Value) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config,
            checks: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        anchor: impl Into<String>,
        inputs: serde_json::Value,
        outputs: serde_json::Value,
        verdict: Verdict,
    ) {
        self.checks.push(Check {
            name: name.into(),
            anchor: anchor.into(),
            inputs,
            outputs,
            verdict,
        });
    }

    pub fn worst(&self) -> Verdict {
        let mut worst = Verdict::Pass;
        for c in &self.checks {
            match c.verdict {
                Verdict::NotApplicable => return Verdict::NotApplicable,
                Verdict::Fail => worst = Verdict::Fail,
                Verdict::Warn if worst == Verdict::Pass => worst = Verdict::Warn,
                _ => {}
            }
        }
        worst
    }
}

/// Structural diff of two reports: verdicts, check names/anchors and the
/// recorded inputs/outputs, ignoring timing. Returns human-readable lines;
/// empty means the reports agree.
pub fn report_diff(a: &Report, b: &Report) -> Result<Vec<String>, String> {
    if a.experiment != b.experiment {
        return Err(format!(
            "mismatched experiments: {} vs {}",
            a.experiment, b.experiment
        ));
    }
    let mut lines = Vec::new();
    if a.schema_version != b.schema_version {
        lines.push(format!(
            "schema_version: {} vs {}",
            a.schema_version, b.schema_version
        ));
    }
    if a.config != b.config {
        lines.push(format!("config: {} vs {}", a.config, b.config));
    }
    if a.checks.len() != b.checks.len() {
        lines.push(format!("check count: {} vs {}", a.checks.len(), b.checks.len()));
    }
    for (i, (ca, cb)) in a.checks.iter().zip(&b.checks).enumerate() {
        if ca.name != cb.name || ca.anchor != cb.anchor {
            lines.push(format!(
                "check {i}: identity {}/{} vs {}/{}",
                ca.name, ca.anchor, cb.name, cb.anchor
            ));
            continue;
        }
        if ca.verdict != cb.verdict {
            lines.push(format!(
                "check {i} ({}): verdict {:?} vs {:?}",
                ca.name, ca.verdict, cb.verdict
            ));
        }
        if ca.inputs != cb.inputs {
            lines.push(format!("check {i} ({}): inputs {} vs {}", ca.name, ca.inputs, cb.inputs));
        }
        if ca.outputs != cb.outputs {
            lines.push(format!(
                "check {i} ({}): outputs {} vs {}",
                ca.name, ca.outputs, cb.outputs
            ));
        }
    }
    Ok(lines)
}
