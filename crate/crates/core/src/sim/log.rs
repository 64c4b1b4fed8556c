//! Event log with a human and a machine rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t_ms: u64,
    /// Record class, e.g. `step`, `neighbor`, `link-down`, `warn`.
    pub kind: String,
    pub entity: String,
    /// Approach step label such as `A1.S2`.
    pub step: Option<String>,
    pub label: String,
    pub fields: Vec<(String, String)>,
    /// Hidden in the human rendering.
    pub verbose: bool,
}

impl LogRecord {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn human(&self) -> String {
        let mut s = format!("t={} {}", self.t_ms, self.entity);
        if let Some(step) = &self.step {
            let _ = write!(s, " {step}");
        }
        let _ = write!(s, " {}", self.label);
        for (k, v) in &self.fields {
            let _ = write!(s, " {k}={v}");
        }
        s
    }

    pub fn machine(&self) -> String {
        let mut s = format!("t={} kind={} entity={}", self.t_ms, self.kind, self.entity);
        if let Some(step) = &self.step {
            let _ = write!(s, " step={step}");
        }
        let _ = write!(s, " label={}", self.label);
        for (k, v) in &self.fields {
            let _ = write!(s, " {k}={v}");
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn steps(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(|r| r.step.is_some())
    }

    pub fn render(&self, machine: bool) -> String {
        let mut out = String::new();
        for r in &self.records {
            if machine {
                out.push_str(&r.machine());
                out.push('\n');
            } else if !r.verbose {
                out.push_str(&r.human());
                out.push('\n');
            }
        }
        out
    }
}
