//! Run reports: a JSON document and a plain-text rendering with the same fields.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Pass/fail outcome tied to a numbered acceptance criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub criterion: u8,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub n_items: usize,
    pub n_failed: usize,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteRow {
    pub label: String,
    pub expected: [f64; 2],
    pub measured: [f64; 2],
    pub relative_error: f64,
    pub expected_power: u32,
    pub measured_power: f64,
    pub onset: f64,
}

/// One chord of the line-integral table; `None` where a value is unavailable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub slice: usize,
    pub i: usize,
    pub j: usize,
    pub extracted: Option<f64>,
    pub oracle: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub problem: u8,
    pub seed: u64,
    pub stages: Vec<StageSummary>,
    pub asymptotes: Vec<AsymptoteRow>,
    pub lines: Vec<LineRow>,
    pub errors: BTreeMap<String, f64>,
    pub flags: Vec<Flag>,
    pub notes: Vec<String>,
    pub wall_times: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: &str, problem: u8, seed: u64) -> RunReport {
        RunReport {
            command: command.into(),
            problem,
            seed,
            ..Default::default()
        }
    }

    pub fn flag(&mut self, name: &str, criterion: u8, passed: bool, detail: impl Into<String>) {
        self.flags.push(Flag {
            name: name.into(),
            criterion,
            passed,
            detail: detail.into(),
        });
    }

    pub fn find_flag(&self, name: &str) -> Option<&Flag> {
        self.flags.iter().find(|f| f.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.flags.iter().all(|f| f.passed)
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Appends another report's sections; the command, problem and seed stay.
    pub fn merge(&mut self, other: RunReport) {
        self.stages.extend(other.stages);
        self.asymptotes.extend(other.asymptotes);
        self.lines.extend(other.lines);
        self.errors.extend(other.errors);
        self.flags.extend(other.flags);
        self.notes.extend(other.notes);
        self.wall_times.extend(other.wall_times);
    }

    /// Copy with wall-clock entries removed, for reproducibility comparisons.
    pub fn without_wall_times(&self) -> RunReport {
        RunReport {
            wall_times: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<RunReport> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "problem: IP{}", self.problem);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "\n[flags]");
        for f in &self.flags {
            let _ = writeln!(
                s,
                "{} {} (criterion {}): {}",
                if f.passed { "PASS" } else { "FAIL" },
                f.name,
                f.criterion,
                f.detail
            );
        }
        let _ = writeln!(s, "\n[stages]");
        for st in &self.stages {
            let _ = writeln!(
                s,
                "{}: {} items, {} failed",
                st.stage, st.n_items, st.n_failed
            );
            for (k, v) in &st.residuals {
                let _ = writeln!(s, "  {k} = {v:.6e}");
            }
        }
        let _ = writeln!(s, "\n[errors]");
        for (k, v) in &self.errors {
            let _ = writeln!(s, "{k} = {v:.6e}");
        }
        let _ = writeln!(s, "\n[asymptotes]");
        for a in &self.asymptotes {
            let _ = writeln!(
                s,
                "{}: expected {:.6e}{:+.6e}i measured {:.6e}{:+.6e}i rel.err {:.3e} power {} vs {:.3} onset {}",
                a.label,
                a.expected[0],
                a.expected[1],
                a.measured[0],
                a.measured[1],
                a.relative_error,
                a.expected_power,
                a.measured_power,
                a.onset
            );
        }
        let _ = writeln!(s, "\n[lines] slice i j extracted oracle status");
        for l in &self.lines {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                l.slice,
                l.i,
                l.j,
                opt(l.extracted),
                opt(l.oracle),
                l.status
            );
        }
        let _ = writeln!(s, "\n[notes]");
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        let _ = writeln!(s, "\n[wall_times]");
        for (k, v) in &self.wall_times {
            let _ = writeln!(s, "{k} = {v:.3} s");
        }
        s
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_text() {
        let mut r = RunReport::new("test", 1, 3);
        r.flag("volume_error", 8, true, "0.1 <= 0.15");
        r.lines.push(LineRow {
            slice: 0,
            i: 1,
            j: 2,
            extracted: None,
            oracle: Some(0.5),
            status: "ok".into(),
        });
        r.errors.insert("volume_rel_l2".into(), 0.1);
        r.wall_times.insert("total".into(), 1.5);
        let back = RunReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let t = r.to_text();
        assert!(t.contains("PASS volume_error (criterion 8)"));
        assert!(t.contains("0 1 2 - 5.000000e-1 ok"));
        assert!(r.without_wall_times().wall_times.is_empty());
    }
}
