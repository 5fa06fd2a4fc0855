//! Named scalar results with tolerances, serialized as JSON and CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(default)]
    pub config_hash: String,
    pub entries: Vec<ReportEntry>,
}

/// Ensemble mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl DiagnosticsReport {
    pub fn push(&mut self, name: &str, value: f64) {
        self.entries.push(ReportEntry { name: name.into(), value, stderr: None, tolerance: None, passed: None });
    }

    /// Entry that passes when `value ≤ tolerance`.
    pub fn push_upper(&mut self, name: &str, value: f64, tolerance: f64) {
        self.entries.push(ReportEntry {
            name: name.into(),
            value,
            stderr: None,
            tolerance: Some(tolerance),
            passed: Some(value <= tolerance),
        });
    }

    /// Entry that passes when `value ≥ tolerance`.
    pub fn push_lower(&mut self, name: &str, value: f64, tolerance: f64) {
        self.entries.push(ReportEntry {
            name: name.into(),
            value,
            stderr: None,
            tolerance: Some(tolerance),
            passed: Some(value >= tolerance),
        });
    }

    /// Ensemble entry judged on `mean + 2·stderr ≤ tolerance`.
    pub fn push_ensemble_upper(&mut self, name: &str, values: &[f64], tolerance: f64) {
        let (mean, se) = mean_stderr(values);
        self.entries.push(ReportEntry {
            name: name.into(),
            value: mean,
            stderr: Some(se),
            tolerance: Some(tolerance),
            passed: Some(mean + 2.0 * se <= tolerance),
        });
    }

    pub fn get(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|e| e.value)
    }

    pub fn extend(&mut self, prefix: &str, other: &DiagnosticsReport) {
        for e in &other.entries {
            self.entries.push(ReportEntry { name: format!("{prefix}{}", e.name), ..e.clone() });
        }
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed != Some(false))
    }

    pub fn failures(&self) -> Vec<&ReportEntry> {
        self.entries.iter().filter(|e| e.passed == Some(false)).collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.value.is_finite()) {
            Some(e) => Err(Error::Format(format!("diagnostic {} is not finite: {}", e.name, e.value))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    /// `# config_hash=<hash>` then `name,value,stderr,tolerance,passed`;
    /// absent fields are empty.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "name,value,stderr,tolerance,passed")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.entries {
            let passed = e.passed.map(|p| p.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", e.name, e.value, opt(e.stderr), opt(e.tolerance), passed)?;
        }
        Ok(())
    }
}
