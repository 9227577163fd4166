use crate::bugs::spec::BugSpec;
use crate::error::{invalid, Result};
use crate::sim::{overall_ipc, simulate, MicroarchConfig, Workload};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeverityBin {
    High,
    Medium,
    Low,
    VeryLow,
}

impl SeverityBin {
    pub const ALL: [SeverityBin; 4] = [SeverityBin::High, SeverityBin::Medium, SeverityBin::Low, SeverityBin::VeryLow];

    /// Bins a mean relative IPC degradation: >= 10%, [5%, 10%), [1%, 5%), < 1%.
    pub fn from_degradation(d: f64) -> Self {
        if d >= 0.10 {
            SeverityBin::High
        } else if d >= 0.05 {
            SeverityBin::Medium
        } else if d >= 0.01 {
            SeverityBin::Low
        } else {
            SeverityBin::VeryLow
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SeverityBin::High => "High",
            SeverityBin::Medium => "Medium",
            SeverityBin::Low => "Low",
            SeverityBin::VeryLow => "VeryLow",
        }
    }
}

impl fmt::Display for SeverityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub name: String,
    pub degradation: f64,
    pub bin: SeverityBin,
}

/// Mean of `(ipc_free - ipc_bug) / ipc_free` over paired IPC measurements.
pub fn mean_degradation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("severity suite is empty"));
    }
    Ok(pairs.iter().map(|(free, bug)| (free - bug) / free).sum::<f64>() / pairs.len() as f64)
}

/// Simulates every suite entry with and without the bug.
pub fn severity_of(
    bug: &BugSpec,
    suite: &[(Workload, MicroarchConfig)],
    step_cycles: u64,
) -> Result<SeverityReport> {
    let pairs = suite
        .iter()
        .map(|(w, cfg)| {
            let free = overall_ipc(&simulate(w, cfg, None, step_cycles)?);
            let buggy = overall_ipc(&simulate(w, cfg, Some(bug), step_cycles)?);
            Ok((free, buggy))
        })
        .collect::<Result<Vec<_>>>()?;
    let degradation = mean_degradation(&pairs)?;
    Ok(SeverityReport { name: bug.name.clone(), degradation, bin: SeverityBin::from_degradation(degradation) })
}

pub fn severity_table(reports: &[SeverityReport]) -> String {
    let mut out = String::from("name,mean_degradation,bin\n");
    for r in reports {
        out.push_str(&format!("{},{:.9},{}\n", r.name, r.degradation, r.bin));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_boundaries() {
        assert_eq!(SeverityBin::from_degradation(0.12), SeverityBin::High);
        assert_eq!(SeverityBin::from_degradation(0.10), SeverityBin::High);
        assert_eq!(SeverityBin::from_degradation(0.07), SeverityBin::Medium);
        assert_eq!(SeverityBin::from_degradation(0.05), SeverityBin::Medium);
        assert_eq!(SeverityBin::from_degradation(0.03), SeverityBin::Low);
        assert_eq!(SeverityBin::from_degradation(0.0), SeverityBin::VeryLow);
        assert_eq!(SeverityBin::from_degradation(-0.02), SeverityBin::VeryLow);
    }

    #[test]
    fn empty_suite_is_error() {
        assert!(mean_degradation(&[]).is_err());
        assert!((mean_degradation(&[(2.0, 1.5), (1.0, 1.0)]).unwrap() - 0.125).abs() < 1e-15);
    }
}
