//! Two-step Pearson counter selection per probe.

use crate::error::{invalid, Error, Result};
use crate::sim::trace::{is_flow_counter, is_symptom_counter, is_target_counter};
use crate::sim::CounterTrace;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

pub const STEP1_THRESHOLD: f64 = 0.7;
pub const STEP2_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    /// Either input had zero variance; `r` is then 0.
    pub degenerate: bool,
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(invalid("pearson needs at least two points"));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Ok(Correlation { r: 0.0, degenerate: true });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(Correlation { r: 0.0, degenerate: true });
    }
    Ok(Correlation { r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub probe_id: String,
    /// Kept counters in selection order (descending |r| with IPC).
    pub kept: Vec<String>,
    pub dropped_low_corr: Vec<String>,
    /// (kept counter, dropped counter) pairs.
    pub dropped_redundant: Vec<(String, String)>,
    /// Counters that restate the regression target and are never candidates.
    pub excluded: Vec<String>,
    /// Correlation with IPC for every candidate, in input order.
    pub r_ipc: Vec<(String, f64)>,
    pub degenerate: Vec<String>,
}

impl SelectionResult {
    pub fn r_of(&self, name: &str) -> Option<f64> {
        self.r_ipc.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    pub fn report(&self) -> String {
        let mut out = format!("# probe {}\ncounter,r_ipc,status,partner\n", self.probe_id);
        for (name, r) in &self.r_ipc {
            let (status, partner) = if self.kept.contains(name) {
                ("kept", "")
            } else if let Some((k, _)) = self.dropped_redundant.iter().find(|(_, d)| d == name) {
                ("redundant", k.as_str())
            } else {
                ("low_corr", "")
            };
            let _ = writeln!(out, "{name},{r:.6},{status},{partner}");
        }
        for name in &self.excluded {
            let _ = writeln!(out, "{name},,excluded,");
        }
        out
    }

    /// Keeps the best-correlated non-degenerate candidate when nothing
    /// cleared the correlation threshold, so the probe still has a feature.
    pub fn ensure_nonempty(&mut self) {
        if !self.kept.is_empty() {
            return;
        }
        let best = self
            .r_ipc
            .iter()
            .filter(|(n, _)| !self.degenerate.contains(n))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(n, _)| n.clone());
        if let Some(name) = best {
            self.dropped_low_corr.retain(|n| n != &name);
            self.kept.push(name);
        }
    }

    pub fn write_report(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.report())?)
    }
}

/// Selection over the concatenated steps of `traces` (one probe, many designs).
pub fn select_counters(probe_id: &str, traces: &[CounterTrace], t1: f64, t2: f64) -> Result<SelectionResult> {
    let first = traces.first().ok_or_else(|| invalid("no traces for counter selection"))?;
    if first.counter_names.is_empty() {
        return Err(invalid("traces carry no counters"));
    }
    if let Some(t) = traces.iter().find(|t| t.counter_names != first.counter_names) {
        return Err(invalid(format!("trace {}/{} has a different counter set", t.design, t.workload_id)));
    }
    let ipc: Vec<f64> = traces.iter().flat_map(|t| t.steps.iter().map(|s| s.ipc)).collect();
    let columns: Vec<Vec<f64>> = (0..first.counter_names.len())
        .map(|c| traces.iter().flat_map(|t| t.steps.iter().map(move |s| s.values[c])).collect())
        .collect();
    select_from_columns(probe_id, &first.counter_names, &columns, &ipc, t1, t2)
}

pub fn select_from_columns(
    probe_id: &str,
    names: &[String],
    columns: &[Vec<f64>],
    ipc: &[f64],
    t1: f64,
    t2: f64,
) -> Result<SelectionResult> {
    if names.is_empty() {
        return Err(invalid("no counters to select from"));
    }
    let mut res = SelectionResult {
        probe_id: probe_id.to_string(),
        kept: Vec::new(),
        dropped_low_corr: Vec::new(),
        dropped_redundant: Vec::new(),
        excluded: Vec::new(),
        r_ipc: Vec::new(),
        degenerate: Vec::new(),
    };
    let mut passing: Vec<(usize, f64)> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        if is_target_counter(name) || is_flow_counter(name) || is_symptom_counter(name) {
            res.excluded.push(name.clone());
            continue;
        }
        let c = pearson(&columns[i], ipc)?;
        if c.degenerate {
            res.degenerate.push(name.clone());
        }
        res.r_ipc.push((name.clone(), c.r));
        if c.r.abs() > t1 {
            passing.push((i, c.r.abs()));
        } else {
            res.dropped_low_corr.push(name.clone());
        }
    }
    passing.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal) {
        Ordering::Equal => names[a.0].cmp(&names[b.0]),
        o => o,
    });
    let mut kept_idx: Vec<usize> = Vec::new();
    for (i, _) in passing {
        let mut partner = None;
        for &k in &kept_idx {
            if pearson(&columns[i], &columns[k])?.r.abs() > t2 {
                partner = Some(k);
                break;
            }
        }
        match partner {
            Some(k) => res.dropped_redundant.push((names[k].clone(), names[i].clone())),
            None => kept_idx.push(i),
        }
    }
    res.kept = kept_idx.into_iter().map(|i| names[i].clone()).collect();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1., 2., 3.], &[2., 4., 6.]).unwrap().r - 1.0).abs() < 1e-15);
        assert!((pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap().r + 1.0).abs() < 1e-15);
        assert!((pearson(&[1., 2., 3.], &[1., 3., 2.]).unwrap().r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pearson_degenerate_and_mismatch() {
        let c = pearson(&[4., 4., 4.], &[1., 2., 3.]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.r, 0.0);
        assert!(pearson(&[1., 2.], &[1.]).is_err());
        assert!(pearson(&[1.], &[1.]).is_err());
    }

    #[test]
    fn target_counter_is_excluded() {
        let ipc = vec![1.0, 2.0, 3.0, 2.5];
        let names = vec!["committed_insts".to_string(), "l1d_misses".to_string()];
        let cols = vec![ipc.iter().map(|v| v * 1000.0).collect(), vec![3.0, 2.0, 1.0, 1.4]];
        let r = select_from_columns("p", &names, &cols, &ipc, 0.7, 0.95).unwrap();
        assert_eq!(r.excluded, vec!["committed_insts"]);
        assert_eq!(r.kept, vec!["l1d_misses"]);
    }

    #[test]
    fn ties_break_by_name() {
        let ipc = vec![1.0, 2.0, 3.0, 5.0];
        let names = vec!["zeta".to_string(), "alpha".to_string()];
        let cols = vec![ipc.clone(), ipc.clone()];
        let r = select_from_columns("p", &names, &cols, &ipc, 0.7, 0.95).unwrap();
        assert_eq!(r.kept, vec!["alpha"]);
        assert_eq!(r.dropped_redundant, vec![("alpha".to_string(), "zeta".to_string())]);
    }
}
