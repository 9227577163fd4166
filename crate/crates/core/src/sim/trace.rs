use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Counter identifiers emitted by the simulator, in trace column order.
///
/// Event counters are per-step deltas scaled to events per kilo-cycle.
/// Fraction and occupancy counters (see [`is_level_counter`]) are stored as
/// plain per-step ratios.
pub const COUNTER_NAMES: &[&str] = &[
    "fetched_insts",
    "wrong_path_fetch_slots",
    "fetch_stall_cycles",
    "dispatched_insts",
    "issued_insts",
    "committed_insts",
    "branch_fraction",
    "branches",
    "taken_branches",
    "branch_mispredicts",
    "mispredict_rate",
    "indirect_branches",
    "indirect_correct_fraction",
    "l1d_accesses",
    "l1d_misses",
    "l2_accesses",
    "l2_misses",
    "l3_accesses",
    "l3_misses",
    "dram_accesses",
    "prefetches",
    "loads",
    "stores",
    "int_alu_ops",
    "int_mul_ops",
    "div_ops",
    "fp_ops",
    "iq_full_cycles",
    "rob_full_cycles",
    "reg_full_cycles",
    "dispatch_stall_cycles",
    "serializing_stall_cycles",
    "reg_writes",
    "max_commit_width_cycles",
    "zero_commit_cycles",
    "zero_issue_cycles",
    "iq_occupancy",
    "rob_occupancy",
    "port0_busy",
    "port1_busy",
    "port2_busy",
    "port3_busy",
    "port4_busy",
    "port5_busy",
    "port6_busy",
    "port7_busy",
];

/// Index of a counter in [`COUNTER_NAMES`].
pub fn counter_index(name: &str) -> Option<usize> {
    COUNTER_NAMES.iter().position(|c| *c == name)
}

pub fn is_level_counter(name: &str) -> bool {
    matches!(
        name,
        "branch_fraction" | "mispredict_rate" | "indirect_correct_fraction" | "iq_occupancy" | "rob_occupancy"
    )
}

/// Counters that restate the regression target and so never serve as features.
pub fn is_target_counter(name: &str) -> bool {
    name == "committed_insts"
}

/// Per-cycle counts of one instruction class on the correct path. Within a
/// probe each equals IPC times a fixed property of the instruction slice,
/// so a model fed any of them reads IPC back regardless of a bug.
pub fn is_flow_counter(name: &str) -> bool {
    matches!(
        name,
        "dispatched_insts"
            | "issued_insts"
            | "branches"
            | "taken_branches"
            | "indirect_branches"
            | "l1d_accesses"
            | "loads"
            | "stores"
            | "int_alu_ops"
            | "int_mul_ops"
            | "div_ops"
            | "fp_ops"
            | "reg_writes"
    ) || name.starts_with("port")
}

/// Occupancy and stall tallies. They record how the pipeline reacted rather
/// than what it ran into, so a bug that slows the core moves them together
/// with IPC and the model explains the slowdown away.
pub fn is_symptom_counter(name: &str) -> bool {
    matches!(
        name,
        "fetched_insts"
            | "fetch_stall_cycles"
            | "iq_full_cycles"
            | "rob_full_cycles"
            | "reg_full_cycles"
            | "dispatch_stall_cycles"
            | "serializing_stall_cycles"
            | "max_commit_width_cycles"
            | "zero_commit_cycles"
            | "zero_issue_cycles"
            | "iq_occupancy"
            | "rob_occupancy"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterSample {
    /// Cycles covered by this step (the final step may be shorter or longer).
    pub cycles: u64,
    pub ipc: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterTrace {
    pub design: String,
    pub workload_id: String,
    pub bug: Option<String>,
    pub step_cycles: u64,
    pub counter_names: Vec<String>,
    pub steps: Vec<CounterSample>,
}

impl CounterTrace {
    pub fn total_cycles(&self) -> u64 {
        self.steps.iter().map(|s| s.cycles).sum()
    }

    pub fn committed(&self) -> f64 {
        self.steps.iter().map(|s| s.ipc * s.cycles as f64).sum()
    }

    pub fn ipc_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.ipc).collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.counter_names.iter().position(|c| c == name)?;
        Some(self.steps.iter().map(|s| s.values[idx]).collect())
    }

    /// Keeps only the named counters, in the given order.
    pub fn project(&self, names: &[String]) -> Result<CounterTrace> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.counter_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Invalid(format!("trace lacks counter `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(CounterTrace {
            counter_names: names.to_vec(),
            steps: self
                .steps
                .iter()
                .map(|s| CounterSample {
                    cycles: s.cycles,
                    ipc: s.ipc,
                    values: idx.iter().map(|&i| s.values[i]).collect(),
                })
                .collect(),
            ..self.clone()
        })
    }

    /// Merges every `factor` consecutive steps into one, cycle-weighting IPC
    /// and counter values. A trailing group shorter than half a group folds
    /// into its predecessor.
    pub fn coarsened(&self, factor: usize) -> CounterTrace {
        if factor <= 1 || self.steps.len() <= 1 {
            return self.clone();
        }
        let mut groups: Vec<&[CounterSample]> = self.steps.chunks(factor).collect();
        if groups.len() > 1 && groups.last().unwrap().len() * 2 < factor {
            let tail = groups.pop().unwrap();
            let n = groups.len();
            let start = (n - 1) * factor;
            groups[n - 1] = &self.steps[start..start + factor + tail.len()];
        }
        let steps = groups
            .into_iter()
            .map(|g| {
                let cycles: u64 = g.iter().map(|s| s.cycles).sum();
                let w = |s: &CounterSample| s.cycles as f64 / cycles as f64;
                CounterSample {
                    cycles,
                    ipc: g.iter().map(|s| s.ipc * w(s)).sum(),
                    values: (0..self.counter_names.len()).map(|c| g.iter().map(|s| s.values[c] * w(s)).sum()).collect(),
                }
            })
            .collect();
        CounterTrace { step_cycles: self.step_cycles * factor as u64, steps, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Invalid("trace has no steps".into()));
        }
        for (k, s) in self.steps.iter().enumerate() {
            if s.values.len() != self.counter_names.len() {
                return Err(Error::LengthMismatch { left: s.values.len(), right: self.counter_names.len() });
            }
            if !(s.ipc.is_finite() && s.ipc >= 0.0) || s.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Invalid(format!("step {k} has a negative or non-finite value")));
            }
        }
        Ok(())
    }

    /// Columnar text: a `#` metadata block, a header row, one row per step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# design: {}", self.design);
        let _ = writeln!(out, "# workload: {}", self.workload_id);
        let _ = writeln!(out, "# bug: {}", self.bug.as_deref().unwrap_or("none"));
        let _ = writeln!(out, "# step_cycles: {}", self.step_cycles);
        out.push_str("step_cycles,ipc");
        for n in &self.counter_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for s in &self.steps {
            let _ = write!(out, "{},{:.12e}", s.cycles, s.ipc);
            for v in &s.values {
                let _ = write!(out, ",{v:.12e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<CounterTrace> {
        let bad = |msg: String| Error::Parse { path: "trace".into(), msg };
        let mut meta = std::collections::HashMap::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((_, l)) = lines.peek() {
            let Some(rest) = l.strip_prefix('#') else { break };
            if let Some((k, v)) = rest.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            lines.next();
        }
        let (_, header) = lines.next().ok_or_else(|| bad("missing header row".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "step_cycles" || cols[1] != "ipc" {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut steps = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(bad(format!("line {}: {} fields, expected {}", ln + 1, fields.len(), cols.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", ln + 1)));
            steps.push(CounterSample {
                cycles: fields[0].trim().parse().map_err(|e| bad(format!("line {}: {e}", ln + 1)))?,
                ipc: num(fields[1])?,
                values: fields[2..].iter().map(|f| num(f)).collect::<Result<_>>()?,
            });
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(format!("missing metadata `{k}`")));
        let bug = get("bug")?;
        let trace = CounterTrace {
            design: get("design")?,
            workload_id: get("workload")?,
            bug: (bug != "none").then_some(bug),
            step_cycles: get("step_cycles")?.parse().map_err(|e| bad(format!("step_cycles: {e}")))?,
            counter_names: cols[2..].iter().map(|s| s.to_string()).collect(),
            steps,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn read(path: &Path) -> Result<CounterTrace> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { path: path.display().to_string(), msg },
            other => other,
        })
    }
}

/// Committed instructions over total cycles, weighting steps by length.
pub fn overall_ipc(trace: &CounterTrace) -> f64 {
    let cycles = trace.total_cycles();
    if cycles == 0 {
        return 0.0;
    }
    trace.committed() / cycles as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(steps: &[(u64, f64)]) -> CounterTrace {
        CounterTrace {
            design: "d".into(),
            workload_id: "w".into(),
            bug: None,
            step_cycles: 500_000,
            counter_names: vec!["c".into()],
            steps: steps.iter().map(|&(cycles, ipc)| CounterSample { cycles, ipc, values: vec![1.0] }).collect(),
        }
    }

    #[test]
    fn overall_ipc_is_cycle_weighted() {
        assert_eq!(overall_ipc(&trace(&[(500_000, 2.0)])), 2.0);
        assert_eq!(overall_ipc(&trace(&[(1000, 1.0), (1000, 3.0)])), 2.0);
        let got = overall_ipc(&trace(&[(500_000, 1.0), (250_000, 2.0)]));
        assert!((got - 1_000_000.0 / 750_000.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip_keeps_nine_digits() {
        let mut t = trace(&[(100, 1.234567891234), (37, 0.5)]);
        t.bug = Some("b1".into());
        t.steps[0].values[0] = 123.456789012345;
        let back = CounterTrace::from_text(&t.to_text()).unwrap();
        assert_eq!(back.bug.as_deref(), Some("b1"));
        assert!((back.steps[0].ipc - 1.234567891234).abs() < 1e-9);
        assert!((back.steps[0].values[0] - 123.456789012345).abs() < 1e-8);
    }

    #[test]
    fn coarsening_preserves_committed_work() {
        let t = trace(&[(100, 1.0), (100, 2.0), (100, 3.0), (100, 1.5), (40, 0.5)]);
        let c = t.coarsened(2);
        assert_eq!(c.steps.len(), 3);
        assert!((c.steps[0].ipc - 1.5).abs() < 1e-12);
        let c4 = t.coarsened(4);
        assert_eq!(c4.steps.len(), 1);
        assert_eq!(c4.steps[0].cycles, 440);
        for c in [c, c4] {
            assert!((c.committed() - t.committed()).abs() < 1e-9);
            assert_eq!(c.total_cycles(), t.total_cycles());
        }
        assert_eq!(t.coarsened(1), t);
    }

    #[test]
    fn counter_set_is_large_enough() {
        assert!(COUNTER_NAMES.len() >= 30);
        for required in ["fetched_insts", "committed_insts", "branch_mispredicts", "iq_full_cycles", "reg_writes"] {
            assert!(counter_index(required).is_some());
        }
    }
}
