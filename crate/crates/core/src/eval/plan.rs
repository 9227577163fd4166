use crate::bugs::{default_catalog, read_catalog, BugSpec};
use crate::error::{Error, Result};
use crate::sim::{presets, DesignSet, MicroarchConfig};
use crate::stage1::Engine;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSets {
    pub set_i: Vec<String>,
    pub set_ii: Vec<String>,
    pub set_iii: Vec<String>,
    pub set_iv: Vec<String>,
}

impl Default for DesignSets {
    fn default() -> Self {
        let pick = |s: DesignSet| presets().into_iter().filter(|(d, _)| *d == s).map(|(_, c)| c.name).collect();
        Self { set_i: pick(DesignSet::I), set_ii: pick(DesignSet::II), set_iii: pick(DesignSet::III), set_iv: pick(DesignSet::IV) }
    }
}

impl DesignSets {
    pub fn all(&self) -> impl Iterator<Item = &String> {
        self.set_i.iter().chain(&self.set_ii).chain(&self.set_iii).chain(&self.set_iv)
    }

    /// Stage-2 training designs (sets II and III).
    pub fn stage2_train(&self) -> Vec<String> {
        self.set_ii.iter().chain(&self.set_iii).cloned().collect()
    }
}

/// The hand-picked counter list used by the counter-selection ablation.
pub fn manual_counters() -> Vec<String> {
    [
        "fetched_insts",
        "branches",
        "branch_mispredicts",
        "mispredict_rate",
        "l1d_accesses",
        "l1d_misses",
        "l2_accesses",
        "l2_misses",
        "l3_misses",
        "dram_accesses",
        "loads",
        "stores",
        "int_alu_ops",
        "int_mul_ops",
        "fp_ops",
        "iq_full_cycles",
        "rob_full_cycles",
        "reg_full_cycles",
        "iq_occupancy",
        "rob_occupancy",
        "reg_writes",
        "zero_issue_cycles",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrids {
    pub windows: Vec<usize>,
    /// Multiples of the base step size.
    pub timestep_factors: Vec<usize>,
    pub probe_removal_step: usize,
    /// Stop removing once this fraction of probes remains.
    pub probe_removal_floor: f64,
    pub training_arch_counts: Vec<usize>,
}

impl Default for AblationGrids {
    fn default() -> Self {
        Self {
            windows: vec![1, 2, 3, 4],
            timestep_factors: vec![1, 2, 4],
            probe_removal_step: 5,
            probe_removal_floor: 0.25,
            training_arch_counts: vec![10, 7, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub sets: DesignSets,
    /// Catalog file; the built-in catalog when absent.
    pub catalog: Option<PathBuf>,
    /// Restrict evaluation to one held-out family; all families when absent.
    pub held_out: Option<u8>,
    pub engine: String,
    pub workload_instructions: usize,
    pub interval_len: usize,
    pub simpoints_k: usize,
    pub step_cycles: u64,
    pub window: usize,
    pub include_static: bool,
    pub corr_threshold: f64,
    pub redundancy_threshold: f64,
    /// Use this fixed counter list instead of automated selection.
    pub manual_counters: Option<Vec<String>>,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha_step: f64,
    pub eta: f64,
    pub lambda: f64,
    pub theta: f64,
    pub baseline_trees: usize,
    pub baseline_depth: usize,
    /// Bug injected into every presumed bug-free training simulation.
    pub contaminate_with: Option<String>,
    pub seed: u64,
    pub ablation: AblationGrids,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            sets: DesignSets::default(),
            catalog: None,
            held_out: None,
            engine: "gbt-250".into(),
            workload_instructions: 600_000,
            interval_len: 10_000,
            simpoints_k: 19,
            step_cycles: 500,
            window: 1,
            include_static: true,
            corr_threshold: 0.7,
            redundancy_threshold: 0.95,
            manual_counters: None,
            alpha_lo: 0.0,
            alpha_hi: 5.0,
            alpha_step: 0.1,
            eta: 15.0,
            lambda: 5.0,
            theta: 0.5,
            baseline_trees: 100,
            baseline_depth: 3,
            contaminate_with: None,
            seed: 1,
            ablation: AblationGrids::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let plan: ExperimentPlan =
            toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), msg: e.to_string() })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn engine(&self) -> Result<Engine> {
        self.engine.parse()
    }

    pub fn catalog(&self) -> Result<Vec<BugSpec>> {
        match &self.catalog {
            Some(p) => read_catalog(p),
            None => Ok(default_catalog()),
        }
    }

    pub fn configs(&self) -> Result<Vec<MicroarchConfig>> {
        let all = presets();
        self.sets
            .all()
            .map(|name| {
                all.iter()
                    .find(|(_, c)| c.name.eq_ignore_ascii_case(name))
                    .map(|(_, c)| c.clone())
                    .ok_or_else(|| Error::Config(format!("unknown design '{name}'")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let mut seen = BTreeSet::new();
        for name in self.sets.all() {
            if !seen.insert(name.to_ascii_lowercase()) {
                return bad(format!("design '{name}' appears in more than one set"));
            }
        }
        for (label, set) in [("I", &self.sets.set_i), ("II", &self.sets.set_ii), ("III", &self.sets.set_iii), ("IV", &self.sets.set_iv)] {
            if set.is_empty() {
                return bad(format!("design set {label} is empty"));
            }
        }
        self.configs()?;
        self.engine()?;
        if let Some(f) = self.held_out {
            if !(1..=crate::bugs::spec::FAMILY_COUNT).contains(&f) {
                return bad(format!("held-out family {f} does not exist"));
            }
        }
        if self.interval_len == 0 || self.workload_instructions < self.interval_len || self.simpoints_k == 0 {
            return bad("workload, interval and k must be positive with interval <= workload".into());
        }
        if self.step_cycles == 0 || self.window == 0 {
            return bad("step_cycles and window must be positive".into());
        }
        if !(self.eta > self.lambda) {
            return bad(format!("lambda ({}) must be below eta ({})", self.lambda, self.eta));
        }
        if let Some(name) = &self.contaminate_with {
            let catalog = self.catalog()?;
            let bug = catalog.iter().find(|b| &b.name == name);
            match bug {
                None => return bad(format!("contamination bug '{name}' not in catalog")),
                Some(b) if Some(b.family) == self.held_out => {
                    return bad(format!("contamination bug '{name}' belongs to the held-out family"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_is_valid_and_round_trips() {
        let p = ExperimentPlan::default();
        p.validate().unwrap();
        assert_eq!(ExperimentPlan::from_toml_str(&p.to_toml_string(), "mem").unwrap(), p);
        assert_eq!(p.sets.all().count(), 20);
        assert_eq!(manual_counters().len(), 22);
    }

    #[test]
    fn overlapping_sets_rejected() {
        let mut p = ExperimentPlan::default();
        p.sets.set_iv.push(p.sets.set_i[0].clone());
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_keys_and_engines_rejected() {
        assert!(ExperimentPlan::from_toml_str("bogus = 1\n", "mem").is_err());
        assert!(ExperimentPlan::from_toml_str("engine = \"lstm\"\n", "mem").is_err());
        assert!(ExperimentPlan::from_toml_str("held_out = 15\n", "mem").is_err());
    }
}
