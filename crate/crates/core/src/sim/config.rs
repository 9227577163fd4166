use crate::error::{Error, Result};
use crate::sim::isa::{FuKind, Opcode, ARCH_REGS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const LINE_BYTES: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheLevel {
    pub size_bytes: u64,
    pub associativity: u32,
    pub latency_cycles: u32,
}

impl CacheLevel {
    pub fn new(size_bytes: u64, associativity: u32, latency_cycles: u32) -> Self {
        Self { size_bytes, associativity, latency_cycles }
    }

    pub fn blocks(&self) -> u64 {
        self.size_bytes / LINE_BYTES
    }

    pub fn sets(&self) -> u64 {
        self.blocks() / self.associativity as u64
    }

    fn validate(&self, level: &str) -> Result<()> {
        if self.size_bytes < LINE_BYTES || !self.size_bytes.is_power_of_two() {
            return Err(Error::Config(format!(
                "{level}: size {} is not a power of two of at least one line",
                self.size_bytes
            )));
        }
        if self.associativity == 0 || !self.blocks().is_multiple_of(self.associativity as u64) {
            return Err(Error::Config(format!(
                "{level}: associativity {} does not divide {} blocks",
                self.associativity,
                self.blocks()
            )));
        }
        if self.latency_cycles == 0 {
            return Err(Error::Config(format!("{level}: latency must be at least 1")));
        }
        Ok(())
    }
}

fn default_dram_latency() -> u32 {
    200
}

fn default_mispredict_penalty() -> u32 {
    8
}

fn default_frontend_depth() -> u32 {
    3
}

/// Tunable design parameters of one simulated core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroarchConfig {
    pub name: String,
    pub clock_ghz: f64,
    pub pipeline_width: u32,
    pub rob_size: u32,
    pub iq_size: u32,
    pub l1: CacheLevel,
    pub l2: CacheLevel,
    #[serde(default)]
    pub l3: Option<CacheLevel>,
    /// Execution latency per functional-unit class. Loads take their latency
    /// from the cache hierarchy instead.
    pub fu_latencies: BTreeMap<FuKind, u32>,
    /// One entry per issue port, listing the unit kinds the port hosts.
    pub ports: Vec<Vec<FuKind>>,
    pub phys_regs: u32,
    pub branch_predictor_entries: u32,
    #[serde(default = "default_dram_latency")]
    pub dram_latency: u32,
    #[serde(default = "default_mispredict_penalty")]
    pub mispredict_penalty: u32,
    #[serde(default = "default_frontend_depth")]
    pub frontend_depth: u32,
}

impl MicroarchConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return Err(Error::Config("empty design name".into()));
        }
        if !(self.clock_ghz.is_finite() && self.clock_ghz > 0.0) {
            return err(format!("clock {} GHz must be positive", self.clock_ghz));
        }
        for (field, v) in [
            ("pipeline_width", self.pipeline_width),
            ("rob_size", self.rob_size),
            ("iq_size", self.iq_size),
            ("branch_predictor_entries", self.branch_predictor_entries),
            ("dram_latency", self.dram_latency),
        ] {
            if v == 0 {
                return err(format!("{field} must be at least 1"));
            }
        }
        if self.phys_regs as usize <= ARCH_REGS {
            return err(format!(
                "phys_regs {} must exceed the {ARCH_REGS} architectural registers",
                self.phys_regs
            ));
        }
        if self.ports.is_empty() || self.ports.len() > 8 {
            return err(format!("{} ports; expected 1..=8", self.ports.len()));
        }
        self.l1.validate("l1")?;
        self.l2.validate("l2")?;
        if let Some(l3) = &self.l3 {
            l3.validate("l3")?;
        }
        for op in Opcode::ALL {
            let kind = op.fu_kind();
            if !self.ports.iter().any(|p| p.contains(&kind)) {
                return err(format!("no port executes {op} ({kind:?})"));
            }
            if kind != FuKind::Load && self.fu_latencies.get(&kind).copied().unwrap_or(0) == 0 {
                return err(format!("missing or zero latency for {kind:?}"));
            }
        }
        Ok(())
    }

    pub fn latency(&self, kind: FuKind) -> u32 {
        self.fu_latencies.get(&kind).copied().unwrap_or(1)
    }

    pub fn port_masks(&self) -> Vec<u8> {
        self.ports.iter().map(|p| p.iter().fold(0u8, |m, k| m | k.bit())).collect()
    }

    /// Design parameters used as static model features.
    pub fn static_features(&self) -> Vec<f64> {
        let l3 = self.l3.clone().unwrap_or(CacheLevel { size_bytes: 0, associativity: 0, latency_cycles: 0 });
        let mut v = vec![self.clock_ghz, self.pipeline_width as f64, self.rob_size as f64];
        for c in [&self.l1, &self.l2, &l3] {
            v.push((c.size_bytes as f64 / 1024.0).max(0.0));
            v.push(c.associativity as f64);
            v.push(c.latency_cycles as f64);
        }
        v
    }

    pub fn static_feature_names() -> Vec<String> {
        let mut names = vec!["clock_ghz".to_string(), "pipeline_width".into(), "rob_size".into()];
        for lvl in ["l1", "l2", "l3"] {
            for f in ["size_kb", "assoc", "latency"] {
                names.push(format!("{lvl}_{f}"));
            }
        }
        names
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: MicroarchConfig = toml::from_str(text)
            .map_err(|e| Error::Parse { path: origin.to_string(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Membership of a preset in the four disjoint experiment sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DesignSet {
    I,
    II,
    III,
    IV,
}

macro_rules! presets {
    ($( $set:ident $file:literal ),* $(,)?) => {
        const PRESET_FILES: &[(DesignSet, &str, &str)] = &[
            $( (DesignSet::$set, $file, include_str!(concat!("../../presets/", $file, ".toml"))) ),*
        ];
    };
}

presets! {
    I "broadwell", I "cedarview", I "jaguar", I "artificial2", I "artificial3",
    I "artificial4", I "artificial6", I "artificial7", I "artificial10", I "artificial11",
    II "ivybridge", II "artificial0", II "artificial9",
    III "artificial1", III "artificial5", III "artificial8",
    IV "k8", IV "k10", IV "silvermont", IV "skylake",
}

/// The twenty shipped designs with their set membership.
pub fn presets() -> Vec<(DesignSet, MicroarchConfig)> {
    PRESET_FILES
        .iter()
        .map(|(set, file, text)| {
            let cfg = MicroarchConfig::from_toml_str(text, file).expect("shipped preset is valid");
            (*set, cfg)
        })
        .collect()
}

pub fn preset(name: &str) -> Option<MicroarchConfig> {
    presets().into_iter().map(|(_, c)| c).find(|c| c.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_and_partition() {
        let all = presets();
        assert_eq!(all.len(), 20);
        let count = |s| all.iter().filter(|(set, _)| *set == s).count();
        assert_eq!((count(DesignSet::I), count(DesignSet::II)), (10, 3));
        assert_eq!((count(DesignSet::III), count(DesignSet::IV)), (3, 4));
        let mut names: Vec<_> = all.iter().map(|(_, c)| c.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 20);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut text = preset("skylake").unwrap().to_toml_string();
        text.insert_str(0, "bogus = 3\n");
        let err = MicroarchConfig::from_toml_str(&text, "x").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn non_power_of_two_cache_rejected() {
        let mut cfg = preset("skylake").unwrap();
        cfg.l1.size_bytes = 24 * 1024;
        assert!(cfg.validate().is_err());
        cfg.l1.size_bytes = 32 * 1024;
        cfg.l1.associativity = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_port_for_opcode_rejected() {
        let mut cfg = preset("k8").unwrap();
        for p in &mut cfg.ports {
            p.retain(|k| *k != FuKind::Divider);
        }
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn l3_absent_is_legal() {
        let cfg = preset("cedarview").unwrap();
        assert!(cfg.l3.is_none());
        assert_eq!(cfg.static_features().len(), MicroarchConfig::static_feature_names().len());
    }
}
