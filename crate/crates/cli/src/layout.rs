//! Where each stage puts its artifacts inside a run directory.

use anyhow::{bail, Context, Result};
use perfprobe::sim::{preset, CounterTrace, MicroarchConfig};
use std::path::{Path, PathBuf};

pub const BUG_FREE: &str = "bugfree";

pub fn traces_dir(out: &Path) -> PathBuf {
    out.join("traces")
}

pub fn probes_file(out: &Path) -> PathBuf {
    out.join("probes.toml")
}

pub fn selections_file(out: &Path) -> PathBuf {
    out.join("selections.json")
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

pub fn errors_file(out: &Path) -> PathBuf {
    out.join("errors.csv")
}

pub fn bug_tag(bug: Option<&str>) -> &str {
    bug.unwrap_or(BUG_FREE)
}

pub fn trace_path(traces: &Path, design: &str, bug: Option<&str>, id: &str) -> PathBuf {
    traces.join(design).join(bug_tag(bug)).join(format!("{id}.csv"))
}

pub fn design_config_path(traces: &Path, design: &str) -> PathBuf {
    traces.join(design).join("config.toml")
}

/// A preset name or a design config file.
pub fn resolve_design(spec: &str) -> Result<MicroarchConfig> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        return MicroarchConfig::load(path).with_context(|| format!("loading design {spec}"));
    }
    match preset(spec) {
        Some(c) => Ok(c),
        None => bail!("unknown design `{spec}` (not a preset name or config file)"),
    }
}

/// The design config stored next to its traces, falling back to the preset.
pub fn design_config(traces: &Path, design: &str) -> Result<MicroarchConfig> {
    let p = design_config_path(traces, design);
    if p.exists() {
        return Ok(MicroarchConfig::load(&p)?);
    }
    preset(design).with_context(|| format!("no config for design {design} under {}", traces.display()))
}

pub fn read_trace(traces: &Path, design: &str, bug: Option<&str>, id: &str) -> Result<CounterTrace> {
    let p = trace_path(traces, design, bug, id);
    CounterTrace::read(&p).with_context(|| format!("missing upstream trace {}", p.display()))
}

/// `(design, bug)` runs present under the traces directory, sorted.
pub fn simulated_runs(traces: &Path) -> Result<Vec<(String, Option<String>)>> {
    let mut runs = Vec::new();
    let mut designs: Vec<PathBuf> = std::fs::read_dir(traces)
        .with_context(|| format!("missing upstream traces directory {}", traces.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    designs.sort();
    for d in designs {
        let design = d.file_name().unwrap().to_string_lossy().to_string();
        let mut bugs: Vec<String> = std::fs::read_dir(&d)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect();
        bugs.sort();
        for b in bugs {
            let bug = (b != BUG_FREE).then_some(b);
            runs.push((design.clone(), bug));
        }
    }
    Ok(runs)
}
