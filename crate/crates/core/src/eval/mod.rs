//! Experiment plans, simulation suites, evaluation and ablations.

pub mod ablate;
pub mod baseline;
pub mod experiment;
pub mod metrics;
pub mod plan;
pub mod suite;

pub use ablate::{ablate, ablation_table, AblationPoint, Knob};
pub use baseline::{at_fpr, baseline_detect, BaselineReport};
pub use experiment::{run_experiment, run_on_suite, run_stage1, run_stage2, ExperimentReport, Stage1Config, Stage1Output, Stage2Config};
pub use metrics::{metrics, MetricsReport, Outcome};
pub use plan::{DesignSets, ExperimentPlan};
pub use suite::Suite;

use crate::bugs::severity::severity_table;
use crate::error::{invalid, Result};
use crate::probes::write_manifest;
use crate::stage1::error_table;
use crate::stage2::verdict_table;
use std::fs;
use std::path::{Path, PathBuf};

/// Writes everything an experiment produced under `dir`; returns the files written.
pub fn write_artifacts(dir: &Path, plan: &ExperimentPlan, suite: &Suite, s1: &Stage1Output, report: &ExperimentReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |rel: &str, text: String| -> Result<()> {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("plan.toml", plan.to_toml_string())?;
    put("severity.csv", severity_table(&suite.severity.values().cloned().collect::<Vec<_>>()))?;
    for sel in &s1.selections {
        put(&format!("selections/{}.txt", sel.probe_id), sel.report())?;
    }
    let ids = s1.probe_ids(suite);
    let vectors: Vec<_> = s1.errors.values().cloned().collect();
    put("errors.csv", error_table(&vectors, &ids))?;
    for f in &report.folds {
        put(&format!("folds/family{:02}/verdicts.csv", f.family), verdict_table(&f.verdicts))?;
        put(&format!("folds/family{:02}/stats.json", f.family), to_json(&f.stats)?)?;
    }
    put("metrics.json", to_json(report)?)?;
    let mut summary = format!("overall {}\n", report.metrics.summary_line());
    for (fam, m) in &report.per_family {
        summary.push_str(&format!("family{fam:02} {}\n", m.summary_line()));
    }
    if !s1.failed.is_empty() {
        summary.push_str(&format!("{} probes dropped after failed training\n", s1.failed.len()));
    }
    put("summary.txt", summary)?;

    fs::create_dir_all(dir.join("models"))?;
    for m in &s1.models {
        let path = dir.join("models").join(format!("{}.json", m.probe_id));
        m.write(&path)?;
        written.push(path);
    }
    let manifest = dir.join("probes.toml");
    write_manifest(&suite.probes.iter().map(|p| p.record()).collect::<Vec<_>>(), &manifest)?;
    written.push(manifest);
    Ok(written)
}

pub(crate) fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| invalid(e.to_string()))
}
