//! Workloads, probes and every simulation an experiment plan needs.

use crate::bugs::{instantiate_bug, BugSpec, SeverityBin, SeverityReport};
use crate::bugs::severity::mean_degradation;
use crate::error::{invalid, Result};
use crate::eval::plan::ExperimentPlan;
use crate::probes::{cluster_simpoints, extract_probes, profile_bbv, Probe};
use crate::sim::{default_profiles, generate_workload, simulate_warm, CounterTrace, MicroarchConfig, Workload};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// A design with an optional injected bug (by catalog name).
pub type RunKey = (String, Option<String>);

pub fn workload_seed(plan_seed: u64, index: usize) -> u64 {
    plan_seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

pub fn build_workloads(plan: &ExperimentPlan) -> Result<Vec<Workload>> {
    default_profiles(plan.workload_instructions)
        .iter()
        .enumerate()
        .map(|(i, p)| generate_workload(workload_seed(plan.seed, i), p))
        .collect()
}

/// SimPoint probes for every workload, `k` capped by the interval count.
pub fn build_probes(plan: &ExperimentPlan, workloads: &[Workload]) -> Result<Vec<Probe>> {
    let mut probes = Vec::new();
    for (i, w) in workloads.iter().enumerate() {
        let bbv = profile_bbv(w, plan.interval_len)?;
        let k = plan.simpoints_k.min(bbv.rows());
        let sps = cluster_simpoints(&bbv, k, workload_seed(plan.seed, i))?;
        probes.extend(extract_probes(w, plan.interval_len, &sps)?);
    }
    Ok(probes)
}

/// Runs one probe in steady state: caches, prefetcher and predictor are first
/// warmed by a functional pass over the probe's own slice, as if the
/// microbenchmark had already looped once.
pub fn simulate_probe(probe: &Probe, cfg: &MicroarchConfig, bug: Option<&BugSpec>, step_cycles: u64) -> Result<CounterTrace> {
    simulate_warm(&probe.instructions, &probe.instructions.instructions, cfg, bug, step_cycles)
}

/// Runs every probe on one design.
pub fn simulate_probes(probes: &[Probe], cfg: &MicroarchConfig, bug: Option<&BugSpec>, step_cycles: u64) -> Result<Vec<CounterTrace>> {
    probes.iter().map(|p| simulate_probe(p, cfg, bug, step_cycles)).collect()
}

/// SimPoint estimate of whole-workload IPC: the reciprocal of weighted CPI.
pub fn weighted_ipc(weights: &[f64], ipcs: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let cpi: f64 = weights.iter().zip(ipcs).map(|(w, ipc)| w / total / ipc).sum();
    1.0 / cpi
}

pub struct Suite {
    pub step_cycles: u64,
    pub workloads: Vec<Workload>,
    pub probes: Vec<Probe>,
    pub configs: BTreeMap<String, MicroarchConfig>,
    pub catalog: Vec<BugSpec>,
    /// Per-run traces, one per probe in `probes` order. Key `(design, None)`
    /// is the presumed bug-free run (possibly contaminated, see the plan).
    pub traces: BTreeMap<RunKey, Vec<CounterTrace>>,
    pub severity: BTreeMap<String, SeverityReport>,
}

impl Suite {
    pub fn build(plan: &ExperimentPlan) -> Result<Suite> {
        plan.validate()?;
        let workloads = build_workloads(plan)?;
        let probes = build_probes(plan, &workloads)?;
        log::info!("{} workloads, {} probes", workloads.len(), probes.len());
        let configs: BTreeMap<String, MicroarchConfig> = plan.configs()?.into_iter().map(|c| (c.name.clone(), c)).collect();
        let catalog = plan.catalog()?;
        for b in &catalog {
            for cfg in configs.values() {
                instantiate_bug(b, cfg.phys_regs)?;
            }
        }
        let contamination = match &plan.contaminate_with {
            Some(name) => catalog.iter().find(|b| &b.name == name).cloned(),
            None => None,
        };
        let sets = &plan.sets;
        let mut runs: Vec<(RunKey, Option<BugSpec>)> = Vec::new();
        for d in sets.all() {
            let training = !sets.set_iv.contains(d);
            let injected = if training { contamination.clone() } else { None };
            runs.push(((d.clone(), None), injected));
        }
        for d in sets.set_ii.iter().chain(&sets.set_iii).chain(&sets.set_iv) {
            for b in &catalog {
                runs.push(((d.clone(), Some(b.name.clone())), Some(b.clone())));
            }
        }
        log::info!("simulating {} runs x {} probes", runs.len(), probes.len());
        let traces: BTreeMap<RunKey, Vec<CounterTrace>> = runs
            .par_iter()
            .map(|(key, bug)| {
                let cfg = configs.get(&key.0).ok_or_else(|| invalid(format!("unknown design {}", key.0)))?;
                Ok((key.clone(), simulate_probes(&probes, cfg, bug.as_ref(), plan.step_cycles)?))
            })
            .collect::<Result<_>>()?;
        let mut suite =
            Suite { step_cycles: plan.step_cycles, workloads, probes, configs, catalog, traces, severity: BTreeMap::new() };
        suite.severity = suite.compute_severity(&plan.sets.set_iv)?;
        Ok(suite)
    }

    pub fn traces_of(&self, design: &str, bug: Option<&str>) -> Result<&Vec<CounterTrace>> {
        self.traces
            .get(&(design.to_string(), bug.map(str::to_string)))
            .ok_or_else(|| invalid(format!("no simulation for {design} / {}", bug.unwrap_or("bug-free"))))
    }

    pub fn statics(&self, design: &str) -> Vec<f64> {
        self.configs[design].static_features()
    }

    pub fn bug(&self, name: &str) -> Option<&BugSpec> {
        self.catalog.iter().find(|b| b.name == name)
    }

    pub fn family_of(&self, name: &str) -> Option<u8> {
        self.bug(name).map(|b| b.family)
    }

    pub fn severity_bin(&self, name: &str) -> Option<SeverityBin> {
        self.severity.get(name).map(|r| r.bin)
    }

    /// Per-workload SimPoint IPC estimates for one run.
    pub fn workload_ipcs(&self, traces: &[CounterTrace]) -> Vec<f64> {
        self.workloads
            .iter()
            .map(|w| {
                let (ws, ipcs): (Vec<f64>, Vec<f64>) = self
                    .probes
                    .iter()
                    .zip(traces)
                    .filter(|(p, _)| p.source_workload == w.id)
                    .map(|(p, t)| (p.weight, crate::sim::overall_ipc(t)))
                    .unzip();
                weighted_ipc(&ws, &ipcs)
            })
            .collect()
    }

    /// Mean relative IPC loss per bug over `designs` x workloads, each
    /// workload's IPC estimated from its weighted probes.
    fn compute_severity(&self, designs: &[String]) -> Result<BTreeMap<String, SeverityReport>> {
        let mut out = BTreeMap::new();
        for b in &self.catalog {
            let mut pairs = Vec::new();
            for d in designs {
                let free = self.workload_ipcs(self.traces_of(d, None)?);
                let buggy = self.workload_ipcs(self.traces_of(d, Some(&b.name))?);
                pairs.extend(free.into_iter().zip(buggy));
            }
            let degradation = mean_degradation(&pairs)?;
            out.insert(
                b.name.clone(),
                SeverityReport { name: b.name.clone(), degradation, bin: SeverityBin::from_degradation(degradation) },
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_ipc_is_harmonic() {
        assert!((weighted_ipc(&[0.5, 0.5], &[1.0, 2.0]) - 4.0 / 3.0).abs() < 1e-12);
        assert!((weighted_ipc(&[1.0], &[0.7]) - 0.7).abs() < 1e-12);
    }
}
