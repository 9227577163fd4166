//! Knob sweeps over a simulated suite.

use crate::error::{invalid, Result};
use crate::eval::experiment::{run_stage1, run_stage2, CounterChoice, Stage1Config, Stage1Output, Stage2Config};
use crate::eval::metrics::MetricsReport;
use crate::eval::plan::{manual_counters, ExperimentPlan};
use crate::eval::suite::Suite;
use crate::error::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    ProbeCountRandom,
    ProbeCountHigherror,
    Timestep,
    Window,
    StaticFeatures,
    TrainingArchCount,
    CounterSelection,
}

impl Knob {
    pub const ALL: [Knob; 7] = [
        Knob::ProbeCountRandom,
        Knob::ProbeCountHigherror,
        Knob::Timestep,
        Knob::Window,
        Knob::StaticFeatures,
        Knob::TrainingArchCount,
        Knob::CounterSelection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Knob::ProbeCountRandom => "probe_count_random",
            Knob::ProbeCountHigherror => "probe_count_higherror",
            Knob::Timestep => "timestep",
            Knob::Window => "window",
            Knob::StaticFeatures => "static_features",
            Knob::TrainingArchCount => "training_arch_count",
            Knob::CounterSelection => "counter_selection",
        }
    }
}

impl FromStr for Knob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Knob::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation knob '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub setting: String,
    pub report: MetricsReport,
}

/// Probe-count schedule: remove `step` probes at a time while at least
/// `floor` of the original count remains.
pub fn removal_schedule(total: usize, step: usize, floor: f64) -> Vec<usize> {
    let min = (total as f64 * floor).ceil() as usize;
    let mut out = vec![total];
    let mut n = total;
    while step > 0 && n >= step && n - step >= min.max(1) {
        n -= step;
        out.push(n);
    }
    out
}

/// Runs one knob; `base` is the stage-1 output at the plan's defaults.
pub fn ablate(plan: &ExperimentPlan, suite: &Suite, base: &Stage1Output, knob: Knob) -> Result<Vec<AblationPoint>> {
    let s2 = Stage2Config::from_plan(plan);
    let base_cfg = Stage1Config::from_plan(plan)?;
    let grid = &plan.ablation;
    let retrain = |cfg: &Stage1Config| -> Result<MetricsReport> {
        let s1 = run_stage1(suite, cfg)?;
        Ok(run_stage2(plan, suite, &s1.errors, None, &s2)?.metrics)
    };
    let mut points = Vec::new();
    match knob {
        Knob::ProbeCountRandom | Knob::ProbeCountHigherror => {
            let total = base.active.len();
            let order: Vec<usize> = if knob == Knob::ProbeCountRandom {
                let mut o: Vec<usize> = (0..total).collect();
                o.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
                o
            } else {
                // Highest mean bug-free error on the stage-2 training designs first.
                let designs = plan.sets.stage2_train();
                let mean: Vec<f64> = (0..total)
                    .map(|i| {
                        designs.iter().map(|d| base.errors[&(d.clone(), None)].deltas[i]).sum::<f64>() / designs.len() as f64
                    })
                    .collect();
                let mut o: Vec<usize> = (0..total).collect();
                o.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
                o
            };
            for keep in removal_schedule(total, grid.probe_removal_step, grid.probe_removal_floor) {
                let mut kept: Vec<usize> = order[total - keep..].to_vec();
                kept.sort_unstable();
                let report = run_stage2(plan, suite, &base.errors, Some(&kept), &s2)?.metrics;
                points.push(AblationPoint { setting: keep.to_string(), report });
            }
        }
        Knob::Timestep => {
            for &f in &grid.timestep_factors {
                let cfg = Stage1Config { step_factor: f, ..base_cfg.clone() };
                points.push(AblationPoint { setting: (suite.step_cycles * f as u64).to_string(), report: retrain(&cfg)? });
            }
        }
        Knob::Window => {
            for &w in &grid.windows {
                let cfg = Stage1Config { window: w, ..base_cfg.clone() };
                points.push(AblationPoint { setting: w.to_string(), report: retrain(&cfg)? });
            }
        }
        Knob::StaticFeatures => {
            for on in [true, false] {
                let cfg = Stage1Config { include_static: on, ..base_cfg.clone() };
                points.push(AblationPoint { setting: if on { "with" } else { "without" }.into(), report: retrain(&cfg)? });
            }
        }
        Knob::TrainingArchCount => {
            for &n in &grid.training_arch_counts {
                if n == 0 || n > plan.sets.set_i.len() {
                    continue;
                }
                let cfg = Stage1Config { train_designs: plan.sets.set_i[..n].to_vec(), ..base_cfg.clone() };
                points.push(AblationPoint { setting: n.to_string(), report: retrain(&cfg)? });
            }
        }
        Knob::CounterSelection => {
            let auto = CounterChoice::Auto { t1: plan.corr_threshold, t2: plan.redundancy_threshold };
            for (name, choice) in [("automated", auto), ("manual22", CounterChoice::Fixed(manual_counters()))] {
                let cfg = Stage1Config { counters: choice, ..base_cfg.clone() };
                points.push(AblationPoint { setting: name.into(), report: retrain(&cfg)? });
            }
        }
    }
    if points.is_empty() {
        return Err(invalid(format!("ablation grid for {} is empty", knob.name())));
    }
    Ok(points)
}

/// Plot-ready columnar text for one knob's series.
pub fn ablation_table(knob: Knob, points: &[AblationPoint]) -> String {
    let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.6}"));
    let mut out = format!("# knob: {}\nsetting,tpr,fpr,precision,auc,tpr_high,tpr_medium,tpr_low,tpr_verylow\n", knob.name());
    for p in points {
        let bins: Vec<String> = p.report.per_severity.values().map(|r| f(r.tpr())).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.setting,
            f(p.report.tpr),
            f(p.report.fpr),
            f(p.report.precision),
            f(p.report.auc),
            bins.join(",")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_stops_at_floor() {
        assert_eq!(removal_schedule(20, 5, 0.25), vec![20, 15, 10, 5]);
        assert_eq!(removal_schedule(22, 5, 0.25), vec![22, 17, 12, 7]);
        assert_eq!(removal_schedule(4, 5, 0.25), vec![4]);
    }

    #[test]
    fn knob_names_round_trip() {
        for k in Knob::ALL {
            assert_eq!(k.name().parse::<Knob>().unwrap(), k);
        }
        assert!("lstm_depth".parse::<Knob>().is_err());
    }
}
