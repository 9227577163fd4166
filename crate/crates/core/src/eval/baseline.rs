//! Single-stage baseline: per-probe supervised bug classifiers voting per design.

use crate::error::Result;
use crate::eval::experiment::{families_of, fold_data, Stage1Output};
use crate::eval::metrics::{metrics, MetricsReport, Outcome};
use crate::eval::plan::ExperimentPlan;
use crate::eval::suite::{RunKey, Suite};
use crate::sim::{overall_ipc, CounterTrace};
use crate::stage1::gbt::{self, GbtParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fraction of probes voting "bug".
pub fn vote_ratio(votes: &[bool]) -> f64 {
    if votes.is_empty() {
        return 0.0;
    }
    votes.iter().filter(|v| **v).count() as f64 / votes.len() as f64
}

/// Bug iff ρ ≥ θ.
pub fn baseline_decision(rho: f64, theta: f64) -> bool {
    rho >= theta
}

/// Mean of each selected counter over the run, then IPC and design parameters.
fn run_features(trace: &CounterTrace, counters: &[String], statics: &[f64]) -> Vec<f64> {
    let mut f: Vec<f64> = counters
        .iter()
        .map(|c| {
            let col = trace.column(c).unwrap_or_default();
            col.iter().sum::<f64>() / col.len().max(1) as f64
        })
        .collect();
    f.push(overall_ipc(trace));
    f.extend_from_slice(statics);
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub theta: f64,
    /// Scores are the vote ratios ρ.
    pub outcomes: Vec<Outcome>,
    pub metrics: MetricsReport,
}

/// Trains one classifier per probe and fold on the stage-2 training runs
/// (negatives replicated to balance the classes) and scores the fold's test
/// designs by vote ratio.
pub fn baseline_detect(plan: &ExperimentPlan, suite: &Suite, stage1: &Stage1Output) -> Result<BaselineReport> {
    let params = GbtParams { trees: plan.baseline_trees, max_depth: plan.baseline_depth, shrinkage: 0.1, min_leaf: 2 };
    let mut outcomes = Vec::new();
    for family in families_of(plan, suite) {
        let data = fold_data(plan, suite, family);
        if data.test.iter().all(|(_, l)| !*l) {
            continue;
        }
        let pos = data.train.iter().filter(|(_, l)| *l).count();
        let neg = data.train.len() - pos;
        let reps = pos.div_ceil(neg.max(1)).max(1);
        let votes: Vec<Vec<bool>> = stage1
            .active
            .par_iter()
            .map(|&p| {
                let counters = &stage1.selections[p].kept;
                let feats = |k: &RunKey| -> Result<Vec<f64>> {
                    Ok(run_features(&suite.traces_of(&k.0, k.1.as_deref())?[p], counters, &suite.statics(&k.0)))
                };
                let mut x = Vec::new();
                let mut y = Vec::new();
                for (k, label) in &data.train {
                    let f = feats(k)?;
                    let copies = if *label { 1 } else { reps };
                    for _ in 0..copies {
                        x.push(f.clone());
                        y.push(if *label { 1.0 } else { 0.0 });
                    }
                }
                let model = gbt::fit(&x, &y, None, &params).model;
                data.test.iter().map(|(k, _)| Ok(model.predict(&feats(k)?) >= 0.5)).collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<_>>()?;
        for (i, (k, label)) in data.test.iter().enumerate() {
            let design_votes: Vec<bool> = votes.iter().map(|v| v[i]).collect();
            let rho = vote_ratio(&design_votes);
            outcomes.push(Outcome {
                flagged: baseline_decision(rho, plan.theta),
                score: rho,
                label: *label,
                severity: k.1.as_deref().and_then(|b| suite.severity_bin(b)),
            });
        }
    }
    Ok(BaselineReport { theta: plan.theta, metrics: metrics(&outcomes), outcomes })
}

/// Re-thresholds scored outcomes at the most permissive cut whose FPR stays
/// within `max_fpr`; returns the threshold and resulting metrics.
pub fn at_fpr(outcomes: &[Outcome], max_fpr: f64) -> (f64, MetricsReport) {
    let mut cuts: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    cuts.push(f64::INFINITY);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let relabel = |t: f64| -> Vec<Outcome> { outcomes.iter().map(|o| Outcome { flagged: o.score >= t, ..o.clone() }).collect() };
    for t in cuts {
        let m = metrics(&relabel(t));
        if m.fpr.unwrap_or(0.0) <= max_fpr + 1e-12 {
            return (t, m);
        }
    }
    unreachable!("an infinite threshold flags nothing")
}
