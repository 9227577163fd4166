//! Stage-1 training over a suite and leave-one-family-out stage-2 evaluation.

use crate::error::{invalid, Error, Result};
use crate::eval::metrics::{metrics, MetricsReport, Outcome};
use crate::eval::plan::ExperimentPlan;
use crate::eval::suite::{RunKey, Suite};
use crate::select::{select_from_columns, SelectionResult};
use crate::sim::CounterTrace;
use crate::stage1::{self, build_dataset, probe_error, Engine, ErrorVector, ModelShape, ProbeModel};
use crate::stage2::{self, detect, train_alpha, AlphaChoice, Decision, DetectionStats, Verdict};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub enum CounterChoice {
    Auto { t1: f64, t2: f64 },
    Fixed(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Config {
    pub engine: Engine,
    pub counters: CounterChoice,
    pub window: usize,
    pub include_static: bool,
    pub train_designs: Vec<String>,
    pub val_designs: Vec<String>,
    /// Merge this many simulator steps into one time step.
    pub step_factor: usize,
}

impl Stage1Config {
    pub fn from_plan(plan: &ExperimentPlan) -> Result<Self> {
        Ok(Self {
            engine: plan.engine()?,
            counters: match &plan.manual_counters {
                Some(list) => CounterChoice::Fixed(list.clone()),
                None => CounterChoice::Auto { t1: plan.corr_threshold, t2: plan.redundancy_threshold },
            },
            window: plan.window,
            include_static: plan.include_static,
            train_designs: plan.sets.set_i.clone(),
            val_designs: plan.sets.set_ii.clone(),
            step_factor: 1,
        })
    }
}

pub struct Stage1Output {
    /// Probe indices with a usable model, in suite order.
    pub active: Vec<usize>,
    pub selections: Vec<SelectionResult>,
    /// Models for `active` probes, aligned with it.
    pub models: Vec<ProbeModel>,
    /// Probes whose training diverged, with the reason.
    pub failed: Vec<(usize, String)>,
    pub errors: BTreeMap<RunKey, ErrorVector>,
}

impl Stage1Output {
    pub fn probe_ids(&self, suite: &Suite) -> Vec<String> {
        self.active.iter().map(|&i| suite.probes[i].id.clone()).collect()
    }
}

fn view(t: &CounterTrace, factor: usize) -> Cow<'_, CounterTrace> {
    if factor <= 1 {
        Cow::Borrowed(t)
    } else {
        Cow::Owned(t.coarsened(factor))
    }
}

/// Counter selection for one probe on the training designs' bug-free runs.
/// When nothing clears the correlation threshold the best-correlated
/// candidate is kept so the probe still has a feature.
pub fn select_for_probe(suite: &Suite, probe: usize, designs: &[String], t1: f64, t2: f64, factor: usize) -> Result<SelectionResult> {
    let traces: Vec<Cow<CounterTrace>> =
        designs.iter().map(|d| Ok(view(&suite.traces_of(d, None)?[probe], factor))).collect::<Result<_>>()?;
    let names = &traces[0].counter_names;
    let ipc: Vec<f64> = traces.iter().flat_map(|t| t.steps.iter().map(|s| s.ipc)).collect();
    let columns: Vec<Vec<f64>> =
        (0..names.len()).map(|c| traces.iter().flat_map(|t| t.steps.iter().map(move |s| s.values[c])).collect()).collect();
    let mut sel = select_from_columns(&suite.probes[probe].id, names, &columns, &ipc, t1, t2)?;
    sel.ensure_nonempty();
    Ok(sel)
}

pub fn run_stage1(suite: &Suite, cfg: &Stage1Config) -> Result<Stage1Output> {
    let n = suite.probes.len();
    let factor = cfg.step_factor.max(1);
    let selections: Vec<SelectionResult> = (0..n)
        .into_par_iter()
        .map(|p| match &cfg.counters {
            CounterChoice::Auto { t1, t2 } => select_for_probe(suite, p, &cfg.train_designs, *t1, *t2, factor),
            CounterChoice::Fixed(list) => Ok(SelectionResult {
                probe_id: suite.probes[p].id.clone(),
                kept: list.clone(),
                dropped_low_corr: Vec::new(),
                dropped_redundant: Vec::new(),
                excluded: Vec::new(),
                r_ipc: Vec::new(),
                degenerate: Vec::new(),
            }),
        })
        .collect::<Result<_>>()?;

    let rows_for = |p: usize, designs: &[String], counters: &[String]| -> Result<Vec<stage1::FeatureRow>> {
        let views: Vec<(Cow<CounterTrace>, Vec<f64>)> = designs
            .iter()
            .map(|d| Ok((view(&suite.traces_of(d, None)?[p], factor), suite.statics(d))))
            .collect::<Result<_>>()?;
        let refs: Vec<(&CounterTrace, Vec<f64>)> = views.iter().map(|(t, s)| (t.as_ref(), s.clone())).collect();
        build_dataset(&refs, counters, cfg.window, cfg.include_static)
    };
    let trained: Vec<std::result::Result<ProbeModel, String>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let counters = &selections[p].kept;
            let shape = ModelShape {
                probe_id: suite.probes[p].id.clone(),
                counters: counters.clone(),
                window: cfg.window,
                include_static: cfg.include_static,
            };
            let train = rows_for(p, &cfg.train_designs, counters).map_err(|e| e.to_string())?;
            let val = rows_for(p, &cfg.val_designs, counters).map_err(|e| e.to_string())?;
            stage1::train(&cfg.engine, &shape, &train, &val).map_err(|e| e.to_string())
        })
        .collect();
    let mut active = Vec::new();
    let mut models = Vec::new();
    let mut failed = Vec::new();
    for (p, r) in trained.into_iter().enumerate() {
        match r {
            Ok(m) => {
                active.push(p);
                models.push(m);
            }
            Err(e) => {
                log::warn!("probe {} excluded: {e}", suite.probes[p].id);
                failed.push((p, e));
            }
        }
    }
    if models.is_empty() {
        return Err(Error::Training("no probe model trained successfully".into()));
    }

    let keys: Vec<&RunKey> = suite.traces.keys().collect();
    let errors: BTreeMap<RunKey, ErrorVector> = keys
        .par_iter()
        .map(|key| {
            let traces = &suite.traces[*key];
            let statics = suite.statics(&key.0);
            let deltas = active
                .iter()
                .zip(&models)
                .map(|(&p, m)| probe_error(m, &view(&traces[p], factor), &statics))
                .collect::<Result<Vec<_>>>()?;
            Ok(((*key).clone(), ErrorVector { design: key.0.clone(), bug: key.1.clone(), deltas }))
        })
        .collect::<Result<_>>()?;
    Ok(Stage1Output { active, selections, models, failed, errors })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Config {
    pub alpha_grid: Vec<f64>,
    pub eta: f64,
    pub lambda: f64,
}

impl Stage2Config {
    pub fn from_plan(plan: &ExperimentPlan) -> Self {
        Self { alpha_grid: stage2::alpha_grid(plan.alpha_lo, plan.alpha_hi, plan.alpha_step), eta: plan.eta, lambda: plan.lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub family: u8,
    pub alpha: AlphaChoice,
    pub stats: DetectionStats,
    pub verdicts: Vec<Verdict>,
    pub outcomes: Vec<Outcome>,
    /// Bugs used as stage-2 positives in this fold.
    pub training_bugs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub folds: Vec<FoldResult>,
    pub metrics: MetricsReport,
    pub per_family: BTreeMap<u8, MetricsReport>,
}

impl ExperimentReport {
    pub fn outcomes(&self) -> Vec<Outcome> {
        self.folds.iter().flat_map(|f| f.outcomes.iter().cloned()).collect()
    }
}

fn subset(ev: &ErrorVector, probes: Option<&[usize]>) -> ErrorVector {
    match probes {
        None => ev.clone(),
        Some(idx) => ErrorVector { design: ev.design.clone(), bug: ev.bug.clone(), deltas: idx.iter().map(|&i| ev.deltas[i]).collect() },
    }
}

pub fn families_of(plan: &ExperimentPlan, suite: &Suite) -> Vec<u8> {
    match plan.held_out {
        Some(f) => vec![f],
        None => {
            let mut f: Vec<u8> = suite.catalog.iter().map(|b| b.family).collect();
            f.sort_unstable();
            f.dedup();
            f
        }
    }
}

/// Stage-2 training and test sets for one held-out family.
pub struct FoldData {
    pub train: Vec<(RunKey, bool)>,
    pub test: Vec<(RunKey, bool)>,
}

pub fn fold_data(plan: &ExperimentPlan, suite: &Suite, family: u8) -> FoldData {
    let mut train = Vec::new();
    for d in plan.sets.stage2_train() {
        train.push(((d.clone(), None), false));
        for b in suite.catalog.iter().filter(|b| b.family != family) {
            train.push(((d.clone(), Some(b.name.clone())), true));
        }
    }
    let mut test = Vec::new();
    for d in &plan.sets.set_iv {
        test.push(((d.clone(), None), false));
        for b in suite.catalog.iter().filter(|b| b.family == family) {
            test.push(((d.clone(), Some(b.name.clone())), true));
        }
    }
    FoldData { train, test }
}

/// Leave-one-family-out stage 2 over precomputed error vectors; `probes`
/// restricts every vector to a subset of its entries.
pub fn run_stage2(
    plan: &ExperimentPlan,
    suite: &Suite,
    errors: &BTreeMap<RunKey, ErrorVector>,
    probes: Option<&[usize]>,
    cfg: &Stage2Config,
) -> Result<ExperimentReport> {
    let get = |k: &RunKey| errors.get(k).map(|e| subset(e, probes)).ok_or_else(|| invalid(format!("no error vector for {k:?}")));
    let mut folds = Vec::new();
    for family in families_of(plan, suite) {
        let data = fold_data(plan, suite, family);
        if data.test.iter().all(|(_, l)| !*l) {
            continue;
        }
        let labeled: Vec<(ErrorVector, bool)> = data.train.iter().map(|(k, l)| Ok((get(k)?, *l))).collect::<Result<_>>()?;
        let (stats, alpha) = train_alpha(&labeled, &cfg.alpha_grid, cfg.eta, cfg.lambda)?;
        let mut verdicts = Vec::new();
        let mut outcomes = Vec::new();
        for (k, label) in &data.test {
            let v = detect(&get(k)?, &stats)?;
            outcomes.push(Outcome {
                flagged: v.decision == Decision::Bug,
                score: v.score,
                label: *label,
                severity: k.1.as_deref().and_then(|b| suite.severity_bin(b)),
            });
            verdicts.push(v);
        }
        let training_bugs = data.train.iter().filter_map(|(k, _)| k.1.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        folds.push(FoldResult { family, alpha, stats, verdicts, outcomes, training_bugs });
    }
    if folds.is_empty() {
        return Err(invalid("no held-out family has test variants"));
    }
    let all: Vec<Outcome> = folds.iter().flat_map(|f| f.outcomes.iter().cloned()).collect();
    let per_family = folds.iter().map(|f| (f.family, metrics(&f.outcomes))).collect();
    Ok(ExperimentReport { metrics: metrics(&all), per_family, folds })
}

/// Full pipeline on an already simulated suite.
pub fn run_on_suite(plan: &ExperimentPlan, suite: &Suite) -> Result<(Stage1Output, ExperimentReport)> {
    let s1 = run_stage1(suite, &Stage1Config::from_plan(plan)?)?;
    let report = run_stage2(plan, suite, &s1.errors, None, &Stage2Config::from_plan(plan))?;
    Ok((s1, report))
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<(Suite, Stage1Output, ExperimentReport)> {
    let suite = Suite::build(plan)?;
    let (s1, report) = run_on_suite(plan, &suite)?;
    Ok((suite, s1, report))
}
