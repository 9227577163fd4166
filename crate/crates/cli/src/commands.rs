use crate::layout::{self, design_config, read_trace, resolve_design, simulated_runs, trace_path};
use crate::manifest::{sha256_hex, verify_run, ManifestBuilder};
use crate::{AblateArgs, DetectArgs, ErrorsArgs, ExperimentArgs, ReportArgs, RunContext, SelectArgs, SimulateArgs, TrainArgs};
use anyhow::{bail, Context, Result};
use perfprobe::bugs::{instantiate_bug, BugSpec};
use perfprobe::eval::experiment::Stage1Config;
use perfprobe::eval::suite::{build_probes, build_workloads};
use perfprobe::eval::{self, ablation_table, baseline_detect, metrics, run_experiment, run_stage1, write_artifacts, Knob, Outcome, Suite};
use perfprobe::probes::{probes_from_records, read_manifest, write_manifest};
use perfprobe::select::{select_counters, SelectionResult};
use perfprobe::sim::{simulate_warm, AbstractInstruction, Workload};
use perfprobe::stage1::{self, build_dataset, error_table, error_vector, parse_error_table, ModelShape, ProbeModel};
use perfprobe::stage2::{alpha_grid, detect as classify_design, train_alpha, verdict_table, Decision};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

fn manifest(ctx: &RunContext, command: &str) -> Result<ManifestBuilder> {
    let mut m = ManifestBuilder::new(&ctx.out_dir, command, sha256_hex(ctx.plan.to_toml_string().as_bytes()), ctx.plan.seed);
    if let Some(p) = &ctx.config_path {
        m.input(p)?;
    }
    Ok(m)
}

fn write(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn catalog_bug(catalog: &[BugSpec], name: &str) -> Result<BugSpec> {
    catalog.iter().find(|b| b.name == name).cloned().with_context(|| format!("unknown bug `{name}` (not in the catalog)"))
}

fn load_selections(path: &Path) -> Result<Vec<SelectionResult>> {
    let text = fs::read_to_string(path).with_context(|| format!("missing upstream selections {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn simulate(ctx: &RunContext, a: &SimulateArgs) -> Result<()> {
    let plan = &ctx.plan;
    let mut man = manifest(ctx, "simulate")?;
    let workloads = build_workloads(plan)?;
    // Probes run in steady state, whole workloads from a cold start.
    let (units, warm): (Vec<Workload>, bool) = match &a.probes {
        Some(path) => {
            man.input(path)?;
            let records = read_manifest(path).with_context(|| format!("missing upstream probe manifest {}", path.display()))?;
            (probes_from_records(&records, &workloads)?.into_iter().map(|p| p.instructions).collect(), true)
        }
        None => (workloads, false),
    };
    let units: Vec<Workload> = if a.workloads.is_empty() {
        units
    } else {
        a.workloads
            .iter()
            .map(|id| units.iter().find(|u| &u.id == id).cloned().with_context(|| format!("unknown workload or probe `{id}`")))
            .collect::<Result<_>>()?
    };
    let catalog = plan.catalog()?;
    let traces = layout::traces_dir(&ctx.out_dir);
    let mut written = Vec::new();
    let mut jobs = Vec::new();
    for spec in &a.designs {
        let cfg = resolve_design(spec)?;
        if Path::new(spec).exists() {
            man.input(Path::new(spec))?;
        }
        write(&layout::design_config_path(&traces, &cfg.name), &cfg.to_toml_string(), &mut written)?;
        for b in &a.bugs {
            let bug = if b == "none" { None } else { Some(catalog_bug(&catalog, b)?) };
            if let Some(bug) = &bug {
                instantiate_bug(bug, cfg.phys_regs)?;
            }
            for u in &units {
                jobs.push((cfg.clone(), bug.clone(), u));
            }
        }
    }
    let paths: Vec<PathBuf> = jobs
        .par_iter()
        .map(|(cfg, bug, u)| {
            let warmup: &[AbstractInstruction] = if warm { &u.instructions } else { &[] };
            let t = simulate_warm(u, warmup, cfg, bug.as_ref(), plan.step_cycles)?;
            let p = trace_path(&traces, &cfg.name, bug.as_ref().map(|b| b.name.as_str()), &u.id);
            fs::create_dir_all(p.parent().unwrap())?;
            t.write(&p)?;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    written.extend(paths);
    man.outputs(&written)?;
    man.finish()?;
    println!("wrote {} trace files under {}", jobs.len(), traces.display());
    Ok(())
}

pub fn probes(ctx: &RunContext) -> Result<()> {
    let mut man = manifest(ctx, "probes")?;
    let workloads = build_workloads(&ctx.plan)?;
    let probes = build_probes(&ctx.plan, &workloads)?;
    let path = layout::probes_file(&ctx.out_dir);
    write_manifest(&probes.iter().map(|p| p.record()).collect::<Vec<_>>(), &path)?;
    man.output(&path)?;
    man.finish()?;
    println!("{} probes from {} workloads -> {}", probes.len(), workloads.len(), path.display());
    Ok(())
}

fn probe_ids(path: &Path) -> Result<Vec<String>> {
    let records = read_manifest(path).with_context(|| format!("missing upstream probe manifest {}", path.display()))?;
    Ok(records.into_iter().map(|r| r.id).collect())
}

pub fn select(ctx: &RunContext, a: &SelectArgs) -> Result<()> {
    let plan = &ctx.plan;
    let mut man = manifest(ctx, "select")?;
    let traces = a.traces.clone().unwrap_or_else(|| layout::traces_dir(&ctx.out_dir));
    let probes = a.probes.clone().unwrap_or_else(|| layout::probes_file(&ctx.out_dir));
    man.input(&probes)?;
    let ids = probe_ids(&probes)?;
    let selections: Vec<SelectionResult> = ids
        .par_iter()
        .map(|id| {
            let ts = plan.sets.set_i.iter().map(|d| read_trace(&traces, d, None, id)).collect::<Result<Vec<_>>>()?;
            let mut sel = select_counters(id, &ts, plan.corr_threshold, plan.redundancy_threshold)?;
            match &plan.manual_counters {
                Some(list) => {
                    sel.kept = list.clone();
                    sel.dropped_low_corr.retain(|c| !list.contains(c));
                    sel.dropped_redundant.retain(|(_, c)| !list.contains(c));
                }
                None => sel.ensure_nonempty(),
            }
            Ok(sel)
        })
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    for s in &selections {
        write(&ctx.out_dir.join("selections").join(format!("{}.txt", s.probe_id)), &s.report(), &mut written)?;
    }
    write(&layout::selections_file(&ctx.out_dir), &serde_json::to_string_pretty(&selections)?, &mut written)?;
    man.outputs(&written)?;
    man.finish()?;
    let sizes: Vec<usize> = selections.iter().map(|s| s.kept.len()).collect();
    println!(
        "selected counters for {} probes (kept {}..{})",
        selections.len(),
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0)
    );
    Ok(())
}

fn rows(traces: &Path, designs: &[String], id: &str, shape: &ModelShape) -> Result<Vec<stage1::FeatureRow>> {
    let loaded = designs
        .iter()
        .map(|d| Ok((read_trace(traces, d, None, id)?, design_config(traces, d)?.static_features())))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = loaded.iter().map(|(t, s)| (t, s.clone())).collect();
    Ok(build_dataset(&refs, &shape.counters, shape.window, shape.include_static)?)
}

pub fn train(ctx: &RunContext, a: &TrainArgs) -> Result<()> {
    let plan = &ctx.plan;
    let mut man = manifest(ctx, "train")?;
    let engine = match &a.engine {
        Some(e) => e.clone(),
        None => plan.engine()?,
    };
    let traces = a.traces.clone().unwrap_or_else(|| layout::traces_dir(&ctx.out_dir));
    let sel_path = a.selections.clone().unwrap_or_else(|| layout::selections_file(&ctx.out_dir));
    man.input(&sel_path)?;
    let selections = load_selections(&sel_path)?;
    let results: Vec<(String, std::result::Result<ProbeModel, String>)> = selections
        .par_iter()
        .map(|s| {
            let shape = ModelShape {
                probe_id: s.probe_id.clone(),
                counters: s.kept.clone(),
                window: plan.window,
                include_static: plan.include_static,
            };
            let train = rows(&traces, &plan.sets.set_i, &s.probe_id, &shape)?;
            let val = rows(&traces, &plan.sets.set_ii, &s.probe_id, &shape)?;
            Ok((s.probe_id.clone(), stage1::train(&engine, &shape, &train, &val).map_err(|e| e.to_string())))
        })
        .collect::<Result<_>>()?;
    let dir = layout::models_dir(&ctx.out_dir);
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut failed = String::new();
    for (id, r) in &results {
        match r {
            Ok(m) => {
                let p = dir.join(format!("{id}.json"));
                m.write(&p)?;
                written.push(p);
            }
            Err(e) => {
                log::warn!("probe {id} dropped: {e}");
                failed.push_str(&format!("{id},{e}\n"));
            }
        }
    }
    if written.is_empty() {
        bail!("no probe model trained successfully");
    }
    write(&dir.join("failed.csv"), &format!("probe_id,reason\n{failed}"), &mut written)?;
    man.outputs(&written)?;
    man.finish()?;
    println!("trained {} {} models", written.len() - 1, engine);
    Ok(())
}

pub fn errors(ctx: &RunContext, a: &ErrorsArgs) -> Result<()> {
    let mut man = manifest(ctx, "errors")?;
    let traces = a.traces.clone().unwrap_or_else(|| layout::traces_dir(&ctx.out_dir));
    let models_dir = a.models.clone().unwrap_or_else(|| layout::models_dir(&ctx.out_dir));
    let probes = a.probes.clone().unwrap_or_else(|| layout::probes_file(&ctx.out_dir));
    man.input(&probes)?;
    let mut models = Vec::new();
    for id in probe_ids(&probes)? {
        let p = models_dir.join(format!("{id}.json"));
        if p.exists() {
            man.input(&p)?;
            models.push(ProbeModel::read(&p)?);
        }
    }
    if models.is_empty() {
        bail!("missing upstream models in {}", models_dir.display());
    }
    let ids: Vec<String> = models.iter().map(|m| m.probe_id.clone()).collect();
    let runs = simulated_runs(&traces)?;
    let vectors: Vec<_> = runs
        .par_iter()
        .filter(|(d, b)| ids.iter().all(|id| trace_path(&traces, d, b.as_deref(), id).exists()))
        .map(|(d, b)| {
            let ts = ids.iter().map(|id| read_trace(&traces, d, b.as_deref(), id)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<_> = ts.iter().collect();
            Ok(error_vector(&models, &refs, &design_config(&traces, d)?.static_features())?)
        })
        .collect::<Result<_>>()?;
    if vectors.is_empty() {
        bail!("no simulated run covers every modelled probe under {}", traces.display());
    }
    let path = layout::errors_file(&ctx.out_dir);
    let mut written = Vec::new();
    write(&path, &error_table(&vectors, &ids), &mut written)?;
    man.outputs(&written)?;
    man.finish()?;
    println!("{} runs x {} probes -> {}", vectors.len(), ids.len(), path.display());
    Ok(())
}

pub fn detect(ctx: &RunContext, a: &DetectArgs) -> Result<()> {
    let plan = &ctx.plan;
    let mut man = manifest(ctx, "detect")?;
    let path = a.errors.clone().unwrap_or_else(|| layout::errors_file(&ctx.out_dir));
    man.input(&path)?;
    let text = fs::read_to_string(&path).with_context(|| format!("missing upstream error table {}", path.display()))?;
    let (vectors, _) = parse_error_table(&text)?;
    let catalog = plan.catalog()?;
    let family = |bug: &Option<String>| -> Result<Option<u8>> {
        Ok(match bug {
            Some(b) => Some(catalog_bug(&catalog, b)?.family),
            None => None,
        })
    };
    let train_designs: BTreeSet<String> = plan.sets.stage2_train().into_iter().collect();
    let mut labeled = Vec::new();
    for v in vectors.iter().filter(|v| train_designs.contains(&v.design)) {
        let fam = family(&v.bug)?;
        if a.held_out.is_some() && fam == a.held_out {
            continue;
        }
        labeled.push((v.clone(), v.bug.is_some()));
    }
    let grid = alpha_grid(plan.alpha_lo, plan.alpha_hi, plan.alpha_step);
    let (stats, choice) = train_alpha(&labeled, &grid, plan.eta, plan.lambda)?;
    let mut verdicts = Vec::new();
    let mut outcomes = Vec::new();
    for v in vectors.iter().filter(|v| plan.sets.set_iv.contains(&v.design)) {
        let fam = family(&v.bug)?;
        if a.held_out.is_some() && fam.is_some() && fam != a.held_out {
            continue;
        }
        let verdict = classify_design(v, &stats)?;
        outcomes.push(Outcome {
            flagged: verdict.decision == Decision::Bug,
            score: verdict.score,
            label: v.bug.is_some(),
            severity: None,
        });
        verdicts.push(verdict);
    }
    if verdicts.is_empty() {
        bail!("the error table has no set-IV runs to classify");
    }
    let mut written = Vec::new();
    let stats_path = ctx.out_dir.join("stats.json");
    stats.write(&stats_path)?;
    written.push(stats_path);
    write(&ctx.out_dir.join("verdicts.csv"), &verdict_table(&verdicts), &mut written)?;
    man.outputs(&written)?;
    man.finish()?;
    let flagged = verdicts.iter().filter(|v| v.decision == Decision::Bug).count();
    println!("alpha={:.2} (training TPR {:.3}, FPR {:.3})", choice.alpha, choice.tpr, choice.fpr);
    println!("{flagged}/{} designs flagged; {}", verdicts.len(), metrics(&outcomes).summary_line());
    Ok(())
}

pub fn experiment(ctx: &RunContext, a: &ExperimentArgs) -> Result<()> {
    let mut plan = ctx.plan.clone();
    if a.held_out.is_some() {
        plan.held_out = a.held_out;
        plan.validate()?;
    }
    let mut man = manifest(ctx, "experiment")?;
    let (suite, s1, report) = run_experiment(&plan)?;
    let mut written = write_artifacts(&ctx.out_dir, &plan, &suite, &s1, &report)?;
    if a.baseline {
        let b = baseline_detect(&plan, &suite, &s1)?;
        write(&ctx.out_dir.join("baseline.json"), &serde_json::to_string_pretty(&b)?, &mut written)?;
        println!("baseline {}", b.metrics.summary_line());
    }
    man.outputs(&written)?;
    man.finish()?;
    println!("overall {}", report.metrics.summary_line());
    Ok(())
}

pub fn ablate(ctx: &RunContext, a: &AblateArgs) -> Result<()> {
    let plan = &ctx.plan;
    let mut man = manifest(ctx, "ablate")?;
    let knobs: Vec<Knob> = if a.knobs.is_empty() { Knob::ALL.to_vec() } else { a.knobs.clone() };
    let suite = Suite::build(plan)?;
    let base = run_stage1(&suite, &Stage1Config::from_plan(plan)?)?;
    let mut written = Vec::new();
    for knob in knobs {
        let points = eval::ablate(plan, &suite, &base, knob)?;
        let table = ablation_table(knob, &points);
        write(&ctx.out_dir.join("ablation").join(format!("{}.csv", knob.name())), &table, &mut written)?;
        write(
            &ctx.out_dir.join("ablation").join(format!("{}.json", knob.name())),
            &serde_json::to_string_pretty(&points)?,
            &mut written,
        )?;
        print!("{table}");
    }
    man.outputs(&written)?;
    man.finish()?;
    Ok(())
}

pub fn report(ctx: &RunContext, a: &ReportArgs) -> Result<()> {
    let dir = a.run.clone().unwrap_or_else(|| ctx.out_dir.clone());
    let checked = verify_run(&dir)?;
    println!("{checked} artifacts verified in {}", dir.display());
    let summary = dir.join("summary.txt");
    if summary.exists() {
        print!("{}", fs::read_to_string(summary)?);
    }
    let verdicts = dir.join("verdicts.csv");
    if verdicts.exists() {
        print!("{}", fs::read_to_string(verdicts)?);
    }
    let ablation = dir.join("ablation");
    if ablation.is_dir() {
        let mut tables: Vec<PathBuf> = fs::read_dir(&ablation)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        tables.sort();
        for t in tables {
            print!("{}", fs::read_to_string(t)?);
        }
    }
    Ok(())
}
