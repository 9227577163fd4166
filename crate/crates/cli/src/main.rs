use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use perfprobe::eval::{ExperimentPlan, Knob};
use perfprobe::stage1::Engine;
use std::path::PathBuf;

mod commands;
mod layout;
mod manifest;

#[derive(Parser, Debug)]
#[command(name = "perfprobe", version, about = "Pre-silicon performance bug detection from probe IPC inference errors")]
pub struct Cli {
    /// Overrides the plan's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Experiment plan (TOML); built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate designs x workloads (or probes) x bugs into trace files.
    Simulate(SimulateArgs),
    /// Cluster workload intervals into SimPoint probes.
    Probes,
    /// Pick counters per probe from set-I bug-free traces.
    Select(SelectArgs),
    /// Train one IPC model per probe.
    Train(TrainArgs),
    /// Compute per-probe inference errors for every simulated run.
    Errors(ErrorsArgs),
    /// Fit stage-2 statistics and classify designs.
    Detect(DetectArgs),
    /// Run the full leave-one-family-out experiment.
    Experiment(ExperimentArgs),
    /// Sweep ablation knobs on the default pipeline.
    Ablate(AblateArgs),
    /// Verify a run directory and print its summary.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Preset names or design config files.
    #[arg(long = "design", value_delimiter = ',', required = true)]
    pub designs: Vec<String>,
    /// Workload or probe ids; all of them when absent.
    #[arg(long = "workload", value_delimiter = ',')]
    pub workloads: Vec<String>,
    /// Probe manifest; ids then name probes rather than whole workloads.
    #[arg(long)]
    pub probes: Option<PathBuf>,
    /// Catalog bug names to inject, or `none`.
    #[arg(long = "bug", value_delimiter = ',', default_value = "none")]
    pub bugs: Vec<String>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub probes: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub selections: Option<PathBuf>,
    /// lasso, mlp, gbt or gbt-<trees>; the plan's engine when absent.
    #[arg(long, value_parser = parse_engine)]
    pub engine: Option<Engine>,
}

#[derive(Args, Debug)]
pub struct ErrorsArgs {
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub probes: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub errors: Option<PathBuf>,
    /// Bug family kept out of stage-2 training.
    #[arg(long)]
    pub held_out: Option<u8>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Evaluate only this held-out family.
    #[arg(long)]
    pub held_out: Option<u8>,
    /// Also run the single-stage baseline.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Knobs to sweep; all when absent.
    #[arg(long = "knob", value_delimiter = ',', value_parser = parse_knob)]
    pub knobs: Vec<Knob>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directory; `--out-dir` when absent.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

fn parse_engine(s: &str) -> std::result::Result<Engine, String> {
    s.parse::<Engine>().map_err(|e| e.to_string())
}

fn parse_knob(s: &str) -> std::result::Result<Knob, String> {
    s.parse::<Knob>().map_err(|e| e.to_string())
}

pub struct RunContext {
    pub plan: ExperimentPlan,
    pub out_dir: PathBuf,
    pub config_path: Option<PathBuf>,
}

fn load_plan(cli: &Cli) -> Result<ExperimentPlan> {
    let mut plan = match &cli.config {
        Some(p) => ExperimentPlan::load(p).with_context(|| format!("loading plan {}", p.display()))?,
        None => ExperimentPlan::default(),
    };
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    plan.validate()?;
    Ok(plan)
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global().context("configuring worker pool")?;
    }
    let plan = load_plan(&cli)?;
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = RunContext { plan, out_dir: cli.out_dir.clone(), config_path: cli.config.clone() };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Probes => commands::probes(&ctx),
        Command::Select(a) => commands::select(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Errors(a) => commands::errors(&ctx, a),
        Command::Detect(a) => commands::detect(&ctx, a),
        Command::Experiment(a) => commands::experiment(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    }
}
