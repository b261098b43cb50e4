use std::fs::File;
use std::path::PathBuf;

use adlab_core::agent::PlannerMode;
use adlab_core::harness::{
    fit_regret_order, generate_trial_instance, read_curves, read_instance, replay_file,
    run_experiment, snapshot_json, ExperimentConfig, Instance,
};
use adlab_core::model::Context;
use adlab_core::planning::{best_outcome_plan, dp_policy, PlanParams};
use adlab_core::Execution;
use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "adlab",
    version,
    about = "Regret experiments for personalized ad bidding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Outcome,
    Dp,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-trial regret experiment.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Also write the learner's episodes and final estimator snapshots.
        #[arg(long)]
        emit_logs: bool,
    },
    /// Print oracle values and maximizing plans for a list of contexts.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV with header x1..xd.
        #[arg(long)]
        contexts: PathBuf,
        /// Instance snapshot; defaults to the config's trial-0 instance.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Fit the regret order of every trial and policy in a curves file.
    Fit {
        #[arg(long)]
        curve: PathBuf,
        /// Comma-separated customer indices.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
    },
    /// Replay an episode log through the estimators and write a snapshot.
    Estimate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn read_contexts(path: &PathBuf, dim: usize) -> Result<Vec<Context>> {
    let mut rdr = csv::Reader::from_reader(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let header = rdr.headers()?.clone();
    let expected: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        bail!("{}: expected header {}", path.display(), expected.join(","));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let values = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {line}", path.display()))?;
        out.push(Context::new(values));
    }
    Ok(out)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            workers,
            mode,
            emit_logs,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.planner = match m {
                    Mode::Outcome => PlannerMode::Outcome,
                    Mode::Dp => PlannerMode::Dp,
                };
            }
            cfg.validate()?;
            let (summary, _) =
                run_experiment(&cfg, Execution::from_workers(workers), &out, emit_logs)?;
            print!("{}", summary.render());
        }
        Command::Oracle {
            config,
            contexts,
            instance,
        } => {
            let cfg = load_config(config.as_ref())?;
            let Instance { model, auction, .. } = match instance {
                Some(p) => read_instance(&p).with_context(|| format!("reading {}", p.display()))?,
                None => generate_trial_instance(&cfg, 0)?,
            };
            let grid = cfg.bid_grid();
            println!("index,outcome_value,plan,dp_value");
            for (i, x) in read_contexts(&contexts, cfg.dim)?.iter().enumerate() {
                let params = PlanParams::from_truth(x, &model, &auction);
                let (plan, value) = best_outcome_plan(&params)?;
                let dp = dp_policy(&params, &grid).value;
                println!("{},{value},{plan},{dp}", i + 1);
            }
        }
        Command::Fit { curve, checkpoints } => {
            if checkpoints.is_empty() {
                bail!("--checkpoints needs at least two values");
            }
            let rows = read_curves(
                File::open(&curve).with_context(|| format!("opening {}", curve.display()))?,
            )?;
            let mut keys: Vec<(usize, String)> = rows
                .iter()
                .map(|r| (r.trial, r.policy.name().to_string()))
                .collect();
            keys.sort();
            keys.dedup();
            println!("trial,policy,alpha");
            for (trial, policy) in keys {
                let values: Vec<f64> = checkpoints
                    .iter()
                    .map(|&cp| {
                        rows.iter()
                            .find(|r| r.trial == trial && r.policy.name() == policy && r.t == cp)
                            .map(|r| r.cum_regret)
                            .with_context(|| format!("trial {trial} {policy} has no row at t={cp}"))
                    })
                    .collect::<Result<_>>()?;
                match fit_regret_order(&checkpoints, &values) {
                    Ok(a) => println!("{trial},{policy},{a}"),
                    Err(_) => println!("{trial},{policy},undefined"),
                }
            }
        }
        Command::Estimate { log, out, config } => {
            let cfg = load_config(config.as_ref())?;
            let agent = replay_file(&log, cfg.agent_config()?)?;
            std::fs::write(&out, snapshot_json(&agent.snapshot())?)
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}
