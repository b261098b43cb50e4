use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, PolicyKind};
use super::summary::SummaryStats;
use super::trial::{run_trials, Instance, TrialOutcome};
use crate::agent::{Agent, AgentConfig, AgentSnapshot};
use crate::environment::{read_episode_csv, write_episode_csv, EpisodeLog};
use crate::error::{Error, Result};
use crate::parallel::Execution;

/// One row of `curves.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub trial: usize,
    pub t: usize,
    pub policy: PolicyKind,
    pub cum_regret: f64,
    pub cum_expected_regret: f64,
}

const CURVE_HEADER: [&str; 5] = ["trial", "t", "policy", "cum_regret", "cum_expected_regret"];

pub fn curve_rows(trials: &[TrialOutcome]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for trial in trials {
        for curve in &trial.curves {
            for (i, (&r, &e)) in curve.realized.iter().zip(&curve.expected).enumerate() {
                rows.push(CurveRow {
                    trial: trial.trial,
                    t: i + 1,
                    policy: curve.policy,
                    cum_regret: r,
                    cum_expected_regret: e,
                });
            }
        }
    }
    rows
}

pub fn write_curves<W: Write>(writer: W, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVE_HEADER)?;
    for row in rows {
        w.write_record([
            row.trial.to_string(),
            row.t.to_string(),
            row.policy.name().to_string(),
            row.cum_regret.to_string(),
            row.cum_expected_regret.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `curves.csv`. The expected-regret column is optional; when absent
/// it reads as NaN.
pub fn read_curves<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let schema = |line: u64, message: String| Error::Schema { line, message };
    let has_expected = header.len() == 5;
    if !(header.len() == 4 || has_expected)
        || header
            .iter()
            .ne(CURVE_HEADER.iter().take(header.len()).copied())
    {
        return Err(schema(1, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(schema(
                line,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        let int = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|e| schema(line, format!("{}: {e}", CURVE_HEADER[i])))
        };
        let float = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| schema(line, format!("{}: {e}", CURVE_HEADER[i])))
        };
        rows.push(CurveRow {
            trial: int(0)?,
            t: int(1)?,
            policy: rec[2]
                .parse()
                .map_err(|e: Error| schema(line, e.to_string()))?,
            cum_regret: float(3)?,
            cum_expected_regret: if has_expected { float(4)? } else { f64::NAN },
        });
    }
    Ok(rows)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn snapshot_json(snapshot: &AgentSnapshot) -> Result<String> {
    Ok(serde_json::to_string_pretty(snapshot)? + "\n")
}

pub fn read_snapshot(path: &Path) -> Result<AgentSnapshot> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub curves: PathBuf,
    pub summary: PathBuf,
    pub instances: Vec<PathBuf>,
    pub episodes: Vec<PathBuf>,
    pub agents: Vec<PathBuf>,
}

/// Runs all trials, writes the outputs under `out` and returns the summary.
///
/// Files: `curves.csv`, `summary.txt`, `instance_{k}.snapshot` per trial and,
/// with `emit_logs`, `episodes_{k}.csv` and `agent_{k}.snapshot` holding the
/// learner's episodes and final estimator state.
pub fn run_experiment(
    config: &ExperimentConfig,
    execution: Execution,
    out: &Path,
    emit_logs: bool,
) -> Result<(SummaryStats, RunOutputs)> {
    let trials = run_trials(config, execution, emit_logs)?;
    let summary = SummaryStats::from_trials(config, &trials)?;
    fs::create_dir_all(out)?;
    let mut outputs = RunOutputs {
        curves: out.join("curves.csv"),
        summary: out.join("summary.txt"),
        instances: Vec::new(),
        episodes: Vec::new(),
        agents: Vec::new(),
    };
    write_curves(
        BufWriter::new(File::create(&outputs.curves)?),
        &curve_rows(&trials),
    )?;
    fs::write(&outputs.summary, summary.render())?;
    for trial in &trials {
        let path = out.join(format!("instance_{}.snapshot", trial.trial));
        write_json(&path, &trial.instance)?;
        outputs.instances.push(path);
        if let Some(logs) = &trial.logs {
            let path = out.join(format!("episodes_{}.csv", trial.trial));
            write_episode_csv(BufWriter::new(File::create(&path)?), logs)?;
            outputs.episodes.push(path);
        }
        if emit_logs {
            if let Some(agent) = &trial.agent {
                let path = out.join(format!("agent_{}.snapshot", trial.trial));
                fs::write(&path, snapshot_json(agent)?)?;
                outputs.agents.push(path);
            }
        }
    }
    Ok((summary, outputs))
}

/// Feeds logged episodes through a fresh agent in customer order.
pub fn replay_estimation(logs: &[EpisodeLog], config: AgentConfig) -> Result<Agent> {
    let mut agent = Agent::new(config);
    if let Some(first) = logs.first() {
        if let Some(other) = logs.iter().find(|l| l.trial != first.trial) {
            return Err(Error::Domain(format!(
                "log mixes trials {} and {}",
                first.trial, other.trial
            )));
        }
    }
    for log in logs {
        agent.update(log)?;
    }
    Ok(agent)
}

/// Replays an episode CSV file.
pub fn replay_file(path: &Path, config: AgentConfig) -> Result<Agent> {
    let forced = config.bid_mode == crate::environment::BidMode::ForcedOutcome;
    let logs = read_episode_csv(File::open(path)?, forced)?;
    replay_estimation(&logs, config)
}
