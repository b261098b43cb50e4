//! Multi-trial regret experiments: configuration, trial runner, summary
//! statistics, file outputs and log replay.

mod config;
mod io;
mod summary;
mod trial;

pub use config::{scaled_checkpoints, BidSemantics, BoundsConfig, ExperimentConfig, PolicyKind};
pub use io::{
    curve_rows, read_curves, read_instance, read_snapshot, replay_estimation, replay_file,
    run_experiment, snapshot_json, write_curves, CurveRow, RunOutputs,
};
pub use summary::{fit_regret_order, mean_and_sd, PolicySummary, SummaryStats};
pub use trial::{
    customer_context, generate_trial_instance, run_trial, run_trials, Instance, OracleGap,
    RegretCurve, TrialOutcome,
};
