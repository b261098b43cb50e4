use serde::{Deserialize, Serialize};

use crate::environment::EpisodeLog;
use crate::model::{Recency, ThetaIndex};

/// Per-episode routing of rounds (1-based) to estimation buckets.
///
/// `W` buckets feed the conversion-vector estimators and `D` buckets the delay
/// estimators. Together they partition the rounds of the episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDatasets {
    /// Indexed by [`ThetaIndex::slot`].
    pub win: Vec<Vec<usize>>,
    /// `delay[l - 1]` holds the lost rounds at lag `l`.
    pub delay: Vec<Vec<usize>>,
}

impl SplitDatasets {
    pub fn win_bucket(&self, index: ThetaIndex) -> &[usize] {
        &self.win[index.slot()]
    }

    pub fn delay_bucket(&self, lag: usize) -> &[usize] {
        &self.delay[lag - 1]
    }
}

pub fn split_episode(log: &EpisodeLog) -> SplitDatasets {
    let horizon = log.records.len();
    let mut win = vec![Vec::new(); ThetaIndex::count(horizon)];
    let mut delay = vec![Vec::new(); horizon.saturating_sub(1)];
    for rec in &log.records {
        match (rec.state.since_last, rec.won) {
            (_, true) => win[rec.state.win_index().slot()].push(rec.h),
            (Recency::Never, false) => win[ThetaIndex::NaturalDemand.slot()].push(rec.h),
            (Recency::Lag(l), false) => delay[l - 1].push(rec.h),
        }
    }
    SplitDatasets { win, delay }
}
