use serde::{Deserialize, Serialize};

use super::{AuctionEstimator, DelayEstimator, ThetaEstimator};
use crate::model::ThetaIndex;

/// Every estimator an agent keeps. Serializes to the snapshot format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBank {
    pub dim: usize,
    pub horizon: usize,
    /// In [`ThetaIndex::slot`] order.
    pub theta: Vec<ThetaEstimator>,
    /// Lags `1..horizon`.
    pub delay: Vec<DelayEstimator>,
    /// Rounds `1..=horizon`.
    pub auction: Vec<AuctionEstimator>,
}

impl EstimatorBank {
    pub fn new(dim: usize, horizon: usize) -> Self {
        Self {
            dim,
            horizon,
            theta: ThetaIndex::all(horizon)
                .map(|i| ThetaEstimator::new(i, dim))
                .collect(),
            delay: (1..horizon).map(DelayEstimator::new).collect(),
            auction: (1..=horizon)
                .map(|h| AuctionEstimator::new(h, dim))
                .collect(),
        }
    }

    pub fn theta(&self, index: ThetaIndex) -> &ThetaEstimator {
        &self.theta[index.slot()]
    }

    pub fn delay(&self, lag: usize) -> &DelayEstimator {
        &self.delay[lag - 1]
    }

    pub fn auction(&self, h: usize) -> &AuctionEstimator {
        &self.auction[h - 1]
    }
}
