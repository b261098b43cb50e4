use serde::{Deserialize, Serialize};

use super::ThetaEstimator;
use crate::model::{Context, ThetaIndex};

/// One lost round at a fixed lag: its conversions and the conversion vector
/// whose effect it carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayObservation {
    pub conversions: f64,
    pub carried: ThetaIndex,
}

/// Two-stage MLE of one delay factor: a running ratio of observed
/// conversions to plug-in first-stage means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimator {
    pub lag: usize,
    pub numerator: f64,
    pub denominator: f64,
    pub count: u64,
}

impl DelayEstimator {
    pub fn new(lag: usize) -> Self {
        Self {
            lag,
            numerator: 0.0,
            denominator: 0.0,
            count: 0,
        }
    }

    /// Adds one observation with plug-in mean `plugin`, floored at `floor`.
    pub fn observe(&mut self, conversions: f64, plugin: f64, floor: f64) {
        self.numerator += conversions;
        self.denominator += plugin.max(floor);
        self.count += 1;
    }

    /// Consumes a customer's bucket using the conversion-vector estimates
    /// current at this customer.
    pub fn tsmle_update(
        &mut self,
        rounds: &[DelayObservation],
        x: &Context,
        thetas: &[ThetaEstimator],
        floor: f64,
    ) {
        for obs in rounds {
            let plugin = thetas[obs.carried.slot()].mean(x);
            self.observe(obs.conversions, plugin, floor);
        }
    }

    /// `None` until some plug-in mass has been accumulated.
    pub fn estimate(&self) -> Option<f64> {
        (self.denominator > 0.0).then(|| self.numerator / self.denominator)
    }
}
