use serde::{Deserialize, Serialize};

use super::{add_outer, identity, spd_solve};
use crate::model::{dot, Context};

/// Ridge regression of `log m_h` on the context for one round, plus the
/// progressive residual sum behind the scale estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionEstimator {
    pub round: usize,
    /// Row-major `sum x x^T + lambda I`.
    pub gram: Vec<f64>,
    /// `sum x log m`.
    pub moment: Vec<f64>,
    /// Squared residuals against the coefficient available when each sample arrived.
    pub residual_sq_sum: f64,
    pub count: u64,
}

impl AuctionEstimator {
    pub const RIDGE: f64 = 1.0;

    pub fn new(round: usize, dim: usize) -> Self {
        Self {
            round,
            gram: identity(dim, Self::RIDGE),
            moment: vec![0.0; dim],
            residual_sq_sum: 0.0,
            count: 0,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        spd_solve(&self.gram, &self.moment).as_slice().to_vec()
    }

    pub fn ridge_update(&mut self, x: &Context, log_hob: f64) {
        let residual = log_hob - x.dot(&self.beta());
        self.residual_sq_sum += residual * residual;
        add_outer(&mut self.gram, x.as_slice(), 1.0);
        for (m, xi) in self.moment.iter_mut().zip(x.as_slice()) {
            *m += xi * log_hob;
        }
        self.count += 1;
    }

    /// Root mean progressive squared residual, `None` before any sample.
    pub fn sigma(&self) -> Option<f64> {
        (self.count > 0).then(|| (self.residual_sq_sum / self.count as f64).sqrt())
    }

    /// Predicted `log m` mean for a context.
    pub fn predict(&self, x: &Context) -> f64 {
        dot(x.as_slice(), &self.beta())
    }
}
