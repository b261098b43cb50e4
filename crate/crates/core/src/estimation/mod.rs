//! Online estimation stack: data splitting, truncated online Newton updates
//! for conversion vectors, two-stage MLE for delay factors, ridge regression
//! and progressive variance for the HOB law, and the confidence constants.

mod auction;
mod bank;
mod confidence;
mod delay;
mod split;
mod theta;

pub use auction::AuctionEstimator;
pub use bank::EstimatorBank;
pub use confidence::{
    delay_radius, exploration_block_size, theta_gamma, truncation_threshold, ConfidenceConfig,
};
pub use delay::{DelayEstimator, DelayObservation};
pub use split::{split_episode, SplitDatasets};
pub use theta::{project_to_ball, ThetaEstimator};

use nalgebra::{DMatrix, DVector};

/// Solves `a z = rhs` for a symmetric positive-definite `a` stored row-major.
pub(crate) fn spd_solve(a: &[f64], rhs: &[f64]) -> DVector<f64> {
    let n = rhs.len();
    let m = DMatrix::from_row_slice(n, n, a);
    let b = DVector::from_column_slice(rhs);
    m.lu().solve(&b).unwrap_or_else(|| DVector::zeros(n))
}

/// Adds `weight * x x^T` to a row-major square matrix.
pub(crate) fn add_outer(a: &mut [f64], x: &[f64], weight: f64) {
    let n = x.len();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] += weight * x[i] * x[j];
        }
    }
}

pub(crate) fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = scale;
    }
    a
}
