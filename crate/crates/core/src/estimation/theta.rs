use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{add_outer, identity, spd_solve};
use crate::model::{dot, Context, ThetaIndex};

/// Truncated online Newton estimator of one conversion vector.
///
/// Keeps `V = I + 1/2 sum x x^T` over every consumed observation and the
/// current estimate, which always lies in the `theta_bound` ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimator {
    pub index: ThetaIndex,
    /// Row-major `dim x dim` design matrix.
    pub v: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub updates: u64,
}

impl ThetaEstimator {
    pub fn new(index: ThetaIndex, dim: usize) -> Self {
        Self {
            index,
            v: identity(dim, 1.0),
            theta_hat: vec![0.0; dim],
            updates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn mean(&self, x: &Context) -> f64 {
        x.dot(&self.theta_hat)
    }

    /// `V^{-1} x`.
    pub fn solve(&self, x: &[f64]) -> DVector<f64> {
        spd_solve(&self.v, x)
    }

    /// `||x||_{V^{-1}}`.
    pub fn inverse_norm(&self, x: &[f64]) -> f64 {
        dot(x, self.solve(x).as_slice()).max(0.0).sqrt()
    }

    /// Consumes one observation `y` at context `x`.
    ///
    /// `V` grows first; the truncation test then uses the updated `V`.
    pub fn crtm_update(&mut self, x: &Context, y: f64, truncation: f64, theta_bound: f64) {
        let x = x.as_slice();
        add_outer(&mut self.v, x, 0.5);
        let v_inv_x = self.solve(x);
        let leverage = dot(x, v_inv_x.as_slice()).max(0.0).sqrt();
        let y_kept = if leverage * y.abs() <= truncation {
            y
        } else {
            0.0
        };
        let residual = dot(x, &self.theta_hat) - y_kept;
        // theta - V^{-1} (residual * x)
        let step = DVector::from_column_slice(&self.theta_hat) - v_inv_x * residual;
        let projected = project_to_ball(&step, &self.v, theta_bound);
        self.theta_hat = projected.as_slice().to_vec();
        self.updates += 1;
    }

    /// Maximizer of `<x, theta>` over `||theta - theta_hat||_V^2 <= gamma`.
    pub fn optimistic_theta(&self, x: &Context, gamma: f64) -> DVector<f64> {
        let v_inv_x = self.solve(x.as_slice());
        let norm = dot(x.as_slice(), v_inv_x.as_slice()).max(0.0).sqrt();
        let center = DVector::from_column_slice(&self.theta_hat);
        if norm == 0.0 || gamma <= 0.0 {
            return center;
        }
        center + v_inv_x * (gamma.sqrt() / norm)
    }

    /// Optimistic conversion mean `<x, theta_hat> + sqrt(gamma) ||x||_{V^{-1}}`,
    /// floored at `floor`.
    pub fn optimistic_mean(&self, x: &Context, gamma: f64, floor: f64) -> f64 {
        let bonus = if gamma > 0.0 {
            gamma.sqrt() * self.inverse_norm(x.as_slice())
        } else {
            0.0
        };
        (self.mean(x) + bonus).max(floor)
    }
}

/// Projection of `z` onto `{||theta||_2 <= radius}` in the metric of `v`.
///
/// Outside the ball the minimizer is `(V + lambda I)^{-1} V z` with the norm
/// equal to `radius`; `lambda` is bracketed by doubling and bisected to 1e-10
/// (relative once it exceeds 1). The feasible end of the bracket is returned.
pub fn project_to_ball(z: &DVector<f64>, v: &[f64], radius: f64) -> DVector<f64> {
    if z.norm() <= radius {
        return z.clone();
    }
    let n = z.len();
    let vm = DMatrix::from_row_slice(n, n, v);
    let vz = &vm * z;
    let at = |lambda: f64| -> DVector<f64> {
        let mut shifted = vm.clone();
        for i in 0..n {
            shifted[(i, i)] += lambda;
        }
        match shifted.clone().cholesky() {
            Some(c) => c.solve(&vz),
            None => shifted.lu().solve(&vz).unwrap_or_else(|| DVector::zeros(n)),
        }
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut candidate = at(hi);
    while candidate.norm() > radius {
        lo = hi;
        hi *= 2.0;
        candidate = at(hi);
    }
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let trial = at(mid);
        if trial.norm() > radius {
            lo = mid;
        } else {
            hi = mid;
            candidate = trial;
        }
    }
    candidate
}
