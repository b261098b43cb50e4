use std::fmt::Write as _;

use super::config::{ExperimentConfig, PolicyKind};
use super::trial::TrialOutcome;
use crate::error::{Error, Result};

/// OLS slope of `ln(value)` on `ln(t)`.
pub fn fit_regret_order(checkpoints: &[usize], values: &[f64]) -> Result<f64> {
    if checkpoints.len() != values.len() || checkpoints.len() < 2 {
        return Err(Error::Domain(
            "need at least two checkpoints with one value each".into(),
        ));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "regret order undefined: checkpoint value {v}"
        )));
    }
    let xs: Vec<f64> = checkpoints.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("checkpoints must not all coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Cross-trial mean and sample standard deviation, summed in trial order.
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    /// Mean realized cumulative regret at each checkpoint.
    pub means: Vec<f64>,
    /// `half_width * sd` at each checkpoint.
    pub half_widths: Vec<f64>,
    /// Mean expected cumulative regret at each checkpoint.
    pub expected_means: Vec<f64>,
    /// Order fitted on the mean curve.
    pub alpha: Option<f64>,
    /// Mean of the per-trial fitted orders over trials where the fit is defined.
    pub alpha_per_trial: Option<f64>,
    pub undefined_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub customers: usize,
    pub trials: usize,
    pub half_width: f64,
    pub checkpoints: Vec<usize>,
    pub policies: Vec<PolicySummary>,
    pub oracle_gap_samples: usize,
    pub oracle_gap_mean: f64,
    pub oracle_gap_max_abs: f64,
    /// Smallest delay-bucket size at the end of exploration over all trials.
    pub exploration_min_count: Option<u64>,
}

impl SummaryStats {
    pub fn policy(&self, policy: PolicyKind) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    pub fn from_trials(config: &ExperimentConfig, trials: &[TrialOutcome]) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::Domain("no trials to summarize".into()));
        }
        let checkpoints = config.checkpoints();
        let mut policies = Vec::with_capacity(config.policies.len());
        for &policy in &config.policies {
            let curves = trials
                .iter()
                .map(|t| {
                    t.curve(policy).ok_or_else(|| {
                        Error::Domain(format!("trial {} lacks a {policy} curve", t.trial))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut means = Vec::with_capacity(checkpoints.len());
            let mut half_widths = Vec::with_capacity(checkpoints.len());
            let mut expected_means = Vec::with_capacity(checkpoints.len());
            for &cp in &checkpoints {
                let at: Vec<f64> = curves.iter().map(|c| c.realized[cp - 1]).collect();
                let (m, sd) = mean_and_sd(&at);
                means.push(m);
                half_widths.push(config.half_width * sd);
                let exp: Vec<f64> = curves.iter().map(|c| c.expected[cp - 1]).collect();
                expected_means.push(mean_and_sd(&exp).0);
            }
            let per_trial: Vec<f64> = curves
                .iter()
                .filter_map(|c| {
                    let v: Vec<f64> = checkpoints.iter().map(|&cp| c.realized[cp - 1]).collect();
                    fit_regret_order(&checkpoints, &v).ok()
                })
                .collect();
            policies.push(PolicySummary {
                policy,
                alpha: fit_regret_order(&checkpoints, &means).ok(),
                alpha_per_trial: (!per_trial.is_empty()).then(|| mean_and_sd(&per_trial).0),
                undefined_trials: curves.len() - per_trial.len(),
                means,
                half_widths,
                expected_means,
            });
        }

        let samples: usize = trials.iter().map(|t| t.oracle_gap.samples).sum();
        let gap_sum: f64 = trials
            .iter()
            .map(|t| t.oracle_gap.mean * t.oracle_gap.samples as f64)
            .sum();
        Ok(Self {
            customers: config.customers,
            trials: trials.len(),
            half_width: config.half_width,
            checkpoints,
            policies,
            oracle_gap_samples: samples,
            oracle_gap_mean: if samples > 0 {
                gap_sum / samples as f64
            } else {
                0.0
            },
            oracle_gap_max_abs: trials
                .iter()
                .map(|t| t.oracle_gap.max_abs)
                .fold(0.0, f64::max),
            exploration_min_count: trials
                .iter()
                .filter_map(|t| t.exploration_counts.as_ref())
                .flat_map(|c| c.iter().copied())
                .min(),
        })
    }

    /// Plain-text report: checkpoint table with half-width intervals, fitted
    /// orders and diagnostics.
    pub fn render(&self) -> String {
        let fmt_alpha =
            |a: Option<f64>| a.map_or_else(|| "undefined".to_string(), |a| format!("{a:.3}"));
        let col = 30;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "customers {}  trials {}  interval mean +/- {} sd",
            self.customers, self.trials, self.half_width
        );
        let _ = writeln!(out);
        let _ = write!(out, "{:>8}", "t");
        for p in &self.policies {
            let _ = write!(out, "  {:>col$}", p.policy.name());
        }
        let _ = writeln!(out);
        for (i, cp) in self.checkpoints.iter().enumerate() {
            let _ = write!(out, "{cp:>8}");
            for p in &self.policies {
                let cell = format!(
                    "{:.1} [{:.1}, {:.1}]",
                    p.means[i],
                    p.means[i] - p.half_widths[i],
                    p.means[i] + p.half_widths[i]
                );
                let _ = write!(out, "  {cell:>col$}");
            }
            let _ = writeln!(out);
        }
        let _ = write!(out, "{:>8}", "alpha");
        for p in &self.policies {
            let _ = write!(out, "  {:>col$}", fmt_alpha(p.alpha));
        }
        let _ = writeln!(out);
        let _ = writeln!(out);
        let _ = writeln!(out, "per-trial fitted order (mean over defined trials):");
        for p in &self.policies {
            let _ = writeln!(
                out,
                "  {:<12} {}  ({} undefined)",
                p.policy.name(),
                fmt_alpha(p.alpha_per_trial),
                p.undefined_trials
            );
        }
        let _ = writeln!(out, "expected-reward regret at checkpoints:");
        for p in &self.policies {
            let cells: Vec<String> = p.expected_means.iter().map(|v| format!("{v:.1}")).collect();
            let _ = writeln!(out, "  {:<12} {}", p.policy.name(), cells.join("  "));
        }
        let _ = writeln!(
            out,
            "oracle gap (outcome minus grid DP): mean {:.6}, max |gap| {:.6} over {} customers",
            self.oracle_gap_mean, self.oracle_gap_max_abs, self.oracle_gap_samples
        );
        match self.exploration_min_count {
            Some(c) => {
                let _ = writeln!(out, "smallest delay bucket after exploration: {c}");
            }
            None => {
                let _ = writeln!(out, "smallest delay bucket after exploration: n/a");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_laws() {
        let ts = [500, 5000, 10_000, 15_000, 20_000];
        let lin: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let root: Vec<f64> = ts.iter().map(|&t| (t as f64).sqrt()).collect();
        assert!((fit_regret_order(&ts, &lin).unwrap() - 1.0).abs() < 1e-12);
        assert!((fit_regret_order(&ts, &root).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_is_undefined() {
        assert!(fit_regret_order(&[1, 2], &[1.0, 0.0]).is_err());
        assert!(fit_regret_order(&[1, 2], &[-1.0, 2.0]).is_err());
        assert!(fit_regret_order(&[1], &[1.0]).is_err());
    }

    #[test]
    fn sample_sd() {
        let (m, sd) = mean_and_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_sd(&[7.0]), (7.0, 0.0));
    }
}
