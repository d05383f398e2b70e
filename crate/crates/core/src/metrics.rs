//! Per-trial scoring and Monte Carlo aggregation (probability of resolution, RMSE).

use crate::array_model::Doa;
use crate::estimator::{MusicResult, SearchGrid};

/// Error charged to a source that was not matched by any estimate, degrees.
pub const MISS_PENALTY_DEG: f64 = 180.0;

/// How close a matched estimate must be for the trial to count as resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Half the smallest pairwise separation of the true directions, or
    /// `single_source_deg` when there is only one source.
    HalfSeparation { single_source_deg: f64 },
    /// Fixed threshold in degrees.
    Fixed { deg: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::HalfSeparation {
            single_source_deg: 2.0,
        }
    }
}

/// Scored outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub estimates: Vec<Doa>,
    /// Per true source: absolute error in degrees of its matched estimate,
    /// `None` when unmatched.
    pub errors_deg: Vec<Option<f64>>,
    pub resolved: bool,
}

fn angular_error_deg(a: Doa, b: Doa, with_elevation: bool) -> f64 {
    let dt = (a.theta - b.theta).to_degrees();
    if with_elevation {
        let dp = (a.phi - b.phi).to_degrees();
        dt.hypot(dp)
    } else {
        dt.abs()
    }
}

fn threshold_deg(truth: &[Doa], policy: ThresholdPolicy, with_elevation: bool) -> f64 {
    match policy {
        ThresholdPolicy::Fixed { deg } => deg,
        ThresholdPolicy::HalfSeparation { single_source_deg } => {
            let mut min_sep = f64::INFINITY;
            for (i, a) in truth.iter().enumerate() {
                for b in &truth[i + 1..] {
                    min_sep = min_sep.min(angular_error_deg(*a, *b, with_elevation));
                }
            }
            if min_sep.is_finite() {
                min_sep / 2.0
            } else {
                single_source_deg
            }
        }
    }
}

/// Greedy one-to-one nearest-neighbour matching of estimates to truth.
///
/// Returns, per true source, the index of its matched estimate.
pub fn match_estimates(estimates: &[Doa], truth: &[Doa], with_elevation: bool) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(estimates.len() * truth.len());
    for (e, est) in estimates.iter().enumerate() {
        for (t, tr) in truth.iter().enumerate() {
            pairs.push((angular_error_deg(*est, *tr, with_elevation), e, t));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut used = vec![false; estimates.len()];
    let mut matched = vec![None; truth.len()];
    for (_, e, t) in pairs {
        if !used[e] && matched[t].is_none() {
            used[e] = true;
            matched[t] = Some(e);
        }
    }
    matched
}

/// Matches the peaks of `result` to `truth` and decides resolution.
///
/// Resolved means K peaks were found and every matched error is within the
/// policy threshold. Errors are azimuth-only on azimuth grids and Euclidean
/// in (θ, φ) on lattices.
pub fn resolve_and_score(result: &MusicResult, truth: &[Doa], policy: ThresholdPolicy) -> TrialOutcome {
    let with_elevation = matches!(result.grid, SearchGrid::Lattice { .. });
    score_estimates(&result.estimates, truth, policy, with_elevation)
}

pub fn score_estimates(estimates: &[Doa], truth: &[Doa], policy: ThresholdPolicy, with_elevation: bool) -> TrialOutcome {
    let matched = match_estimates(estimates, truth, with_elevation);
    let errors_deg: Vec<Option<f64>> = matched
        .iter()
        .zip(truth)
        .map(|(m, t)| m.map(|e| angular_error_deg(estimates[e], *t, with_elevation)))
        .collect();
    let tau = threshold_deg(truth, policy, with_elevation);
    let resolved = !truth.is_empty()
        && estimates.len() == truth.len()
        && errors_deg.iter().all(|e| matches!(e, Some(v) if *v <= tau));
    TrialOutcome {
        estimates: estimates.to_vec(),
        errors_deg,
        resolved,
    }
}

/// Monte Carlo summary over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    /// Probability of resolution.
    pub pr: f64,
    pub rmse_deg: f64,
}

/// PR and RMSE over all trials; unmatched sources count as 180°, and PR = 0
/// reports RMSE = 180° exactly.
pub fn aggregate(outcomes: &[TrialOutcome]) -> Aggregate {
    let trials = outcomes.len();
    if trials == 0 {
        return Aggregate {
            trials,
            pr: 0.0,
            rmse_deg: MISS_PENALTY_DEG,
        };
    }
    let resolved = outcomes.iter().filter(|o| o.resolved).count();
    let pr = resolved as f64 / trials as f64;
    if resolved == 0 {
        return Aggregate {
            trials,
            pr,
            rmse_deg: MISS_PENALTY_DEG,
        };
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for o in outcomes {
        for e in &o.errors_deg {
            let v = e.unwrap_or(MISS_PENALTY_DEG);
            sum += v * v;
            count += 1;
        }
    }
    Aggregate {
        trials,
        pr,
        rmse_deg: if count == 0 { 0.0 } else { (sum / count as f64).sqrt() },
    }
}
