//! Pairs bootstrap around the DR estimators.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, FailureBreakdown, Result};
use crate::estimators::{estimate, Estimator, IdentificationCheck, ModelSpec, StudyData};
use crate::numerics::{std_dev, RngHandle};

pub const MIN_REPLICATIONS: usize = 100;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub estimator: Estimator,
    /// Estimate on the original sample.
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Successful replicates in replicate order.
    pub replicates: Vec<f64>,
    pub n_failed: usize,
    pub failures: FailureBreakdown,
}

/// Linear-interpolation quantile of sorted values (type 7).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resamples rows with replacement `b` times and re-runs the whole estimator,
/// copula construction included, on each resample. Replicate `k` draws from
/// substream `k` of `seed`.
///
/// The identification check applies to the original sample only; resamples
/// of an identified sample are not re-tested.
pub fn bootstrap_estimate(
    data: &StudyData,
    spec: &ModelSpec,
    estimator: Estimator,
    b: usize,
    seed: u64,
    check: IdentificationCheck,
) -> Result<BootstrapResult> {
    if b < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "bootstrap needs at least {MIN_REPLICATIONS} replications, got {b}"
        )));
    }
    let point = estimate(data, spec, estimator, check)?.ate;
    let n = data.n();
    let base = RngHandle::new(seed);
    let outcomes: Vec<Result<f64>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = base.substream(k as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
            estimate(&data.resample(&idx), spec, estimator, IdentificationCheck::Skip).map(|a| a.ate)
        })
        .collect();

    let mut replicates = Vec::with_capacity(b);
    let mut failures = FailureBreakdown::default();
    for o in outcomes {
        match o {
            Ok(v) => replicates.push(v),
            Err(e) => failures.record(&e),
        }
    }
    let n_failed = failures.total();
    if n_failed as f64 > MAX_FAILURE_SHARE * b as f64 || replicates.len() < 2 {
        return Err(Error::InferenceUnreliable {
            failed: n_failed,
            requested: b,
            breakdown: failures,
        });
    }
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        estimator,
        point,
        se: std_dev(&replicates),
        ci_low: quantile_sorted(&sorted, 0.025),
        ci_high: quantile_sorted(&sorted, 0.975),
        replicates,
        n_failed,
        failures,
    })
}
