//! Normality tests that gate copula identification.
//!
//! Both tests use the composite null: mean and variance are estimated from
//! the sample, and p-values come from the usual case-3 approximations
//! (D'Agostino & Stephens) for the modified statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{mean, norm_cdf_both, norm_quantile, sample_skewness, std_dev};

pub const MIN_NORMALITY_N: usize = 8;

/// Significance level below which a test is taken to reject normality.
pub const IDENTIFICATION_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub anderson_darling_stat: f64,
    pub anderson_darling_p: f64,
    pub cramer_von_mises_stat: f64,
    pub cramer_von_mises_p: f64,
    pub skewness: f64,
    pub n: usize,
    /// Neither test rejects normality at 5%.
    pub weak_identification: bool,
}

// Sorted standardized sample, validated.
fn standardized_sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.len() < MIN_NORMALITY_N {
        return Err(Error::Degenerate(format!(
            "normality tests need at least {MIN_NORMALITY_N} observations, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sample contains non-finite values".into()));
    }
    let m = mean(sample);
    let s = std_dev(sample);
    if !(s > f64::EPSILON * m.abs().max(1.0)) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let mut z: Vec<f64> = sample.iter().map(|v| (v - m) / s).collect();
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// Anderson-Darling test. Returns the modified statistic
/// `A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)` and its p-value.
pub fn anderson_darling_normality(sample: &[f64]) -> Result<TestResult> {
    let z = standardized_sorted(sample)?;
    let n = z.len();
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        // ln F(z_i) + ln(1 - F(z_{n+1-i})), both tails taken directly.
        let (lower_i, _) = norm_cdf_both(z[i]);
        let (_, upper_j) = norm_cdf_both(z[n - 1 - i]);
        let li = lower_i.max(f64::MIN_POSITIVE).ln();
        let uj = upper_j.max(f64::MIN_POSITIVE).ln();
        acc += (2.0 * i as f64 + 1.0) * (li + uj);
    }
    let a2 = -nf - acc / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a < 0.2 {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    } else if a < 0.34 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else if a < 0.6 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a < 153.467 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else {
        0.0
    };
    Ok(TestResult {
        statistic: a,
        p_value: p.clamp(0.0, 1.0),
    })
}

/// Cramer-von Mises test. Returns the modified statistic
/// `W*^2 = W^2 (1 + 0.5/n)` and its p-value.
pub fn cramer_von_mises_normality(sample: &[f64]) -> Result<TestResult> {
    let z = standardized_sorted(sample)?;
    let nf = z.len() as f64;
    let mut w2 = 1.0 / (12.0 * nf);
    for (i, zi) in z.iter().enumerate() {
        let d = norm_cdf_both(*zi).0 - (2.0 * i as f64 + 1.0) / (2.0 * nf);
        w2 += d * d;
    }
    let w = w2 * (1.0 + 0.5 / nf);
    let p = if w < 0.0275 {
        1.0 - (-13.953 + 775.5 * w - 12_542.61 * w * w).exp()
    } else if w < 0.051 {
        1.0 - (-5.903 + 179.546 * w - 1_515.29 * w * w).exp()
    } else if w < 0.092 {
        (0.886 - 31.62 * w + 10.897 * w * w).exp()
    } else if w < 1.1 {
        (1.111 - 34.242 * w + 12.832 * w * w).exp()
    } else {
        7.37e-10
    };
    Ok(TestResult {
        statistic: w,
        p_value: p.clamp(0.0, 1.0),
    })
}

pub fn normality_report(sample: &[f64]) -> Result<NormalityReport> {
    let ad = anderson_darling_normality(sample)?;
    let cvm = cramer_von_mises_normality(sample)?;
    let skewness = sample_skewness(sample)?;
    Ok(NormalityReport {
        anderson_darling_stat: ad.statistic,
        anderson_darling_p: ad.p_value,
        cramer_von_mises_stat: cvm.statistic,
        cramer_von_mises_p: cvm.p_value,
        skewness,
        n: sample.len(),
        weak_identification: ad.p_value >= IDENTIFICATION_ALPHA
            && cvm.p_value >= IDENTIFICATION_ALPHA,
    })
}

/// Equal-width histogram with Sturges' bin count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

pub fn histogram(sample: &[f64]) -> Vec<HistogramBin> {
    if sample.is_empty() {
        return Vec::new();
    }
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = ((sample.len() as f64).log2().ceil() as usize + 1).max(1);
    if hi == lo {
        return vec![HistogramBin {
            low: lo,
            high: hi,
            count: sample.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in sample {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            low: lo + k as f64 * width,
            high: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count,
        })
        .collect()
}

/// Normal Q-Q pairs `(theoretical, sample)` using Blom plotting positions
/// `(i - 3/8) / (n + 1/4)`. One pair per observation, sorted.
pub fn qq_pairs(sample: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (norm_quantile((i as f64 + 1.0 - 0.375) / (n + 0.25)), v))
        .collect()
}
