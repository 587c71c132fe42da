//! Adjusted empirical CDF and the Gaussian-copula control-function term.
//!
//! The adjusted ECDF
//!
//! ```text
//! F(x) = 1/(2n) + (n-1)/n^2 * #{X_i <= x}
//! ```
//!
//! never reaches 0 or 1, so `Phi^-1(F(X_i))` is always finite. Ties share a
//! value because the count uses `<=`.

use crate::error::{Error, Result};
use crate::numerics::norm_quantile;

/// Adjusted ECDF fitted to a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfModel {
    sorted: Vec<f64>,
}

impl EcdfModel {
    pub fn fit(sample: &[f64]) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::Degenerate(format!(
                "adjusted ECDF needs at least 2 observations, got {}",
                sample.len()
            )));
        }
        if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sample value at index {i} is not finite")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of fitted observations `<= x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.sorted.partition_point(|v| *v <= x)
    }

    fn from_count(&self, count: usize) -> f64 {
        let n = self.sorted.len() as f64;
        0.5 / n + (n - 1.0) / (n * n) * count as f64
    }

    /// Evaluates the adjusted ECDF. Points outside the sample range land on
    /// the interior endpoints `1/(2n)` and `1/(2n) + (n-1)/n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.from_count(self.count_le(x))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.from_count(0), self.from_count(self.sorted.len()))
    }
}

/// `Phi^-1(F(X_i))` for every observation, with `F` fitted on the sample itself.
pub fn copula_term(sample: &[f64]) -> Result<Vec<f64>> {
    let model = EcdfModel::fit(sample)?;
    let n = sample.len();
    // Rank with ties resolved upward: each value gets the count of entries <= it.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sample[a].total_cmp(&sample[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sample[order[j]] == sample[order[i]] {
            j += 1;
        }
        let value = norm_quantile(model.from_count(j));
        for &idx in &order[i..j] {
            out[idx] = value;
        }
        i = j;
    }
    Ok(out)
}
