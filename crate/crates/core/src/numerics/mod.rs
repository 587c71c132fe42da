//! Special functions, dense linear algebra and seeded sampling.

mod linalg;
mod rng;
mod special;

pub use linalg::{cholesky, cholesky_semidefinite, cholesky_solve, qr_least_squares, LeastSquares, Matrix};
pub use rng::RngHandle;
pub use special::{
    chi2_cdf, chi2_pdf, chi2_quantile, chi2_quantile_of_normal_score, chi2_quantile_upper,
    inv_mills, ln_gamma, log_norm_cdf, norm_cdf, norm_cdf_both, norm_pdf, norm_quantile,
    reg_gamma, std_normal_cdf, std_normal_quantile,
};

use crate::error::{Error, Result};

/// Draws `n` rows from `N(0, L L^T)` given the lower factor `L`.
pub fn mvn_sample(chol_lower: &Matrix, n: usize, rng: &mut RngHandle) -> Result<Matrix> {
    let d = chol_lower.rows();
    if chol_lower.cols() != d || !chol_lower.is_lower_triangular() {
        return Err(Error::Domain(
            "mvn_sample needs a square lower-triangular factor".into(),
        ));
    }
    let mut out = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.standard_normal();
        }
        for i in 0..d {
            let row = chol_lower.row(i);
            out.push(row[..=i].iter().zip(&z).map(|(a, b)| a * b).sum());
        }
    }
    Ok(Matrix::from_raw(n, d, out))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with `n - 1` in the denominator.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Skewness `m3 / m2^(3/2)` using population (divide-by-n) central moments.
pub fn sample_skewness(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::Degenerate(format!(
            "skewness needs at least 3 values, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let m = mean(x);
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in x {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if m2 <= f64::EPSILON * m.abs().max(1.0).powi(2) {
        return Err(Error::Degenerate("skewness of a constant vector".into()));
    }
    Ok(m3 / m2.powf(1.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skewness_examples() {
        assert!(sample_skewness(&[-1.0, 0.0, 1.0]).unwrap().abs() < 1e-15);
        // m2 = 3/16, m3 = 3/32 for [0,0,0,1]
        let s = sample_skewness(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let oracle = (3.0 / 32.0) / (3.0_f64 / 16.0).powf(1.5);
        assert!((s - oracle).abs() < 1e-12);
        assert!((s - 1.154701).abs() < 1e-6);
        assert!(sample_skewness(&[2.0, 2.0, 2.0]).is_err());
        assert!(sample_skewness(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn standardized_chi2_sample_skewness() {
        let mut rng = RngHandle::new(11);
        let x: Vec<f64> = (0..100_000)
            .map(|_| (chi2_quantile_of_normal_score(rng.standard_normal(), 3.0) - 3.0) / 6f64.sqrt())
            .collect();
        let s = sample_skewness(&x).unwrap();
        assert!((s - (8.0_f64 / 3.0).sqrt()).abs() < 0.1, "skewness {s}");
    }

    #[test]
    fn mvn_empty_and_deterministic() {
        let l = Matrix::identity(3);
        let mut rng = RngHandle::new(1);
        let empty = mvn_sample(&l, 0, &mut rng).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (0, 3));
        let a = mvn_sample(&l, 100, &mut RngHandle::new(5)).unwrap();
        let b = mvn_sample(&l, 100, &mut RngHandle::new(5)).unwrap();
        assert_eq!(a, b);
        let c = mvn_sample(&l, 100, &mut RngHandle::new(5).substream(3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mvn_rejects_upper_factor() {
        let u = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(mvn_sample(&u, 10, &mut RngHandle::new(1)).is_err());
    }
}
