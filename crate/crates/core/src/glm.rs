//! Ordinary least squares and probit maximum likelihood on role-labelled
//! design matrices.
//!
//! Every design column carries a [`ColumnRole`]. Copula control-function
//! columns take part in estimation but can be dropped at prediction time
//! with [`glm_predict`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{cholesky, cholesky_solve, inv_mills, log_norm_cdf, norm_cdf, qr_least_squares, Matrix};

/// Relative diagonal of R below which a column counts as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;
pub const PROBIT_MAX_ITER: usize = 100;
pub const PROBIT_GRADIENT_TOL: f64 = 1e-8;
/// Any coefficient beyond this magnitude is treated as separation.
pub const SEPARATION_BOUND: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Intercept,
    Exogenous,
    Endogenous,
    Copula,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSpec {
    names: Vec<String>,
    roles: Vec<ColumnRole>,
}

impl DesignSpec {
    pub fn new(names: Vec<String>, roles: Vec<ColumnRole>) -> Result<Self> {
        if names.len() != roles.len() {
            return Err(Error::Config(format!(
                "{} column names but {} roles",
                names.len(),
                roles.len()
            )));
        }
        let count = |r: ColumnRole| roles.iter().filter(|x| **x == r).count();
        if count(ColumnRole::Intercept) != 1 {
            return Err(Error::Config("design needs exactly one intercept column".into()));
        }
        let copulas = count(ColumnRole::Copula);
        if copulas != 0 && copulas != count(ColumnRole::Endogenous) {
            return Err(Error::Config(format!(
                "{copulas} copula columns for {} endogenous columns",
                count(ColumnRole::Endogenous)
            )));
        }
        Ok(Self { names, roles })
    }

    /// Intercept followed by the given `(name, role)` columns.
    pub fn with_intercept<'a>(columns: impl IntoIterator<Item = (&'a str, ColumnRole)>) -> Result<Self> {
        let mut names = vec!["(intercept)".to_string()];
        let mut roles = vec![ColumnRole::Intercept];
        for (name, role) in columns {
            names.push(name.to_string());
            roles.push(role);
        }
        Self::new(names, roles)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    /// Indices of the columns whose role is not in `drop`.
    pub fn kept(&self, drop: &[ColumnRole]) -> Vec<usize> {
        (0..self.roles.len()).filter(|&j| !drop.contains(&self.roles[j])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ols,
    Probit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedGlm {
    pub family: Family,
    pub spec: DesignSpec,
    pub coefficients: Vec<f64>,
    /// RSS / (n - p); OLS only.
    pub residual_variance: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Probit only.
    pub log_likelihood: Option<f64>,
}

impl FittedGlm {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.spec.names().iter().position(|n| n == name).map(|j| self.coefficients[j])
    }
}

fn check_shapes(design: &Matrix, spec: &DesignSpec, n_response: usize) -> Result<()> {
    if design.cols() != spec.len() {
        return Err(Error::DesignMismatch {
            expected: spec.len(),
            found: design.cols(),
        });
    }
    if design.rows() != n_response {
        return Err(Error::Dimension(format!(
            "design has {} rows but response has {}",
            design.rows(),
            n_response
        )));
    }
    if design.rows() <= design.cols() {
        return Err(Error::Degenerate(format!(
            "{} observations cannot identify {} coefficients",
            design.rows(),
            design.cols()
        )));
    }
    Ok(())
}

fn collinearity(spec: &DesignSpec, idx: Vec<usize>) -> Error {
    Error::Collinearity {
        columns: idx.into_iter().map(|j| spec.names()[j].clone()).collect(),
    }
}

pub fn ols_fit(design: &Matrix, spec: &DesignSpec, y: &[f64]) -> Result<FittedGlm> {
    check_shapes(design, spec, y.len())?;
    let ls = qr_least_squares(design, y, RANK_TOLERANCE).map_err(|idx| collinearity(spec, idx))?;
    let dof = (design.rows() - design.cols()) as f64;
    Ok(FittedGlm {
        family: Family::Ols,
        spec: spec.clone(),
        coefficients: ls.coefficients,
        residual_variance: Some(ls.residual_sum_squares / dof),
        converged: true,
        iterations: 1,
        log_likelihood: None,
    })
}

/// Probit log-likelihood at `beta`.
pub fn probit_log_likelihood(design: &Matrix, t: &[bool], beta: &[f64]) -> f64 {
    (0..design.rows())
        .map(|i| {
            let eta = dot(design.row(i), beta);
            if t[i] {
                log_norm_cdf(eta)
            } else {
                log_norm_cdf(-eta)
            }
        })
        .sum()
}

/// Score vector of the probit log-likelihood.
pub fn probit_gradient(design: &Matrix, t: &[bool], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; design.cols()];
    for i in 0..design.rows() {
        let x = design.row(i);
        let eta = dot(x, beta);
        let s = if t[i] { inv_mills(eta) } else { -inv_mills(-eta) };
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += s * xj;
        }
    }
    g
}

// Log-likelihood, score and observed information (negative Hessian).
fn probit_derivatives(design: &Matrix, t: &[bool], beta: &[f64]) -> (f64, Vec<f64>, Matrix) {
    let p = design.cols();
    let mut ll = 0.0;
    let mut g = vec![0.0; p];
    let mut h = vec![0.0; p * p];
    for i in 0..design.rows() {
        let x = design.row(i);
        let eta = dot(x, beta);
        let (score, weight) = if t[i] {
            ll += log_norm_cdf(eta);
            let lam = inv_mills(eta);
            (lam, lam * (lam + eta))
        } else {
            ll += log_norm_cdf(-eta);
            let lam = inv_mills(-eta);
            (-lam, lam * (lam - eta))
        };
        for a in 0..p {
            g[a] += score * x[a];
            let wa = weight * x[a];
            for b in a..p {
                h[a * p + b] += wa * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[a * p + b] = h[b * p + a];
        }
    }
    (ll, g, Matrix::from_raw(p, p, h))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn probit_fit(design: &Matrix, spec: &DesignSpec, t: &[bool]) -> Result<FittedGlm> {
    probit_fit_traced(design, spec, t).map(|(fit, _)| fit)
}

/// Newton-Raphson with step halving. Also returns the log-likelihood of each
/// accepted iterate, starting from the initial point.
pub fn probit_fit_traced(design: &Matrix, spec: &DesignSpec, t: &[bool]) -> Result<(FittedGlm, Vec<f64>)> {
    check_shapes(design, spec, t.len())?;
    let treated = t.iter().filter(|v| **v).count();
    if treated == 0 || treated == t.len() {
        return Err(Error::Degenerate("probit response has a single class".into()));
    }
    // Linear probability model as the starting point.
    let y: Vec<f64> = t.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let mut beta = ols_fit(design, spec, &y)?.coefficients;

    let (mut ll, mut grad, mut info) = probit_derivatives(design, t, &beta);
    let mut trace = vec![ll];
    for iter in 0..=PROBIT_MAX_ITER {
        let gnorm = inf_norm(&grad);
        if gnorm <= PROBIT_GRADIENT_TOL {
            return Ok((
                FittedGlm {
                    family: Family::Probit,
                    spec: spec.clone(),
                    coefficients: beta,
                    residual_variance: None,
                    converged: true,
                    iterations: iter,
                    log_likelihood: Some(ll),
                },
                trace,
            ));
        }
        if iter == PROBIT_MAX_ITER {
            return Err(Error::Convergence {
                iterations: iter,
                gradient_norm: gnorm,
            });
        }
        let chol = cholesky(&info).map_err(|_| Error::Convergence {
            iterations: iter,
            gradient_norm: gnorm,
        })?;
        let step = cholesky_solve(&chol, &grad);
        let decrement = dot(&step, &grad);

        // Near the optimum the likelihood change drops below its rounding
        // error, so ascent is judged up to that noise level.
        let slack = 64.0 * f64::EPSILON * (1.0 + ll.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_ll = probit_log_likelihood(design, t, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - slack {
                accepted = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            // No ascent left at machine precision: accept as the optimum if the
            // Newton decrement is negligible relative to the likelihood.
            if decrement <= 1e-12 * (1.0 + ll.abs()) {
                return Ok((
                    FittedGlm {
                        family: Family::Probit,
                        spec: spec.clone(),
                        coefficients: beta,
                        residual_variance: None,
                        converged: true,
                        iterations: iter,
                        log_likelihood: Some(ll),
                    },
                    trace,
                ));
            }
            return Err(Error::Convergence {
                iterations: iter,
                gradient_norm: gnorm,
            });
        };
        if let Some(j) = next.iter().position(|b| b.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation {
                column: spec.names()[j].clone(),
                value: next[j],
            });
        }
        beta = next;
        (ll, grad, info) = probit_derivatives(design, t, &beta);
        trace.push(ll);
    }
    unreachable!("loop returns on the final iteration")
}

/// Predicts from `fit` using only coefficients whose role is not in
/// `drop_roles`. `design` must contain exactly those kept columns, in order.
/// OLS returns the linear index, probit returns `Phi(index)`.
pub fn glm_predict(fit: &FittedGlm, design: &Matrix, drop_roles: &[ColumnRole]) -> Result<Vec<f64>> {
    let kept = fit.spec.kept(drop_roles);
    if design.cols() != kept.len() {
        return Err(Error::DesignMismatch {
            expected: kept.len(),
            found: design.cols(),
        });
    }
    let coef: Vec<f64> = kept.iter().map(|&j| fit.coefficients[j]).collect();
    let index = design.mul_vec(&coef);
    Ok(match fit.family {
        Family::Ols => index,
        Family::Probit => index.into_iter().map(norm_cdf).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm_quantile, RngHandle};

    fn intercept_only(n: usize) -> (Matrix, DesignSpec) {
        (
            Matrix::new(n, 1, vec![1.0; n]).unwrap(),
            DesignSpec::with_intercept([]).unwrap(),
        )
    }

    #[test]
    fn spec_validation() {
        assert!(DesignSpec::new(vec!["a".into()], vec![ColumnRole::Exogenous]).is_err());
        assert!(DesignSpec::with_intercept([("c", ColumnRole::Copula)]).is_err());
        assert!(DesignSpec::with_intercept([("x", ColumnRole::Endogenous), ("c", ColumnRole::Copula)]).is_ok());
        assert!(DesignSpec::new(vec!["a".into(), "b".into()], vec![ColumnRole::Intercept]).is_err());
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let design = Matrix::from_columns(10, &[&[1.0; 10], &x]).unwrap();
        let spec = DesignSpec::with_intercept([("x", ColumnRole::Exogenous)]).unwrap();
        let fit = ols_fit(&design, &spec, &y).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.residual_variance.unwrap() < 1e-24);
    }

    #[test]
    fn ols_collinear_columns_are_named() {
        let x: Vec<f64> = (0..10).map(|v| (v * v) as f64).collect();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let design = Matrix::from_columns(10, &[&[1.0; 10], &x, &x3]).unwrap();
        let spec = DesignSpec::with_intercept([("x", ColumnRole::Exogenous), ("x3", ColumnRole::Exogenous)]).unwrap();
        match ols_fit(&design, &spec, &x) {
            Err(Error::Collinearity { columns }) => assert_eq!(columns, vec!["x3".to_string()]),
            other => panic!("expected collinearity, got {other:?}"),
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal() {
        let mut rng = RngHandle::new(4);
        let n = 500;
        let x1: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + x1[i] - 2.0 * x2[i] + rng.standard_normal()).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x1, &x2]).unwrap();
        let spec = DesignSpec::with_intercept([("x1", ColumnRole::Exogenous), ("x2", ColumnRole::Exogenous)]).unwrap();
        let fit = ols_fit(&design, &spec, &y).unwrap();
        let yhat = glm_predict(&fit, &design, &[]).unwrap();
        let resid: Vec<f64> = y.iter().zip(&yhat).map(|(a, b)| a - b).collect();
        for j in 0..3 {
            let d: f64 = design.column(j).iter().zip(&resid).map(|(a, b)| a * b).sum();
            assert!(d.abs() < 1e-8 * n as f64);
        }
        // No-op drop reproduces fitted values exactly.
        assert_eq!(yhat, design.mul_vec(&fit.coefficients));
    }

    #[test]
    fn probit_intercept_only_matches_quantile() {
        let (design, spec) = intercept_only(1000);
        let t: Vec<bool> = (0..1000).map(|i| i < 300).collect();
        let fit = probit_fit(&design, &spec, &t).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - norm_quantile(0.3)).abs() < 1e-8);
        assert!((fit.coefficients[0] + 0.524401).abs() < 1e-6);

        let t: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        let fit = probit_fit(&design, &spec, &t).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
    }

    #[test]
    fn probit_single_class_is_rejected() {
        let (design, spec) = intercept_only(20);
        assert!(probit_fit(&design, &spec, &[true; 20]).is_err());
    }

    #[test]
    fn probit_separation_is_detected() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
        let t: Vec<bool> = x.iter().map(|v| *v > 0.0).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x]).unwrap();
        let spec = DesignSpec::with_intercept([("x", ColumnRole::Exogenous)]).unwrap();
        match probit_fit(&design, &spec, &t) {
            Err(Error::Separation { .. }) => {}
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn probit_drop_copula_at_zero_covariates() {
        let mut rng = RngHandle::new(8);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let t: Vec<bool> = (0..n).map(|i| 0.2 + 0.5 * x[i] + 0.3 * c[i] + rng.standard_normal() > 0.0).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x, &c]).unwrap();
        let spec = DesignSpec::with_intercept([("x", ColumnRole::Endogenous), ("c", ColumnRole::Copula)]).unwrap();
        let fit = probit_fit(&design, &spec, &t).unwrap();
        let zero = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let p = glm_predict(&fit, &zero, &[ColumnRole::Copula]).unwrap();
        assert!((p[0] - norm_cdf(fit.coefficients[0])).abs() < 1e-15);
        // Wrong width is refused.
        assert!(matches!(
            glm_predict(&fit, &design, &[ColumnRole::Copula]),
            Err(Error::DesignMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn probit_ascent_is_monotone() {
        let mut rng = RngHandle::new(21);
        let n = 3000;
        let x1: Vec<f64> = (0..n).map(|_| 2.0 * rng.standard_normal()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.uniform() * 4.0).collect();
        let t: Vec<bool> = (0..n).map(|i| -1.0 + 1.5 * x1[i] + 0.5 * x2[i] + rng.standard_normal() > 0.0).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x1, &x2]).unwrap();
        let spec = DesignSpec::with_intercept([("x1", ColumnRole::Exogenous), ("x2", ColumnRole::Exogenous)]).unwrap();
        let (fit, trace) = probit_fit_traced(&design, &spec, &t).unwrap();
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-10 * w[0].abs()));
        assert!(inf_norm(&probit_gradient(&design, &t, &fit.coefficients)) <= PROBIT_GRADIENT_TOL);
    }
}
