//! Naive doubly robust and copula-corrected doubly robust ATE estimators.

use serde::{Deserialize, Serialize};

use crate::copula::copula_term;
use crate::diagnostics::normality_report;
use crate::error::{Error, Result};
use crate::glm::{glm_predict, ols_fit, probit_fit, ColumnRole, DesignSpec, FittedGlm};
use crate::numerics::Matrix;

/// Propensities are clipped to `[PROPENSITY_CLIP, 1 - PROPENSITY_CLIP]`
/// before weighting.
pub const PROPENSITY_CLIP: f64 = 0.01;

/// Relative diagonal below which the copula column of the single-equation
/// regression is declared collinear with its covariate (R^2 above 0.99).
pub const COPULA_COLLINEARITY_TOL: f64 = 0.1;

/// Outcome, binary treatment and covariates split into exogenous and
/// endogenous blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyData {
    y: Vec<f64>,
    t: Vec<bool>,
    exogenous: Matrix,
    endogenous: Matrix,
    exogenous_names: Vec<String>,
    endogenous_names: Vec<String>,
}

impl StudyData {
    pub fn new(
        y: Vec<f64>,
        t: Vec<bool>,
        exogenous: Matrix,
        exogenous_names: Vec<String>,
        endogenous: Matrix,
        endogenous_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if t.len() != n || exogenous.rows() != n || endogenous.rows() != n {
            return Err(Error::Dimension(format!(
                "outcome has {n} rows, treatment {}, exogenous {}, endogenous {}",
                t.len(),
                exogenous.rows(),
                endogenous.rows()
            )));
        }
        if exogenous.cols() != exogenous_names.len() || endogenous.cols() != endogenous_names.len() {
            return Err(Error::Dimension("covariate names do not match column counts".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("outcome contains non-finite values".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in exogenous_names.iter().chain(&endogenous_names) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("covariate '{name}' appears twice")));
            }
        }
        let treated = t.iter().filter(|v| **v).count();
        if treated == 0 || treated == n {
            return Err(Error::DegenerateStudy(format!(
                "{treated} of {n} units treated; both arms must be nonempty"
            )));
        }
        Ok(Self {
            y,
            t,
            exogenous,
            endogenous,
            exogenous_names,
            endogenous_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|v| **v).count()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[bool] {
        &self.t
    }

    pub fn exogenous(&self) -> &Matrix {
        &self.exogenous
    }

    pub fn endogenous(&self) -> &Matrix {
        &self.endogenous
    }

    pub fn exogenous_names(&self) -> &[String] {
        &self.exogenous_names
    }

    pub fn endogenous_names(&self) -> &[String] {
        &self.endogenous_names
    }

    pub fn is_endogenous(&self, name: &str) -> bool {
        self.endogenous_names.iter().any(|n| n == name)
    }

    /// Values of a covariate by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(j) = self.exogenous_names.iter().position(|n| n == name) {
            return Some(self.exogenous.column(j));
        }
        self.endogenous_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.endogenous.column(j))
    }

    /// Rows `idx` in order, with repetition allowed. Arms may become empty,
    /// so this skips the two-arm check.
    pub fn resample(&self, idx: &[usize]) -> StudyData {
        StudyData {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            exogenous: self.exogenous.select_rows(idx),
            endogenous: self.endogenous.select_rows(idx),
            exogenous_names: self.exogenous_names.clone(),
            endogenous_names: self.endogenous_names.clone(),
        }
    }
}

/// Covariates entering the propensity model and the outcome models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub ps_columns: Vec<String>,
    pub outcome_columns: Vec<String>,
}

impl ModelSpec {
    /// Every covariate in both models.
    pub fn all_columns(data: &StudyData) -> Self {
        let cols: Vec<String> = data
            .exogenous_names()
            .iter()
            .chain(data.endogenous_names())
            .cloned()
            .collect();
        Self {
            ps_columns: cols.clone(),
            outcome_columns: cols,
        }
    }

    pub fn validate(&self, data: &StudyData) -> Result<()> {
        for (label, cols) in [("propensity", &self.ps_columns), ("outcome", &self.outcome_columns)] {
            if cols.is_empty() {
                return Err(Error::Config(format!("{label} model has no covariates")));
            }
            for c in cols {
                if data.column(c).is_none() {
                    return Err(Error::Config(format!("{label} model names unknown covariate '{c}'")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    NaiveDr,
    Cedr,
}

impl Estimator {
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::NaiveDr => "naive_dr",
            Estimator::Cedr => "cedr",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Whether [`cedr`] refuses to run when every endogenous covariate looks normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentificationCheck {
    Enforce,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteEstimate {
    pub estimator: Estimator,
    pub ate: f64,
    pub n: usize,
    pub n_treated: usize,
    /// Fitted propensity range after clipping.
    pub propensity_min: f64,
    pub propensity_max: f64,
    /// Units whose raw propensity fell outside the clipping bounds.
    pub n_clipped: usize,
    pub ps_converged: bool,
    pub outcome_treated_converged: bool,
    pub outcome_control_converged: bool,
}

/// Doubly robust (AIPW) ATE from fitted nuisance values.
pub fn dr_ate(y: &[f64], t: &[bool], e_hat: &[f64], m1_hat: &[f64], m0_hat: &[f64]) -> Result<f64> {
    let n = y.len();
    if [t.len(), e_hat.len(), m1_hat.len(), m0_hat.len()].iter().any(|&l| l != n) {
        return Err(Error::Dimension("dr_ate inputs differ in length".into()));
    }
    if n == 0 {
        return Err(Error::Degenerate("dr_ate on an empty sample".into()));
    }
    if let Some(row) = e_hat.iter().position(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::OverlapViolation {
            row,
            value: e_hat[row],
        });
    }
    let (mut arm1, mut arm0) = (0.0, 0.0);
    for i in 0..n {
        let e = e_hat[i];
        let ti = if t[i] { 1.0 } else { 0.0 };
        arm1 += ti * y[i] / e - (ti - e) / e * m1_hat[i];
        arm0 += (1.0 - ti) * y[i] / (1.0 - e) + (ti - e) / (1.0 - e) * m0_hat[i];
    }
    Ok((arm1 - arm0) / n as f64)
}

// Design with intercept, the named covariates, then copula terms for the
// endogenous covariates among them.
fn build_design(data: &StudyData, columns: &[String], copulas: &[(String, Vec<f64>)]) -> Result<(Matrix, DesignSpec)> {
    let n = data.n();
    let mut values: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut cols: Vec<(String, ColumnRole)> = Vec::new();
    for c in columns {
        let v = data
            .column(c)
            .ok_or_else(|| Error::Config(format!("unknown covariate '{c}'")))?;
        values.push(v);
        let role = if data.is_endogenous(c) {
            ColumnRole::Endogenous
        } else {
            ColumnRole::Exogenous
        };
        cols.push((c.clone(), role));
    }
    for (name, term) in copulas {
        if columns.contains(name) {
            values.push(term.clone());
            cols.push((format!("copula({name})"), ColumnRole::Copula));
        }
    }
    let spec = DesignSpec::with_intercept(cols.iter().map(|(n, r)| (n.as_str(), *r)))?;
    let refs: Vec<&[f64]> = values.iter().map(Vec::as_slice).collect();
    Ok((Matrix::from_columns(n, &refs)?, spec))
}

fn arm_rows(t: &[bool], arm: bool) -> Vec<usize> {
    (0..t.len()).filter(|&i| t[i] == arm).collect()
}

// Fits the nuisance models on `copulas`-augmented designs and predicts with
// copula coefficients dropped.
fn fit_dr(data: &StudyData, spec: &ModelSpec, copulas: &[(String, Vec<f64>)], estimator: Estimator) -> Result<AteEstimate> {
    spec.validate(data)?;
    let treated = data.n_treated();
    if treated == 0 || treated == data.n() {
        return Err(Error::DegenerateStudy("one treatment arm is empty".into()));
    }
    let drop = [ColumnRole::Copula];

    let (ps_design, ps_spec) = build_design(data, &spec.ps_columns, copulas)?;
    let ps_fit = probit_fit(&ps_design, &ps_spec, data.t())?;
    let raw_e = glm_predict(&ps_fit, &ps_design.select_columns(&ps_spec.kept(&drop)), &drop)?;
    let lo = PROPENSITY_CLIP;
    let hi = 1.0 - PROPENSITY_CLIP;
    let n_clipped = raw_e.iter().filter(|e| **e < lo || **e > hi).count();
    let e: Vec<f64> = raw_e.iter().map(|v| v.clamp(lo, hi)).collect();

    let (out_design, out_spec) = build_design(data, &spec.outcome_columns, copulas)?;
    let predict_design = out_design.select_columns(&out_spec.kept(&drop));
    let arm_fit = |arm: bool| -> Result<FittedGlm> {
        let rows = arm_rows(data.t(), arm);
        let y: Vec<f64> = rows.iter().map(|&i| data.y()[i]).collect();
        ols_fit(&out_design.select_rows(&rows), &out_spec, &y)
    };
    let fit1 = arm_fit(true)?;
    let fit0 = arm_fit(false)?;
    let m1 = glm_predict(&fit1, &predict_design, &drop)?;
    let m0 = glm_predict(&fit0, &predict_design, &drop)?;

    let ate = dr_ate(data.y(), data.t(), &e, &m1, &m0)?;
    Ok(AteEstimate {
        estimator,
        ate,
        n: data.n(),
        n_treated: treated,
        propensity_min: e.iter().copied().fold(f64::INFINITY, f64::min),
        propensity_max: e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n_clipped,
        ps_converged: ps_fit.converged,
        outcome_treated_converged: fit1.converged,
        outcome_control_converged: fit0.converged,
    })
}

/// DR estimate with probit propensity and per-arm OLS outcome models, no
/// endogeneity correction.
pub fn naive_dr(data: &StudyData, spec: &ModelSpec) -> Result<AteEstimate> {
    fit_dr(data, spec, &[], Estimator::NaiveDr)
}

/// Copula-corrected DR estimate. Copula terms for every endogenous covariate
/// are built once on the full sample, added to whichever models include that
/// covariate, and dropped again at prediction.
pub fn cedr(data: &StudyData, spec: &ModelSpec, check: IdentificationCheck) -> Result<AteEstimate> {
    if data.endogenous_names().is_empty() {
        return Err(Error::Config("CEDR needs at least one endogenous covariate".into()));
    }
    if check == IdentificationCheck::Enforce {
        let mut normal = Vec::new();
        for (j, name) in data.endogenous_names().iter().enumerate() {
            if normality_report(&data.endogenous().column(j))?.weak_identification {
                normal.push(name.clone());
            }
        }
        if normal.len() == data.endogenous_names().len() {
            return Err(Error::WeakIdentification { columns: normal });
        }
    }
    let copulas = data
        .endogenous_names()
        .iter()
        .enumerate()
        .map(|(j, name)| Ok((name.clone(), copula_term(&data.endogenous().column(j))?)))
        .collect::<Result<Vec<_>>>()?;
    fit_dr(data, spec, &copulas, Estimator::Cedr)
}

pub fn estimate(data: &StudyData, spec: &ModelSpec, estimator: Estimator, check: IdentificationCheck) -> Result<AteEstimate> {
    match estimator {
        Estimator::NaiveDr => naive_dr(data, spec),
        Estimator::Cedr => cedr(data, spec, check),
    }
}

/// Single-equation copula regression of `y` on `[1, x, copula(x)]`. The
/// coefficient on `x` is the endogeneity-corrected slope.
pub fn copula_augmented_ols(x_endo: &[f64], y: &[f64]) -> Result<FittedGlm> {
    let n = x_endo.len();
    if n < 10 {
        return Err(Error::Degenerate(format!("copula regression needs at least 10 observations, got {n}")));
    }
    if y.len() != n {
        return Err(Error::Dimension(format!("x has {n} values but y has {}", y.len())));
    }
    let c = copula_term(x_endo)?;
    let design = Matrix::from_columns(n, &[&vec![1.0; n], x_endo, &c])?;
    let spec = DesignSpec::with_intercept([("x", ColumnRole::Endogenous), ("copula(x)", ColumnRole::Copula)])?;
    let ls = crate::numerics::qr_least_squares(&design, y, crate::glm::RANK_TOLERANCE).map_err(|_| {
        Error::Collinearity {
            columns: vec!["copula(x)".into()],
        }
    })?;
    if ls.relative_diagonal[2] < COPULA_COLLINEARITY_TOL {
        return Err(Error::Collinearity {
            columns: vec!["copula(x)".into()],
        });
    }
    ols_fit(&design, &spec, y)
}
