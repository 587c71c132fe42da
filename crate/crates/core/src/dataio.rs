//! CSV study ingestion, study configuration and assumption pre-checks.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{normality_report, NormalityReport};
use crate::error::{Error, Result};
use crate::estimators::StudyData;
use crate::glm::{glm_predict, probit_fit, ColumnRole, DesignSpec};
use crate::numerics::Matrix;

/// Cell contents treated as missing.
pub const MISSING_TOKENS: [&str; 8] = ["", "NA", "N/A", "NaN", "nan", "NULL", "null", "."];

pub const DEFAULT_BOOTSTRAP_REPLICATIONS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    DropRows,
    #[default]
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub outcome: String,
    pub treatment: String,
    #[serde(default)]
    pub exogenous: Vec<String>,
    #[serde(default)]
    pub endogenous: Vec<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_replications: usize,
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP_REPLICATIONS
}

impl StudyConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: StudyConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.exogenous.is_empty() && self.endogenous.is_empty() {
            return Err(Error::Config("study needs at least one covariate".into()));
        }
        let mut seen = HashSet::new();
        for name in [&self.outcome, &self.treatment]
            .into_iter()
            .chain(&self.exogenous)
            .chain(&self.endogenous)
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("column '{name}' is assigned more than one role")));
            }
        }
        Ok(())
    }

    fn used_columns(&self) -> Vec<&str> {
        [self.outcome.as_str(), self.treatment.as_str()]
            .into_iter()
            .chain(self.exogenous.iter().map(String::as_str))
            .chain(self.endogenous.iter().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadReport {
    pub n_rows: usize,
    pub n_kept: usize,
    /// 1-based data row numbers (header excluded) that were dropped.
    pub dropped_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStudy {
    pub data: StudyData,
    pub report: LoadReport,
}

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell)
}

pub fn load_study(csv_path: &Path, config: &StudyConfig) -> Result<LoadedStudy> {
    let file = std::fs::File::open(csv_path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", csv_path.display())))?;
    read_study(file, config)
}

/// Parses a study from any CSV reader; see [`load_study`].
pub fn read_study<R: Read>(reader: R, config: &StudyConfig) -> Result<LoadedStudy> {
    config.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let used = config.used_columns();
    let mut positions = Vec::with_capacity(used.len());
    let mut unknown = Vec::new();
    for name in &used {
        match headers.iter().position(|h| h == *name) {
            Some(p) => positions.push(p),
            None => unknown.push(name.to_string()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown column(s): {}", unknown.join(", "))));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); used.len()];
    let mut dropped_rows = Vec::new();
    let mut bad_treatment = BTreeSet::new();
    let mut n_rows = 0;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        n_rows += 1;
        let mut values = Vec::with_capacity(used.len());
        let mut missing = false;
        for (k, &p) in positions.iter().enumerate() {
            let cell = record.get(p).unwrap_or("");
            if is_missing(cell) {
                if config.missing_policy == MissingPolicy::Error {
                    return Err(Error::Parse(format!("row {row}: missing value in column '{}'", used[k])));
                }
                missing = true;
                break;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("row {row}: column '{}' has non-numeric value '{cell}'", used[k])))?;
            if k == 1 && v != 0.0 && v != 1.0 {
                bad_treatment.insert(cell.to_string());
            }
            values.push(v);
        }
        if missing {
            dropped_rows.push(row);
            continue;
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if !bad_treatment.is_empty() {
        return Err(Error::Parse(format!(
            "treatment column '{}' must be 0/1; found {}",
            config.treatment,
            bad_treatment.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let n = columns[0].len();
    let t: Vec<bool> = columns[1].iter().map(|v| *v == 1.0).collect();
    let treated = t.iter().filter(|v| **v).count();
    if treated == 0 || treated == n {
        return Err(Error::DegenerateStudy(format!(
            "{treated} of {n} kept rows are treated; both arms must be nonempty"
        )));
    }
    let n_exo = config.exogenous.len();
    let exo: Vec<&[f64]> = columns[2..2 + n_exo].iter().map(Vec::as_slice).collect();
    let endo: Vec<&[f64]> = columns[2 + n_exo..].iter().map(Vec::as_slice).collect();
    let data = StudyData::new(
        columns[0].clone(),
        t,
        Matrix::from_columns(n, &exo)?,
        config.exogenous.clone(),
        Matrix::from_columns(n, &endo)?,
        config.endogenous.clone(),
    )?;
    Ok(LoadedStudy {
        data,
        report: LoadReport {
            n_rows,
            n_kept: n,
            dropped_rows,
        },
    })
}

/// Writes the study back as CSV with outcome, treatment, exogenous, then
/// endogenous columns. Values use the shortest exact decimal form, so a
/// reload reproduces them bit for bit.
pub fn write_study_csv<W: Write>(out: W, data: &StudyData, outcome: &str, treatment: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![outcome.to_string(), treatment.to_string()];
    header.extend(data.exogenous_names().iter().cloned());
    header.extend(data.endogenous_names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![data.y()[i].to_string(), if data.t()[i] { "1" } else { "0" }.to_string()];
        rec.extend(data.exogenous().row(i).iter().map(f64::to_string));
        rec.extend(data.endogenous().row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnNormality {
    pub column: String,
    #[serde(flatten)]
    pub report: Option<NormalityReport>,
    /// Why the tests could not run, if they could not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecheckReport {
    pub n_rows: usize,
    pub n_kept: usize,
    pub n_treated: usize,
    pub treated_share: f64,
    /// Range of a probit propensity fit on all covariates.
    pub propensity_min: Option<f64>,
    pub propensity_max: Option<f64>,
    pub normality: Vec<ColumnNormality>,
    /// Every endogenous covariate looks normal, so the copula correction is
    /// not identified.
    pub weak_identification: bool,
    pub warnings: Vec<String>,
}

impl PrecheckReport {
    pub fn with_load_report(mut self, load: &LoadReport) -> Self {
        self.n_rows = load.n_rows;
        self.n_kept = load.n_kept;
        if !load.dropped_rows.is_empty() {
            self.warnings.push(format!(
                "{} of {} rows dropped for missing values",
                load.dropped_rows.len(),
                load.n_rows
            ));
        }
        self
    }
}

/// Overlap preview, treated share and per-endogenous-covariate normality.
/// Never fails; problems become warnings.
pub fn precheck_study(data: &StudyData) -> PrecheckReport {
    let n = data.n();
    let n_treated = data.n_treated();
    let mut warnings = Vec::new();

    let mut names: Vec<(&str, ColumnRole)> = data
        .exogenous_names()
        .iter()
        .map(|s| (s.as_str(), ColumnRole::Exogenous))
        .collect();
    names.extend(data.endogenous_names().iter().map(|s| (s.as_str(), ColumnRole::Endogenous)));
    let overlap = DesignSpec::with_intercept(names.iter().copied()).and_then(|spec| {
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        for j in 0..data.exogenous().cols() {
            cols.push(data.exogenous().column(j));
        }
        for j in 0..data.endogenous().cols() {
            cols.push(data.endogenous().column(j));
        }
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let design = Matrix::from_columns(n, &refs)?;
        let fit = probit_fit(&design, &spec, data.t())?;
        glm_predict(&fit, &design, &[])
    });
    let (propensity_min, propensity_max) = match overlap {
        Ok(e) => {
            let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo < 0.01 || hi > 0.99 {
                warnings.push(format!("fitted propensities span [{lo:.4}, {hi:.4}]; clipping to [0.01, 0.99] will apply"));
            }
            (Some(lo), Some(hi))
        }
        Err(e) => {
            warnings.push(format!("propensity preview failed: {e}"));
            (None, None)
        }
    };

    let normality: Vec<ColumnNormality> = data
        .endogenous_names()
        .iter()
        .enumerate()
        .map(|(j, name)| match normality_report(&data.endogenous().column(j)) {
            Ok(r) => ColumnNormality {
                column: name.clone(),
                report: Some(r),
                error: None,
            },
            Err(e) => ColumnNormality {
                column: name.clone(),
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    for c in &normality {
        match &c.report {
            Some(r) if r.weak_identification => warnings.push(format!(
                "'{}' looks normal (AD p = {:.3}, CvM p = {:.3}); its copula term is weakly identified",
                c.column, r.anderson_darling_p, r.cramer_von_mises_p
            )),
            None => warnings.push(format!("normality tests failed for '{}'", c.column)),
            _ => {}
        }
    }
    let weak_identification = !normality.is_empty()
        && normality
            .iter()
            .all(|c| c.report.as_ref().is_none_or(|r| r.weak_identification));
    if data.endogenous_names().is_empty() {
        warnings.push("no endogenous covariates declared; only the naive estimator applies".into());
    }

    PrecheckReport {
        n_rows: n,
        n_kept: n,
        n_treated,
        treated_share: n_treated as f64 / n as f64,
        propensity_min,
        propensity_max,
        normality,
        weak_identification,
        warnings,
    }
}

impl fmt::Display for PrecheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows: {} read, {} kept", self.n_rows, self.n_kept)?;
        writeln!(
            f,
            "treated: {}/{} ({:.3})",
            self.n_treated, self.n_kept, self.treated_share
        )?;
        match (self.propensity_min, self.propensity_max) {
            (Some(lo), Some(hi)) => writeln!(f, "propensity range: [{lo:.4}, {hi:.4}]")?,
            _ => writeln!(f, "propensity range: unavailable")?,
        }
        for c in &self.normality {
            match &c.report {
                Some(r) => writeln!(
                    f,
                    "{}: skewness {:.3}, AD {:.3} (p = {:.3e}), CvM {:.3} (p = {:.3e})",
                    c.column,
                    r.skewness,
                    r.anderson_darling_stat,
                    r.anderson_darling_p,
                    r.cramer_von_mises_stat,
                    r.cramer_von_mises_p
                )?,
                None => writeln!(f, "{}: {}", c.column, c.error.as_deref().unwrap_or("tests unavailable"))?,
            }
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(endo: &[&str], exo: &[&str]) -> StudyConfig {
        StudyConfig {
            outcome: "y".into(),
            treatment: "t".into(),
            exogenous: exo.iter().map(|s| s.to_string()).collect(),
            endogenous: endo.iter().map(|s| s.to_string()).collect(),
            missing_policy: MissingPolicy::Error,
            bootstrap_replications: 100,
        }
    }

    #[test]
    fn minimal_happy_path() {
        let csv = "y,t,x1,x2\n1.5,1,0.1,2\n2,0,0.4,3\n3e0,1,0.2,1\n0.5,0,0.9,4\n1,1,1.1,5\n";
        let s = read_study(csv.as_bytes(), &config(&["x1"], &["x2"])).unwrap();
        assert_eq!(s.data.endogenous().cols(), 1);
        assert_eq!(s.data.exogenous().cols(), 1);
        assert_eq!(s.data.y(), &[1.5, 2.0, 3.0, 0.5, 1.0]);
        assert_eq!(s.report.n_kept, 5);
    }

    #[test]
    fn non_binary_treatment_lists_values() {
        let csv = "y,t,x1\n1,1,0\n2,2,1\n3,1,2\n4,2,3\n";
        match read_study(csv.as_bytes(), &config(&["x1"], &[])) {
            Err(Error::Parse(msg)) => assert!(msg.contains('2'), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_column_and_role_clash() {
        let csv = "y,t,x1\n1,1,0\n2,0,1\n";
        assert!(matches!(read_study(csv.as_bytes(), &config(&["zz"], &[])), Err(Error::Config(_))));
        assert!(matches!(read_study(csv.as_bytes(), &config(&["x1"], &["x1"])), Err(Error::Config(_))));
        assert!(config(&[], &[]).validate().is_err());
    }

    #[test]
    fn missing_values_follow_policy() {
        let mut csv = String::from("y,t,x\n");
        for i in 0..20 {
            let x = if i % 10 == 3 { "NA".to_string() } else { i.to_string() };
            csv.push_str(&format!("{i},{},{x}\n", i % 2));
        }
        let mut cfg = config(&["x"], &[]);
        assert!(matches!(read_study(csv.as_bytes(), &cfg), Err(Error::Parse(_))));
        cfg.missing_policy = MissingPolicy::DropRows;
        let s = read_study(csv.as_bytes(), &cfg).unwrap();
        assert_eq!(s.report.n_rows, 20);
        assert_eq!(s.report.n_kept, 18);
        assert_eq!(s.report.dropped_rows, vec![4, 14]);
    }

    #[test]
    fn single_arm_is_degenerate() {
        let csv = "y,t,x\n1,1,0\n2,1,1\n3,1,2\n";
        assert!(matches!(read_study(csv.as_bytes(), &config(&["x"], &[])), Err(Error::DegenerateStudy(_))));
    }

    #[test]
    fn garbage_cell_is_parse_error() {
        let csv = "y,t,x\n1,1,abc\n2,0,1\n";
        assert!(matches!(read_study(csv.as_bytes(), &config(&["x"], &[])), Err(Error::Parse(_))));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: StudyConfig = serde_json::from_str(r#"{"outcome":"y","treatment":"t","endogenous":["x"]}"#).unwrap();
        assert_eq!(cfg.missing_policy, MissingPolicy::Error);
        assert_eq!(cfg.bootstrap_replications, DEFAULT_BOOTSTRAP_REPLICATIONS);
        assert!(serde_json::from_str::<StudyConfig>(r#"{"outcome":"y","treatment":"t","bogus":1}"#).is_err());
        let cfg: StudyConfig =
            serde_json::from_str(r#"{"outcome":"y","treatment":"t","exogenous":["a"],"missing_policy":"drop_rows"}"#)
                .unwrap();
        assert_eq!(cfg.missing_policy, MissingPolicy::DropRows);
    }
}
