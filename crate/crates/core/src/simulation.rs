//! The two simulated worlds, treatment-intercept calibration, and the Monte
//! Carlo runner that summarizes estimator bias and spread.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, Estimator, IdentificationCheck, ModelSpec, StudyData};
use crate::numerics::{chi2_quantile, chi2_quantile_of_normal_score, cholesky, cholesky_semidefinite, mean, mvn_sample, std_dev, Matrix, RngHandle};

pub const DEFAULT_TAU: f64 = 2.0;
pub const DEFAULT_TREATED_SHARE: f64 = 0.30;
pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const CALIBRATION_N: usize = 1_000_000;
pub const CALIBRATION_SEED: u64 = 0x5EED_CA11_B8A7_E000;
/// Allowed gap between calibrated and target treated share.
pub const CALIBRATION_TOL: f64 = 0.002;
/// Cells with more than this fraction of failed replications are flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scenario {
    /// One endogenous covariate, two exogenous.
    One,
    /// Two endogenous covariates, four exogenous.
    Two,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }

    pub fn endogenous_names(self) -> Vec<String> {
        match self {
            Scenario::One => names(&["z1"]),
            Scenario::Two => names(&["z1", "z4"]),
        }
    }

    pub fn exogenous_names(self) -> Vec<String> {
        match self {
            Scenario::One => names(&["z2", "z3"]),
            Scenario::Two => names(&["z2", "z3", "z5", "z6"]),
        }
    }

    fn all_names(self) -> Vec<String> {
        let mut v = self.endogenous_names();
        v.extend(self.exogenous_names());
        v.sort();
        v
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.number()
    }
}

impl TryFrom<u8> for Scenario {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Scenario::One),
            2 => Ok(Scenario::Two),
            other => Err(format!("unknown scenario {other}; expected 1 or 2")),
        }
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Which nuisance model omits the binary covariate `z3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misspec {
    BothCorrect,
    PsWrong,
    OutcomeWrong,
}

impl Misspec {
    pub const ALL: [Misspec; 3] = [Misspec::BothCorrect, Misspec::PsWrong, Misspec::OutcomeWrong];

    pub fn tag(self) -> &'static str {
        match self {
            Misspec::BothCorrect => "both_correct",
            Misspec::PsWrong => "ps_wrong",
            Misspec::OutcomeWrong => "outcome_wrong",
        }
    }

    /// Analysis models: every observed covariate, minus `z3` where misspecified.
    pub fn model_spec(self, scenario: Scenario) -> ModelSpec {
        let all = scenario.all_names();
        let without: Vec<String> = all.iter().filter(|c| *c != "z3").cloned().collect();
        match self {
            Misspec::BothCorrect => ModelSpec {
                ps_columns: all.clone(),
                outcome_columns: all,
            },
            Misspec::PsWrong => ModelSpec {
                ps_columns: without,
                outcome_columns: all,
            },
            Misspec::OutcomeWrong => ModelSpec {
                ps_columns: all,
                outcome_columns: without,
            },
        }
    }
}

impl std::fmt::Display for Misspec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DgpConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub rho: f64,
    pub tau: f64,
    pub target_treated_share: f64,
    pub calibrated_intercept: Option<f64>,
}

impl DgpConfig {
    pub fn new(scenario: Scenario, n: usize, rho: f64) -> Self {
        Self {
            scenario,
            n,
            rho,
            tau: DEFAULT_TAU,
            target_treated_share: DEFAULT_TREATED_SHARE,
            calibrated_intercept: None,
        }
    }

    /// Fills in the intercept from the per-(scenario, rho, share) cache.
    pub fn calibrated(mut self) -> Result<Self> {
        if self.calibrated_intercept.is_none() {
            self.calibrated_intercept = Some(cached_intercept(&self)?);
        }
        Ok(self)
    }
}

/// Covariance of `(eps, Z1*, upsilon)` or `(eps, Z1*, Z4*, upsilon)`.
pub fn latent_covariance(scenario: Scenario, rho: f64) -> Result<Matrix> {
    let invalid = || Error::InvalidRho {
        scenario: scenario.number(),
        rho,
    };
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid());
    }
    let r = rho;
    let rows = match scenario {
        Scenario::One => vec![vec![1.0, r, 0.0], vec![r, 1.0, r], vec![0.0, r, 1.0]],
        Scenario::Two => vec![
            vec![1.0, r, r, 0.0],
            vec![r, 1.0, 0.0, r],
            vec![r, 0.0, 1.0, r],
            vec![0.0, r, r, 1.0],
        ],
    };
    let sigma = Matrix::from_rows(&rows)?;
    latent_factor(&sigma).map_err(|_| invalid())?;
    Ok(sigma)
}

// Scenario 2 at rho = 0.5 is singular (smallest eigenvalue 1 - 2 rho), yet
// still a valid covariance, so semidefinite factors are accepted.
fn latent_factor(sigma: &Matrix) -> Result<Matrix> {
    cholesky(sigma).or_else(|_| cholesky_semidefinite(sigma, 1e-12))
}

/// Maps latent standard normals to standardized chi-square(3) values,
/// `(Q(Phi(z)) - 3) / sqrt(6)`.
pub fn standardized_chi2_from_latent(z_star: &[f64]) -> Vec<f64> {
    let scale = 6f64.sqrt();
    z_star
        .iter()
        .map(|&z| (chi2_quantile_of_normal_score(z, 3.0) - 3.0) / scale)
        .collect()
}

// Covariates and errors for one simulated sample, before treatment.
struct Units {
    eps: Vec<f64>,
    z_star: Vec<Vec<f64>>,
    ups: Vec<f64>,
    // z1..z6 (scenario 1 leaves z4..z6 empty)
    z: [Vec<f64>; 6],
}

impl Units {
    fn draw(scenario: Scenario, rho: f64, n: usize, rng: &mut RngHandle) -> Result<Self> {
        let sigma = latent_covariance(scenario, rho)?;
        let latent = mvn_sample(&latent_factor(&sigma)?, n, rng)?;
        let d = sigma.rows();
        let eps = latent.column(0);
        let ups = latent.column(d - 1);
        let z_star: Vec<Vec<f64>> = (1..d - 1).map(|j| latent.column(j)).collect();
        let mut z: [Vec<f64>; 6] = Default::default();
        z[0] = standardized_chi2_from_latent(&z_star[0]);
        if scenario == Scenario::Two {
            z[3] = standardized_chi2_from_latent(&z_star[1]);
        }
        let exo: &[usize] = match scenario {
            Scenario::One => &[1, 2],
            Scenario::Two => &[1, 2, 4, 5],
        };
        for &j in exo {
            z[j] = Vec::with_capacity(n);
        }
        for _ in 0..n {
            for &j in exo {
                let v = if j == 2 {
                    if rng.bernoulli(0.3) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    rng.standard_normal()
                };
                z[j].push(v);
            }
        }
        Ok(Self { eps, z_star, ups, z })
    }

    fn treatment_index(&self, scenario: Scenario, i: usize) -> f64 {
        let z = &self.z;
        match scenario {
            Scenario::One => z[0][i] - z[1][i] + z[2][i],
            Scenario::Two => z[0][i] - 2.0 * z[1][i] + z[2][i] + z[3][i] - 2.0 * z[4][i] + z[5][i],
        }
    }

    fn outcome_mean(&self, scenario: Scenario, i: usize) -> f64 {
        let z = &self.z;
        match scenario {
            Scenario::One => z[0][i] + z[2][i],
            Scenario::Two => z[0][i] + z[2][i] + z[3][i] + z[5][i],
        }
    }
}

/// Bisection for the treatment intercept that hits the target treated share
/// on a `CALIBRATION_N`-unit sample drawn from `rng`.
pub fn calibrate_intercept(config: &DgpConfig, rng: &mut RngHandle) -> Result<f64> {
    let target = config.target_treated_share;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Calibration(format!("target share {target} is not inside (0, 1)")));
    }
    let units = Units::draw(config.scenario, config.rho, CALIBRATION_N, rng)?;
    // Treated iff index + upsilon > -gamma0.
    let mut s: Vec<f64> = (0..CALIBRATION_N)
        .map(|i| units.treatment_index(config.scenario, i) + units.ups[i])
        .collect();
    s.sort_by(f64::total_cmp);
    let share = |g: f64| (CALIBRATION_N - s.partition_point(|v| *v <= -g)) as f64 / CALIBRATION_N as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    if !(share(lo) < target && share(hi) > target) {
        return Err(Error::Calibration("bisection interval does not bracket the target".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let g = 0.5 * (lo + hi);
    let achieved = share(g);
    if (achieved - target).abs() > CALIBRATION_TOL {
        return Err(Error::Calibration(format!(
            "achieved share {achieved:.4} misses target {target}"
        )));
    }
    Ok(g)
}

type CalibrationKey = (Scenario, u64, u64);

fn cached_intercept(config: &DgpConfig) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (config.scenario, config.rho.to_bits(), config.target_treated_share.to_bits());
    if let Some(g) = cache.lock().expect("calibration cache poisoned").get(&key) {
        return Ok(*g);
    }
    let g = calibrate_intercept(config, &mut RngHandle::new(CALIBRATION_SEED))?;
    cache.lock().expect("calibration cache poisoned").insert(key, g);
    Ok(g)
}

/// Draws one dataset. Treatment is `1{gamma0 + index + upsilon > 0}` with the
/// latent `upsilon`. Returns the data and the true ATE.
pub fn generate(config: &DgpConfig, rng: &mut RngHandle) -> Result<(StudyData, f64)> {
    let g0 = config
        .calibrated_intercept
        .ok_or_else(|| Error::Config("treatment intercept is not calibrated".into()))?;
    if !config.tau.is_finite() {
        return Err(Error::Config("tau must be finite".into()));
    }
    let n = config.n;
    let sc = config.scenario;
    let units = Units::draw(sc, config.rho, n, rng)?;
    let t: Vec<bool> = (0..n).map(|i| g0 + units.treatment_index(sc, i) + units.ups[i] > 0.0).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| units.outcome_mean(sc, i) + if t[i] { config.tau } else { 0.0 } + units.eps[i])
        .collect();
    let col = |name: &str| -> &[f64] {
        let j: usize = name[1..].parse().expect("covariate names are z1..z6");
        &units.z[j - 1]
    };
    let exo_names = sc.exogenous_names();
    let endo_names = sc.endogenous_names();
    let exo: Vec<&[f64]> = exo_names.iter().map(|c| col(c)).collect();
    let endo: Vec<&[f64]> = endo_names.iter().map(|c| col(c)).collect();
    let data = StudyData::new(
        y,
        t,
        Matrix::from_columns(n, &exo)?,
        exo_names,
        Matrix::from_columns(n, &endo)?,
        endo_names,
    )?;
    Ok((data, config.tau))
}

/// Latent draws of the first endogenous covariate alongside the structural
/// error, for correlation checks.
pub fn latent_pairs(config: &DgpConfig, rng: &mut RngHandle) -> Result<(Vec<f64>, Vec<f64>)> {
    let units = Units::draw(config.scenario, config.rho, config.n, rng)?;
    Ok((units.z_star[0].clone(), units.eps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub scenario: Scenario,
    pub n: usize,
    pub rho: f64,
    pub misspec: Misspec,
    pub estimator: Estimator,
    /// Successful replications used in the summary.
    pub replications: usize,
    pub failures: usize,
    /// More than 1% of replications failed.
    pub flagged: bool,
    pub bias_pct: f64,
    pub bias_ci: (f64, f64),
    pub std: f64,
    pub std_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replication: usize,
    pub misspec: Misspec,
    pub estimator: Estimator,
    pub ate: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub config: DgpConfig,
    pub summaries: Vec<McSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl McRun {
    pub fn summary(&self, misspec: Misspec, estimator: Estimator) -> Option<&McSummary> {
        self.summaries
            .iter()
            .find(|s| s.misspec == misspec && s.estimator == estimator)
    }

    /// Successful estimates of one cell in replication order.
    pub fn estimates(&self, misspec: Misspec, estimator: Estimator) -> Vec<f64> {
        self.replicates
            .iter()
            .filter(|r| r.misspec == misspec && r.estimator == estimator)
            .filter_map(|r| r.ate)
            .collect()
    }
}

/// Summary statistics for one cell's estimates around the true `tau`.
pub fn summarize(estimates: &[f64], tau: f64) -> Result<(f64, (f64, f64), f64, (f64, f64))> {
    let r = estimates.len();
    if r < 2 {
        return Err(Error::Degenerate(format!("{r} successful replications; need at least 2")));
    }
    let m = mean(estimates);
    let sd = std_dev(estimates);
    let rf = r as f64;
    let bias = 100.0 * (m - tau) / tau;
    let half = 1.96 * sd * 100.0 / (tau.abs() * rf.sqrt());
    let df = rf - 1.0;
    let var = sd * sd;
    let std_ci = (
        (df * var / chi2_quantile(0.975, df)?).sqrt(),
        (df * var / chi2_quantile(0.025, df)?).sqrt(),
    );
    Ok((bias, (bias - half, bias + half), sd, std_ci))
}

/// Runs `replications` datasets, each analysed under every requested
/// misspecification and estimator. Replication `r` draws from substream `r`
/// of `seed`, so all cells of a replication share one dataset.
pub fn run_monte_carlo(
    config: &DgpConfig,
    misspecs: &[Misspec],
    estimators: &[Estimator],
    replications: usize,
    seed: u64,
) -> Result<McRun> {
    if replications < 2 {
        return Err(Error::Config("Monte Carlo needs at least 2 replications".into()));
    }
    if misspecs.is_empty() || estimators.is_empty() {
        return Err(Error::Config("no misspecification or estimator requested".into()));
    }
    let config = config.calibrated()?;
    // Validate rho before spawning work.
    latent_covariance(config.scenario, config.rho)?;
    let base = RngHandle::new(seed);
    let per_rep: Vec<Vec<ReplicateRecord>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = base.substream(r as u64);
            let cells = misspecs.iter().flat_map(|m| estimators.iter().map(move |e| (*m, *e)));
            match generate(&config, &mut rng) {
                Ok((data, _)) => cells
                    .map(|(m, e)| {
                        let res = estimate(&data, &m.model_spec(config.scenario), e, IdentificationCheck::Enforce);
                        ReplicateRecord {
                            replication: r,
                            misspec: m,
                            estimator: e,
                            ate: res.as_ref().ok().map(|a| a.ate),
                            failure: res.err().map(|err| err.tag().to_string()),
                        }
                    })
                    .collect(),
                Err(err) => cells
                    .map(|(m, e)| ReplicateRecord {
                        replication: r,
                        misspec: m,
                        estimator: e,
                        ate: None,
                        failure: Some(err.tag().to_string()),
                    })
                    .collect(),
            }
        })
        .collect();
    let replicates: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();

    let mut summaries = Vec::new();
    for &m in misspecs {
        for &e in estimators {
            let cell: Vec<&ReplicateRecord> = replicates
                .iter()
                .filter(|r| r.misspec == m && r.estimator == e)
                .collect();
            let ates: Vec<f64> = cell.iter().filter_map(|r| r.ate).collect();
            let failures = cell.len() - ates.len();
            let (bias_pct, bias_ci, std, std_ci) = summarize(&ates, config.tau)?;
            summaries.push(McSummary {
                scenario: config.scenario,
                n: config.n,
                rho: config.rho,
                misspec: m,
                estimator: e,
                replications: ates.len(),
                failures,
                flagged: failures as f64 > FAILURE_FLAG_SHARE * replications as f64,
                bias_pct,
                bias_ci,
                std,
                std_ci,
            });
        }
    }
    Ok(McRun {
        config,
        summaries,
        replicates,
    })
}

/// Column order of the summary CSV.
pub const SUMMARY_COLUMNS: [&str; 12] = [
    "scenario",
    "n",
    "rho",
    "misspec",
    "estimator",
    "replications",
    "bias_pct",
    "bias_ci_low",
    "bias_ci_high",
    "std",
    "std_ci_low",
    "std_ci_high",
];

pub fn write_summary_csv<W: Write>(out: W, summaries: &[McSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summaries {
        w.write_record([
            s.scenario.number().to_string(),
            s.n.to_string(),
            s.rho.to_string(),
            s.misspec.tag().to_string(),
            s.estimator.tag().to_string(),
            s.replications.to_string(),
            format!("{:.6}", s.bias_pct),
            format!("{:.6}", s.bias_ci.0),
            format!("{:.6}", s.bias_ci.1),
            format!("{:.6}", s.std),
            format!("{:.6}", s.std_ci.0),
            format!("{:.6}", s.std_ci.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_replicates_csv<W: Write>(out: W, run: &McRun) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "n", "rho", "replication", "misspec", "estimator", "ate", "failure"])?;
    for r in &run.replicates {
        w.write_record([
            run.config.scenario.number().to_string(),
            run.config.n.to_string(),
            run.config.rho.to_string(),
            r.replication.to_string(),
            r.misspec.tag().to_string(),
            r.estimator.tag().to_string(),
            r.ate.map(|a| a.to_string()).unwrap_or_default(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
