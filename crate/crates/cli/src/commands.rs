use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cedr::dataio::{load_study, precheck_study, StudyConfig};
use cedr::diagnostics::{histogram, qq_pairs};
use cedr::estimators::{estimate as run_estimator, AteEstimate, Estimator, IdentificationCheck, ModelSpec};
use cedr::inference::{bootstrap_estimate, BootstrapResult, MIN_REPLICATIONS};
use cedr::simulation::{
    latent_covariance, run_monte_carlo, write_replicates_csv, write_summary_csv, DgpConfig, Misspec, Scenario,
};
use cedr::{Error, ErrorClass};
use serde::Serialize;

use crate::{
    svg, DiagnoseArgs, EstimateArgs, EstimatorChoice, MisspecChoice, SimulateArgs, EXIT_ADVISORY, EXIT_DATA,
    EXIT_NUMERIC, EXIT_USAGE,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core { context: String, source: Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core { source, .. } => match source.class() {
                ErrorClass::Data | ErrorClass::Io => EXIT_DATA,
                ErrorClass::Numeric => EXIT_NUMERIC,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T, E: Into<Error>> Context<T> for Result<T, E> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|e| CliError::Core {
            context: what.into(),
            source: e.into(),
        })
    }
}

/// Written next to every output so a run can be replayed.
#[derive(Serialize)]
struct RunManifest<'a, P: Serialize> {
    subcommand: &'a str,
    parameters: &'a P,
    seed: Option<u64>,
    threads: usize,
    tool_version: &'a str,
    timestamp: String,
    outputs: Vec<String>,
}

fn write_manifest<P: Serialize>(out: &Path, subcommand: &str, params: &P, seed: Option<u64>, outputs: &[PathBuf]) -> Result<(), CliError> {
    let manifest = RunManifest {
        subcommand,
        parameters: params,
        seed,
        threads: rayon::current_num_threads(),
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    fs::write(&path, text + "\n").context(format!("writing {}", path.display()))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).context(format!("creating {}", out.display()))
}

fn estimators(choice: EstimatorChoice) -> Vec<Estimator> {
    match choice {
        EstimatorChoice::Naive => vec![Estimator::NaiveDr],
        EstimatorChoice::Cedr => vec![Estimator::Cedr],
        EstimatorChoice::Both => vec![Estimator::NaiveDr, Estimator::Cedr],
    }
}

fn misspecs(choices: &[MisspecChoice]) -> Vec<Misspec> {
    let mut v: Vec<Misspec> = choices
        .iter()
        .flat_map(|c| match c {
            MisspecChoice::BothCorrect => vec![Misspec::BothCorrect],
            MisspecChoice::PsWrong => vec![Misspec::PsWrong],
            MisspecChoice::OutcomeWrong => vec![Misspec::OutcomeWrong],
            MisspecChoice::All => Misspec::ALL.to_vec(),
        })
        .collect();
    v.sort();
    v.dedup();
    v
}

pub fn simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let scenario = Scenario::try_from(args.scenario).map_err(CliError::Usage)?;
    if args.reps < 2 {
        return Err(CliError::Usage("--reps must be at least 2".into()));
    }
    if args.n.iter().any(|&n| n < 50) {
        return Err(CliError::Usage("--n must be at least 50".into()));
    }
    for &rho in &args.rho {
        latent_covariance(scenario, rho).context("checking --rho")?;
    }
    let ests = estimators(args.estimators);
    let cells = misspecs(&args.misspec);
    prepare_out(&args.out)?;

    let mut summaries = Vec::new();
    let mut outputs = Vec::new();
    for &n in &args.n {
        let mut block = Vec::new();
        for &rho in &args.rho {
            let started = Instant::now();
            let cfg = DgpConfig::new(scenario, n, rho);
            let run = run_monte_carlo(&cfg, &cells, &ests, args.reps, args.seed)
                .context(format!("scenario {} n={n} rho={rho}", scenario.number()))?;
            eprintln!(
                "scenario {} n={n} rho={rho}: {} replications in {:.1}s",
                scenario.number(),
                args.reps,
                started.elapsed().as_secs_f64()
            );
            for s in &run.summaries {
                if s.flagged {
                    eprintln!(
                        "warning: {} / {} at rho={rho}: {} of {} replications failed",
                        s.misspec, s.estimator, s.failures, args.reps
                    );
                }
            }
            if args.raw {
                let path = args.out.join(format!("replicates_n{n}_rho{rho}.csv"));
                let file = fs::File::create(&path).context(format!("creating {}", path.display()))?;
                write_replicates_csv(file, &run).context(format!("writing {}", path.display()))?;
                outputs.push(path);
            }
            block.extend(run.summaries);
        }
        let chart = svg::bias_chart(
            &format!("Bias (%) by endogeneity level and misspecification, scenario {}, n = {n}", scenario.number()),
            &block,
        );
        let path = args.out.join(format!("bias_n{n}.svg"));
        fs::write(&path, chart).context(format!("writing {}", path.display()))?;
        outputs.push(path);
        summaries.extend(block);
    }
    let path = args.out.join("summary.csv");
    let file = fs::File::create(&path).context(format!("creating {}", path.display()))?;
    write_summary_csv(file, &summaries).context(format!("writing {}", path.display()))?;
    outputs.insert(0, path);
    write_manifest(&args.out, "simulate", args, Some(args.seed), &outputs)?;
    Ok(0)
}

#[derive(Serialize)]
struct ResultRow {
    estimator: Estimator,
    ate: f64,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    se: Option<f64>,
    n: usize,
    n_treated: usize,
    propensity_min: f64,
    propensity_max: f64,
    n_clipped: usize,
    bootstrap_replications: usize,
    bootstrap_failed: usize,
}

fn format_table(rows: &[ResultRow]) -> String {
    let mut s = format!(
        "{:<10} {:>10} {:>24} {:>10} {:>7}\n",
        "Estimator", "ATE", "ATE 95% CI", "SE", "n"
    );
    for r in rows {
        let name = match r.estimator {
            Estimator::NaiveDr => "Naive DR",
            Estimator::Cedr => "CEDR",
        };
        let ci = match (r.ci_low, r.ci_high) {
            (Some(lo), Some(hi)) => format!("[{lo:.3}, {hi:.3}]"),
            _ => "-".into(),
        };
        let se = r.se.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("{name:<10} {:>10.3} {ci:>24} {se:>10} {:>7}\n", r.ate, r.n));
    }
    s
}

pub fn estimate(args: &EstimateArgs) -> Result<u8, CliError> {
    let config = StudyConfig::from_json_file(&args.config).context(format!("reading {}", args.config.display()))?;
    let b = args.bootstrap.unwrap_or(config.bootstrap_replications);
    if b != 0 && b < MIN_REPLICATIONS {
        return Err(CliError::Usage(format!(
            "--bootstrap must be 0 or at least {MIN_REPLICATIONS}"
        )));
    }
    let loaded = load_study(&args.data, &config).context(format!("loading {}", args.data.display()))?;
    let data = &loaded.data;
    if loaded.report.n_kept < loaded.report.n_rows {
        eprintln!(
            "note: kept {} of {} rows (dropped rows with missing values)",
            loaded.report.n_kept, loaded.report.n_rows
        );
    }
    let spec = ModelSpec::all_columns(data);
    let check = if args.force {
        IdentificationCheck::Skip
    } else {
        IdentificationCheck::Enforce
    };
    prepare_out(&args.out)?;

    let mut rows = Vec::new();
    for est in estimators(args.estimator) {
        let point: AteEstimate = match run_estimator(data, &spec, est, check) {
            Ok(p) => p,
            Err(e @ Error::WeakIdentification { .. }) => {
                eprint!("{}", precheck_study(data).with_load_report(&loaded.report));
                eprintln!("refusing to run CEDR; pass --force to override");
                return Err(CliError::Core {
                    context: "cedr".into(),
                    source: e,
                });
            }
            Err(e) => return Err(CliError::Core { context: est.to_string(), source: e }),
        };
        let boot: Option<BootstrapResult> = if b > 0 {
            Some(bootstrap_estimate(data, &spec, est, b, args.seed, check).context(format!("{est} bootstrap"))?)
        } else {
            None
        };
        rows.push(ResultRow {
            estimator: est,
            ate: point.ate,
            ci_low: boot.as_ref().map(|r| r.ci_low),
            ci_high: boot.as_ref().map(|r| r.ci_high),
            se: boot.as_ref().map(|r| r.se),
            n: point.n,
            n_treated: point.n_treated,
            propensity_min: point.propensity_min,
            propensity_max: point.propensity_max,
            n_clipped: point.n_clipped,
            bootstrap_replications: b,
            bootstrap_failed: boot.as_ref().map_or(0, |r| r.n_failed),
        });
    }

    let csv_path = args.out.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path).context(format!("creating {}", csv_path.display()))?;
    for r in &rows {
        w.serialize(r).context(format!("writing {}", csv_path.display()))?;
    }
    w.flush().context(format!("writing {}", csv_path.display()))?;
    let table = format_table(&rows);
    let txt_path = args.out.join("results.txt");
    fs::write(&txt_path, &table).context(format!("writing {}", txt_path.display()))?;
    print!("{table}");
    write_manifest(&args.out, "estimate", args, Some(args.seed), &[csv_path, txt_path])?;
    Ok(0)
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<u8, CliError> {
    let config = StudyConfig::from_json_file(&args.config).context(format!("reading {}", args.config.display()))?;
    let loaded = load_study(&args.data, &config).context(format!("loading {}", args.data.display()))?;
    let data = &loaded.data;
    prepare_out(&args.out)?;
    let report = precheck_study(data).with_load_report(&loaded.report);
    let mut outputs = Vec::new();

    let json_path = args.out.join("precheck.json");
    let json = serde_json::to_string_pretty(&report).context("serializing report")?;
    fs::write(&json_path, json + "\n").context(format!("writing {}", json_path.display()))?;
    outputs.push(json_path);
    let txt_path = args.out.join("precheck.txt");
    fs::write(&txt_path, report.to_string()).context(format!("writing {}", txt_path.display()))?;
    outputs.push(txt_path);

    for (j, name) in data.endogenous_names().iter().enumerate() {
        let x = data.endogenous().column(j);
        let hist_path = args.out.join(format!("histogram_{}.csv", safe_name(name)));
        let mut w = csv::Writer::from_path(&hist_path).context(format!("creating {}", hist_path.display()))?;
        w.write_record(["low", "high", "count"]).context("writing histogram")?;
        for bin in histogram(&x) {
            w.write_record([bin.low.to_string(), bin.high.to_string(), bin.count.to_string()])
                .context("writing histogram")?;
        }
        w.flush().context("writing histogram")?;
        outputs.push(hist_path);

        let qq_path = args.out.join(format!("qq_{}.csv", safe_name(name)));
        let mut w = csv::Writer::from_path(&qq_path).context(format!("creating {}", qq_path.display()))?;
        w.write_record(["theoretical", "sample"]).context("writing Q-Q pairs")?;
        for (q, v) in qq_pairs(&x) {
            w.write_record([q.to_string(), v.to_string()]).context("writing Q-Q pairs")?;
        }
        w.flush().context("writing Q-Q pairs")?;
        outputs.push(qq_path);
    }
    print!("{report}");
    write_manifest(&args.out, "diagnose", args, None, &outputs)?;
    Ok(if report.weak_identification { EXIT_ADVISORY } else { 0 })
}
