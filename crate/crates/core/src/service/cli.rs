//! Command-line interface. Exit codes: 0 success, 1 operational error,
//! 2 usage error.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backtest::{rolling_backtest, run_backtest};
use crate::error::{Error, Result};
use crate::explain::{explain_artifact, most_impactful};
use crate::pipeline::train_pair;
use crate::simulate::{best_case_search, forecast, ScenarioSpec, SearchSpace, VaccineSpec};

use super::config::RunConfig;
use super::http::{serve, BestCaseResponse, TrainResponse};
use super::store::RegionStore;
use super::{ingest_sources, ingest_upload};

#[derive(Debug, Parser)]
#[command(name = "interveno", version, about = "Regional epidemic forecasting and intervention simulation")]
pub struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Override the random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config file (defaults to $INTERVENO_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Region id.
    #[arg(long, global = true)]
    pub region: Option<String>,
    /// Override the data directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, merge, and impute a region CSV into the data directory.
    Ingest(IngestArgs),
    /// Report missing values and bound violations of a CSV.
    Validate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the cases and revenue ensembles.
    Train,
    /// Out-of-time back-test on the last test_days days.
    Backtest {
        #[arg(long, default_value_t = 1)]
        origins: usize,
        #[arg(long, default_value_t = 7)]
        step: usize,
        /// Print `date,y_true,y_pred` CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Baseline forecast over the horizon.
    Forecast {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Forecast under overrides, e.g. `--set policy_stay_at_home=3`.
    Simulate(SimulateArgs),
    /// LIME explanation for one date.
    Explain {
        #[arg(long)]
        date: NaiveDate,
        /// `cases` or `revenue`.
        #[arg(long, default_value = "cases")]
        target: String,
    },
    /// Rank a grid of scenarios.
    BestCase {
        /// JSON search space file.
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        w_protect: f64,
        #[arg(long, default_value_t = 1.0)]
        w_revenue: f64,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Alternate sources used to fill gaps, in priority order.
    #[arg(long = "alt")]
    pub alternates: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key=value`; keys: policy columns, mobility_multiplier,
    /// tests_multiplier, horizon_days, vaccine.coverage, vaccine.ramp_days,
    /// vaccine.efficacy, vaccine.generation_interval_days.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// JSON ScenarioSpec file; `--set` values apply on top.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Op(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Op(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Op(Error::Io(e))
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Op(e)) => {
            if cli.json {
                let body = serde_json::json!({"error": e.to_string()});
                eprintln!("{body}");
            } else {
                eprintln!("error: {e}");
            }
            1
        }
    }
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
    } else {
        println!("{}", human());
    }
}

fn region(cli: &Cli) -> std::result::Result<&str, Failure> {
    cli.region
        .as_deref()
        .ok_or_else(|| Failure::Usage("--region is required for this command".into()))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = dir.clone();
    }
    Ok(cfg)
}

fn scenario_from(args: &SimulateArgs, default_horizon: usize) -> std::result::Result<ScenarioSpec, Failure> {
    let mut spec = match &args.scenario {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => ScenarioSpec::baseline(default_horizon),
    };
    let mut vaccine: Option<(f64, usize, f64, f64)> = None;
    for item in &args.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        let k = k.trim();
        let num = v
            .trim()
            .parse::<f64>()
            .map_err(|_| Failure::Usage(format!("--set {k}: {v:?} is not a number")))?;
        if let Some(field) = k.strip_prefix("vaccine.") {
            let vac = vaccine.get_or_insert((0.0, 0, 0.0, crate::simulate::DEFAULT_GENERATION_INTERVAL));
            match field {
                "coverage" => vac.0 = num,
                "ramp_days" => vac.1 = num as usize,
                "efficacy" => vac.2 = num,
                "generation_interval_days" => vac.3 = num,
                _ => return Err(Failure::Usage(format!("unknown --set key `{k}`"))),
            }
            continue;
        }
        match k {
            "horizon_days" | "horizon" => spec.horizon_days = num as usize,
            "mobility_multiplier" => spec.mobility_multiplier = num,
            "tests_multiplier" => spec.tests_multiplier = num,
            key if key.starts_with(crate::ingest::POLICY_PREFIX) => {
                spec.policy_overrides.insert(key.to_string(), vec![num]);
            }
            other => return Err(Failure::Usage(format!("unknown --set key `{other}`"))),
        }
    }
    if let Some((c, ramp, e, g)) = vaccine {
        let mut v = VaccineSpec::ramp(c, ramp, spec.horizon_days, e);
        v.generation_interval_days = g;
        spec.vaccine = Some(v);
    }
    Ok(spec)
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let cfg = load_config(cli)?;
    let open = || RegionStore::open(&cfg.data_dir);
    match &cli.command {
        Command::Ingest(args) => {
            let id = region(cli)?;
            let primary = std::fs::read(&args.input)?;
            let alts = args
                .alternates
                .iter()
                .map(std::fs::read)
                .collect::<std::io::Result<Vec<_>>>()?;
            let (report, frame) = ingest_sources(&primary, &alts, id)?;
            open()?.put_frame(id, frame)?;
            emit(cli.json, &report, || {
                format!(
                    "ingested {} rows for {} ({} .. {}); ok={}",
                    report.n_rows,
                    report.region_id,
                    report.first_date.map(|d| d.to_string()).unwrap_or_default(),
                    report.last_date.map(|d| d.to_string()).unwrap_or_default(),
                    report.ok
                )
            });
        }
        Command::Validate { input } => {
            let id = region(cli)?;
            let report = match input {
                Some(p) => ingest_upload(&std::fs::read(p)?, id)?.0,
                None => crate::ingest::validate(&*open()?.frame(id)?),
            };
            emit(cli.json, &report, || {
                let mut s = format!("{}: {} rows, ok={}", report.region_id, report.n_rows, report.ok);
                for c in report.columns.iter().filter(|c| c.missing + c.out_of_bounds > 0) {
                    s.push_str(&format!(
                        "\n  {}: {} missing, {} out of bounds",
                        c.name, c.missing, c.out_of_bounds
                    ));
                }
                s
            });
        }
        Command::Train => {
            let id = region(cli)?;
            let store = Arc::new(open()?);
            let frame = store.frame(id)?;
            let _guard = store.try_begin_training(id)?;
            let pair = train_pair(&frame, &cfg.pipeline)?;
            store.install_models(id, pair.clone())?;
            let resp = TrainResponse::new(id, &pair);
            emit(cli.json, &resp, || {
                format!(
                    "trained {id} through {}; cases weights {:?}, revenue weights {:?}",
                    pair.cases.trained_through, pair.cases.ensemble_weights, pair.revenue.ensemble_weights
                )
            });
        }
        Command::Backtest { origins, step, csv } => {
            let id = region(cli)?;
            let frame = open()?.frame(id)?;
            if *origins <= 1 {
                let report = run_backtest(&frame, &cfg.pipeline)?;
                if *csv {
                    print!("{}", report.to_csv());
                } else {
                    emit(cli.json, &report, || {
                        format!("{id}: r² = {:.4} over {} days after {}", report.r_squared, report.horizon_days, report.train_through)
                    });
                }
            } else {
                let reports = rolling_backtest(&frame, *origins, *step, &cfg.pipeline)?;
                emit(cli.json, &reports, || {
                    reports
                        .iter()
                        .map(|r| format!("{}: r² = {:.4}", r.train_through, r.r_squared))
                        .collect::<Vec<_>>()
                        .join("\n")
                });
            }
        }
        Command::Forecast { horizon } => {
            let id = region(cli)?;
            let store = open()?;
            let (frame, models) = (store.frame(id)?, store.models(id)?);
            let spec = ScenarioSpec::baseline(horizon.unwrap_or(cfg.pipeline.horizon_days));
            let result = forecast(&models.cases, &models.revenue, &frame, &spec)?;
            emit(cli.json, &result, || summarize(&result));
        }
        Command::Simulate(args) => {
            let id = region(cli)?;
            let spec = scenario_from(args, cfg.pipeline.horizon_days)?;
            let store = open()?;
            let (frame, models) = (store.frame(id)?, store.models(id)?);
            let result = forecast(&models.cases, &models.revenue, &frame, &spec)?;
            emit(cli.json, &result, || summarize(&result));
        }
        Command::Explain { date, target } => {
            let id = region(cli)?;
            let store = open()?;
            let (frame, models) = (store.frame(id)?, store.models(id)?);
            let artifact = match target.as_str() {
                "cases" => &models.cases,
                "revenue" => &models.revenue,
                other => return Err(Failure::Usage(format!("unknown target `{other}`"))),
            };
            let e = explain_artifact(artifact, &frame, *date, &cfg.lime)?;
            emit(cli.json, &e, || {
                let mut s = format!(
                    "{} on {}: most impactful `{}`, fidelity r² = {:.2}",
                    target,
                    e.target_date,
                    most_impactful(&e).unwrap_or("-"),
                    e.fidelity_r2
                );
                for c in e.contributions.iter().take(10) {
                    s.push_str(&format!("\n  {:<32} {:+.6}", c.feature, c.weight));
                }
                s
            });
        }
        Command::BestCase {
            space,
            w_protect,
            w_revenue,
            top,
        } => {
            let id = region(cli)?;
            let space: SearchSpace = serde_json::from_slice(&std::fs::read(space)?)
                .map_err(|e| Error::Parse(format!("{}: {e}", space.display())))?;
            let store = open()?;
            let (frame, models) = (store.frame(id)?, store.models(id)?);
            let mut ranked = best_case_search(&models.cases, &models.revenue, &frame, &space, (*w_protect, *w_revenue))?;
            let evaluated = ranked.len();
            ranked.truncate(*top);
            let resp = BestCaseResponse { evaluated, ranked };
            emit(cli.json, &resp, || {
                let mut s = format!("evaluated {evaluated} scenarios");
                for (i, r) in resp.ranked.iter().enumerate() {
                    s.push_str(&format!(
                        "\n{:>3}. objective {:+.6}  {}",
                        i + 1,
                        r.objective,
                        serde_json::to_string(&r.spec).expect("serialisable")
                    ));
                }
                s
            });
        }
        Command::Serve { listen } => {
            let mut cfg = cfg.clone();
            if let Some(l) = listen {
                cfg.listen = l.clone();
            }
            let store = Arc::new(open()?);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve(store, cfg))?;
        }
    }
    Ok(())
}

fn summarize(r: &crate::simulate::ForecastResult) -> String {
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { sum(v) / v.len() as f64 };
    format!(
        "{} days from {}: cases {:.0} (baseline {:.0}), mean revenue delta {:+.4} (baseline {:+.4})",
        r.dates.len(),
        r.dates.first().map(|d| d.to_string()).unwrap_or_default(),
        sum(&r.cases_scenario),
        sum(&r.cases_baseline),
        mean(&r.revenue_scenario),
        mean(&r.revenue_baseline),
    )
}
