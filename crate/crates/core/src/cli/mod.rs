//! Command-line front end: simulate, train, predict, evaluate, cv, study.
//!
//! Every subcommand reads an optional JSON config (`--config`) and writes
//! its outputs into `--out` (default `.`).

pub mod cv;
pub mod study;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::booster::{mean_loss, predict, train_with, SurvivalObjective, TrainConfig, TreeEnsemble};
use crate::data::{fmt_f64, SurvivalDataset};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::metrics::{evaluate, DEFAULT_HORIZONS};
use crate::simulate::{generate, DgpConfig, SimulationMetadata};

pub use cv::{run_cv, stratified_folds, CvConfig, CvPoint, CvResult};
pub use study::{run_study, StudyConfig, StudyOutcome};

#[derive(Debug, Parser)]
#[command(name = "depcens", version, about = "Boosted AFT survival models under dependent censoring")]
pub struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from the copula simulation; writes data.csv and metadata.json.
    Simulate,
    /// Fit a booster; writes model.json.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Simulation metadata whose implied loss is used when the config names none.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Score rows with a saved model; writes predictions.csv.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare predictions with a dataset; writes metrics.json and calibration.csv.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HORIZONS)]
        horizons: usize,
    },
    /// k-fold grid search; writes cv.json and the refit model.json.
    Cv {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run simulation study 1, 2 or 3.
    Study {
        /// Built-in study to run when no --config is given.
        #[arg(long)]
        study: Option<u8>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

/// Config file for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    #[serde(default)]
    pub loss: Option<LossSpec>,
    #[serde(default)]
    pub train: TrainConfig,
}

/// Header of the predictions CSV.
pub const PREDICTION_COLUMNS: [&str; 2] = ["yhat", "time"];

pub fn write_predictions(path: &Path, yhat: &[f64]) -> Result<()> {
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(PREDICTION_COLUMNS).map_err(err)?;
    for &y in yhat {
        w.write_record([fmt_f64(y), fmt_f64(y.exp())]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read predicted times from a predictions CSV. A file with only a `yhat`
/// column is accepted and exponentiated.
pub fn read_predictions(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = r
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let (col, exp) = match (
        headers.iter().position(|h| h == "time"),
        headers.iter().position(|h| h == "yhat"),
    ) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        _ => {
            return Err(Error::Data(format!(
                "{}: needs a \"time\" or \"yhat\" column",
                path.display()
            )))
        }
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("{} line {line}: {e}", path.display())))?;
        let v: f64 = rec
            .get(col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Data(format!("{} line {line}: bad prediction", path.display())))?;
        let v = if exp { v.exp() } else { v };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Data(format!(
                "{} line {line}: predicted time must be positive, got {v}",
                path.display()
            )));
        }
        out.push(v);
    }
    Ok(out)
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn require_config(cli: &Cli, what: &str) -> Result<PathBuf> {
    cli.config
        .clone()
        .ok_or_else(|| Error::Config(format!("{what} needs --config <path>")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Persistence(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Printer {
    quiet: bool,
}

impl Printer {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn cmd_simulate(cli: &Cli, out: &Printer) -> Result<()> {
    let mut cfg: DgpConfig = read_config(&require_config(cli, "simulate")?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let sim = generate(&cfg)?;
    let data_path = cli.out.join("data.csv");
    sim.data.save_csv(&data_path)?;
    write_json(&cli.out.join("metadata.json"), &sim.metadata)?;
    out.say(format!(
        "wrote {} rows to {}; censoring fraction {:.4}",
        sim.data.len(),
        data_path.display(),
        sim.metadata.censoring_fraction
    ));
    Ok(())
}

fn cmd_train(cli: &Cli, out: &Printer, data: &Path, metadata: Option<&Path>) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => read_config::<TrainRunConfig>(p)?,
        None => TrainRunConfig {
            loss: None,
            train: TrainConfig::default(),
        },
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    let loss = match (cfg.loss, metadata) {
        (Some(l), _) => l,
        (None, Some(m)) => {
            let meta: SimulationMetadata = read_config(m)?;
            LossSpec::try_from(meta.implied_loss)?
        }
        (None, None) => {
            return Err(Error::Config(
                "train needs a \"loss\" in --config or a --metadata file".into(),
            ))
        }
    };
    let data = SurvivalDataset::read_csv(data)?;
    let mut last_loss = f64::NAN;
    let model = train_with(&data, &loss, &cfg.train, |round, _, preds| {
        if round == cfg.train.rounds {
            last_loss = mean_loss(
                &SurvivalObjective {
                    loss: &loss,
                    time: &data.time,
                    event: &data.event,
                },
                preds,
            )?;
        }
        Ok(())
    })?;
    let path = cli.out.join("model.json");
    model.save(&path)?;
    let fitted = predict(&model, &data.features)?;
    let c = crate::metrics::concordance(&data.time, &data.event, &fitted)?;
    out.say(format!(
        "trained {} rounds with {} loss; final training loss {}; training c-index {:.4}; wrote {}",
        model.trees.len(),
        loss.tag(),
        fmt_f64(last_loss),
        c,
        path.display()
    ));
    Ok(())
}

fn cmd_predict(cli: &Cli, out: &Printer, model: &Path, data: &Path) -> Result<()> {
    let model = TreeEnsemble::load(model)?;
    let data = SurvivalDataset::read_csv(data)?;
    if data.n_features() == 0 {
        return Err(Error::Data("data has no feature columns".into()));
    }
    let yhat = predict(&model, &data.features)?;
    let path = cli.out.join("predictions.csv");
    write_predictions(&path, &yhat)?;
    out.say(format!("wrote {} predictions to {}", yhat.len(), path.display()));
    Ok(())
}

fn cmd_evaluate(cli: &Cli, out: &Printer, predictions: &Path, data: &Path, horizons: usize) -> Result<()> {
    let pred = read_predictions(predictions)?;
    let data = SurvivalDataset::read_csv(data)?;
    if pred.len() != data.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} data rows",
            pred.len(),
            data.len()
        )));
    }
    let report = evaluate(&data, &pred, horizons)?;
    write_json(&cli.out.join("metrics.json"), &report)?;
    let cal_path = cli.out.join("calibration.csv");
    let file = fs::File::create(&cal_path).map_err(|e| Error::io(&cal_path, e))?;
    report.calibration.write_csv(file)?;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    out.say(format!(
        "c-index {:.4}; mae {}; event mae {}",
        report.c_index,
        opt(report.mae),
        opt(report.event_mae)
    ));
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn cmd_cv(cli: &Cli, out: &Printer, data: &Path) -> Result<()> {
    let mut cfg: CvConfig = read_config(&require_config(cli, "cv")?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let data = SurvivalDataset::read_csv(data)?;
    let (result, model) = run_cv(&data, &cfg)?;
    write_json(&cli.out.join("cv.json"), &result)?;
    model.save(&cli.out.join("model.json"))?;
    out.say(format!(
        "best: rounds {}, theta {}, mean validation c-index {:.4}",
        result.best.rounds,
        result.best.theta.map_or("n/a".to_string(), fmt_f64),
        result.best.mean_c_index
    ));
    Ok(())
}

fn cmd_study(cli: &Cli, out: &Printer, which: Option<u8>, repetitions: Option<usize>) -> Result<()> {
    let mut cfg = match (&cli.config, which) {
        (Some(p), _) => read_config::<StudyConfig>(p)?,
        (None, Some(s)) => StudyConfig::preset(s, 20)?,
        (None, None) => return Err(Error::Config("study needs --config or --study <1|2|3>".into())),
    };
    if let Some(r) = repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    let outcome = run_study(&cfg, &cli.out)?;
    for r in &outcome.summary {
        out.say(format!(
            "{:<16} {:<14} censoring {:.3}  mae {:.4}  c-index {:.4}",
            r.label, r.method, r.mean_test_censoring, r.mean_mae, r.mean_c_index
        ));
    }
    for f in &outcome.files {
        out.say(format!("wrote {}", f.display()));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let out = Printer { quiet: cli.quiet };
    match &cli.command {
        Command::Simulate => cmd_simulate(cli, &out),
        Command::Train { data, metadata } => cmd_train(cli, &out, data, metadata.as_deref()),
        Command::Predict { model, data } => cmd_predict(cli, &out, model, data),
        Command::Evaluate {
            predictions,
            data,
            horizons,
        } => cmd_evaluate(cli, &out, predictions, data, *horizons),
        Command::Cv { data } => cmd_cv(cli, &out, data),
        Command::Study { study, repetitions } => cmd_study(cli, &out, *study, *repetitions),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let result = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
