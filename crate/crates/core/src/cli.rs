//! `tsad` command line: every subcommand reads a TOML config, takes a seed
//! and writes its artifacts into an output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{AnomalySpec, DataError, Dataset, SyntheticProfile};
use crate::experiment::{
    benchmark, benchmark_configs, contamination_study, desk_base, evaluate, search, Approach, ContaminationPlan,
    EvalSettings, ExperimentError,
};
use crate::labeling::{extract_labels, Combine, FitOn, LabelContext, LabelError, ThresholdSpec};
use crate::metrics::{mcc, precision_recall_f1, MetricError};
use crate::models::{fit, ModelConfig, ModelError, ModelKind, TrainedModel};
use crate::scoring::{score, ScoreError, ScoreMetadata};

#[derive(Debug, Parser)]
#[command(name = "tsad", version, about = "Transformer-based time-series anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML run configuration; every section is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generation seed for `synth`, training seed (or first of the seed list) elsewhere.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test pair with planted anomalies.
    Synth(Common),
    /// Train one model and save its checkpoint.
    Train(Common),
    /// Write per-variate test scores.
    Score(Common),
    /// Threshold test scores and combine variates into labels.
    Label(Common),
    /// Confusion counts and MCC for every combination method.
    Evaluate(Common),
    /// Configuration grid search with selection.
    Search(Common),
    /// Training-loss comparison on clean and contaminated training data.
    Contaminate(Common),
    /// Baseline, USAD and transformer comparison.
    Benchmark(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Label(_) => "label",
            Command::Evaluate(_) => "evaluate",
            Command::Search(_) => "search",
            Command::Contaminate(_) => "contaminate",
            Command::Benchmark(_) => "benchmark",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Synth(c)
            | Command::Train(c)
            | Command::Score(c)
            | Command::Label(c)
            | Command::Evaluate(c)
            | Command::Search(c)
            | Command::Contaminate(c)
            | Command::Benchmark(c) => c,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {source}")]
    Config {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Data(_) => "data",
            CliError::Model(_) => "model",
            CliError::Score(_) => "score",
            CliError::Label(_) => "label",
            CliError::Metric(_) => "metric",
            CliError::Experiment(_) => "experiment",
            CliError::Json(_) => "json",
        }
    }
}

/// Machine-readable failure record printed on stderr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub status: String,
    pub command: String,
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(command: &str, err: &CliError) -> Self {
        let mut message = err.to_string();
        let mut source = std::error::Error::source(err);
        while let Some(s) = source {
            let m = s.to_string();
            if !message.contains(&m) {
                message = format!("{message}: {m}");
            }
            source = s.source();
        }
        Self {
            status: "error".into(),
            command: command.into(),
            kind: err.kind().into(),
            message,
        }
    }
}

/// Where the data comes from: a directory of CSV files or a synthetic profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticProfile>,
}

/// Contents of `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelConfig,
    pub threshold: ThresholdSpec,
    pub combine: Combine,
    /// Number of consecutive seeds starting at `--seed`.
    pub n_seeds: usize,
    pub approach: Approach,
    /// Combination whose MCC drives configuration selection; best per run when absent.
    pub select_on: Option<Combine>,
    /// Saved checkpoint to reuse instead of training.
    pub model_path: Option<PathBuf>,
    pub contamination_rate: f64,
    /// Forecasting and USAD setups for `benchmark`.
    pub fc: ModelConfig,
    pub usad: ModelConfig,
    /// Run the grid search before `benchmark`; otherwise `model` is used as selected.
    pub benchmark_search: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            model: desk_base(ModelKind::ItransformerReco),
            threshold: ThresholdSpec::pot().fit_on(FitOn::Train),
            combine: Combine::LocalOr,
            n_seeds: 5,
            approach: Approach::Reco,
            select_on: Some(Combine::LocalOr),
            model_path: None,
            contamination_rate: 0.02,
            fc: ModelConfig {
                step: 1,
                d_model: 2,
                ..desk_base(ModelKind::ItransformerFc)
            },
            usad: ModelConfig {
                lr: desk_base(ModelKind::Usad).lr,
                ..ModelConfig::usad()
            },
            benchmark_search: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| CliError::Config {
            path: path.display().to_string(),
            source,
        })
    }

    fn seeds(&self, first: u64) -> Vec<u64> {
        (0..self.n_seeds.max(1) as u64).map(|k| first + k).collect()
    }

    fn settings(&self) -> EvalSettings {
        EvalSettings {
            threshold: self.threshold,
            ..EvalSettings::default()
        }
    }
}

/// Dataset plus the planted anomalies when it was generated.
struct Loaded {
    data: Dataset,
    specs: Option<Vec<AnomalySpec>>,
}

fn load_data(cfg: &DataSection) -> Result<Loaded, CliError> {
    match (&cfg.dir, &cfg.synthetic) {
        (Some(_), Some(_)) => Err(CliError::Usage("set only one of data.dir and data.synthetic".into())),
        (Some(dir), None) => Ok(Loaded {
            data: Dataset::load_dir(dir)?,
            specs: None,
        }),
        (None, profile) => {
            let s = profile.clone().unwrap_or_default().generate()?;
            Ok(Loaded {
                data: s.dataset,
                specs: Some(s.specs),
            })
        }
    }
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn model_for(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<TrainedModel, CliError> {
    match &cfg.model_path {
        Some(p) => Ok(TrainedModel::load(p)?),
        None => Ok(fit(&cfg.model.clone().with_seed(seed), &data.train)?),
    }
}

/// Summary printed on stdout after a successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub command: String,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable table, when the command produces one.
    pub table: Option<String>,
}

/// Executes one parsed command.
pub fn run(cmd: &Command) -> Result<RunSummary, CliError> {
    let common = cmd.common();
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let mut artifacts = Vec::new();
    let mut table = None;
    let seed = common.seed;
    match cmd {
        Command::Synth(_) => {
            let profile = SyntheticProfile {
                seed,
                ..cfg.data.synthetic.clone().unwrap_or_default()
            };
            let s = profile.generate()?;
            s.dataset.save_dir(out)?;
            let p = out.join("anomalies.json");
            write(&p, &serde_json::to_string_pretty(&s.specs)?)?;
            artifacts.extend([out.join(Dataset::TRAIN_FILE), out.join(Dataset::TEST_FILE), p]);
        }
        Command::Train(_) => {
            let data = load_data(&cfg.data)?.data;
            let model = fit(&cfg.model.clone().with_seed(seed), &data.train)?;
            let p = out.join("model.json");
            model.save(&p)?;
            artifacts.push(p);
        }
        Command::Score(_) => {
            let data = load_data(&cfg.data)?.data;
            let model = model_for(&cfg, &data, seed)?;
            let s = score(&model, &data.test)?;
            let p = out.join("scores.csv");
            artifacts.push(s.write_csv(&p, &ScoreMetadata::new(&model, &s))?);
            artifacts.push(p);
        }
        Command::Label(_) => {
            let data = load_data(&cfg.data)?.data;
            let model = model_for(&cfg, &data, seed)?;
            let test = score(&model, &data.test)?;
            let train = match cfg.threshold.fit_on {
                FitOn::Train => Some(score(&model, &data.train)?),
                FitOn::Scored => None,
            };
            let ctx = LabelContext {
                validation: None,
                train_scores: train.as_ref(),
            };
            let outcome = extract_labels(&test, &cfg.threshold, cfg.combine, &ctx)?;
            let p = out.join("labels.csv");
            outcome.write(&p)?;
            artifacts.extend([p.clone(), p.with_extension("meta.json")]);
        }
        Command::Evaluate(_) => {
            let data = load_data(&cfg.data)?.data;
            let model = model_for(&cfg, &data, seed)?;
            let rows = evaluate(&model, &data, &cfg.settings())?;
            let mut text = format!(
                "{:<15} {:>7} {:>7} {:>7} {:>7}\n",
                "combination", "mcc", "f1", "prec", "recall"
            );
            let mut records = Vec::new();
            for (c, conf) in &rows {
                let (p, r, f1) = precision_recall_f1(conf);
                text += &format!(
                    "{:<15} {:>7.3} {:>7.3} {:>7.3} {:>7.3}\n",
                    c.name(),
                    mcc(conf),
                    f1,
                    p,
                    r
                );
                records.push(crate::metrics::EvalReport::new(
                    data.name.clone(),
                    &model.config,
                    c.name(),
                    cfg.threshold.method.name(),
                    *conf,
                ));
            }
            let p = out.join("evaluation.json");
            write(&p, &serde_json::to_string_pretty(&records)?)?;
            artifacts.push(p);
            table = Some(text);
        }
        Command::Search(_) => {
            let data = load_data(&cfg.data)?.data;
            let report = search(
                &data,
                cfg.approach,
                &cfg.model,
                &cfg.seeds(seed),
                &cfg.settings(),
                cfg.select_on,
            )?;
            let p = out.join("search.json");
            write(&p, &serde_json::to_string_pretty(&report)?)?;
            let t = report.to_table();
            write(&out.join("search.txt"), &t)?;
            artifacts.extend([p, out.join("search.txt")]);
            table = Some(t);
        }
        Command::Contaminate(_) => {
            let loaded = load_data(&cfg.data)?;
            let pool = loaded
                .specs
                .ok_or_else(|| CliError::Usage("contamination needs a synthetic data source".into()))?;
            let mut plan = ContaminationPlan::new(cfg.model.clone(), cfg.contamination_rate, cfg.seeds(seed));
            plan.combine = cfg.combine;
            let report = contamination_study(&loaded.data, &pool, &plan, &cfg.settings())?;
            let p = out.join("contamination.json");
            write(&p, &serde_json::to_string_pretty(&report)?)?;
            let t = report.to_table();
            write(&out.join("contamination.txt"), &t)?;
            artifacts.extend([p, out.join("contamination.txt")]);
            table = Some(t);
        }
        Command::Benchmark(_) => {
            let data = load_data(&cfg.data)?.data;
            let seeds = cfg.seeds(seed);
            let selected = if cfg.benchmark_search {
                search(
                    &data,
                    Approach::Reco,
                    &cfg.model,
                    &seeds,
                    &cfg.settings(),
                    cfg.select_on,
                )?
                .selected
            } else {
                cfg.model.clone()
            };
            let configs = benchmark_configs(&selected, &cfg.fc, &cfg.usad);
            let report = benchmark(&[(data, configs)], &seeds, &cfg.settings())?;
            let p = out.join("benchmark.json");
            write(&p, &report.to_json()?)?;
            let t = report.to_table();
            write(&out.join("benchmark.txt"), &t)?;
            artifacts.extend([p, out.join("benchmark.txt")]);
            table = Some(t);
        }
    }
    Ok(RunSummary {
        status: "ok".into(),
        command: cmd.name().into(),
        artifacts,
        table,
    })
}

/// Parses `args`, runs the command and returns the process exit code. The
/// success summary goes to stdout, failures as an [`ErrorRecord`] to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rec = ErrorRecord {
                status: "error".into(),
                command: String::new(),
                kind: "usage".into(),
                message: e.to_string().trim().to_string(),
            };
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_default());
            return 2;
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            if let Some(t) = &summary.table {
                print!("{t}");
            }
            println!(
                "{}",
                serde_json::to_string(&RunSummary { table: None, ..summary }).unwrap_or_default()
            );
            0
        }
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string(&ErrorRecord::new(cli.command.name(), &e)).unwrap_or_default()
            );
            1
        }
    }
}
