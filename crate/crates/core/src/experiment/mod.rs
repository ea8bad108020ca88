//! Configuration search, multi-seed runs, the contamination study and the
//! model benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{anomaly_runs, DataError, Dataset};
use crate::labeling::{extract_labels, Combine, FitOn, LabelContext, LabelError, ThresholdMethod, ThresholdSpec};
use crate::metrics::{confusion, mcc, Confusion, MetricError};
use crate::models::{fit, ModelConfig, ModelError, ModelKind};
use crate::scoring::{score, ScoreError};

mod report;

pub use report::{
    benchmark, benchmark_configs, contamination_study, BenchmarkReport, BenchmarkRow, ContaminationPlan,
    ContaminationReport, ContaminationRow, ALL_EQUAL,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("dataset {0} has no labelled anomalies in its test split")]
    NoAnomalies(String),
    #[error("run {model_id} failed: {source}")]
    Run {
        model_id: String,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
}

/// Anomaly-length statistics driving the window candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Average anomaly length.
    pub a: f64,
    /// Shortest anomaly length.
    pub b: usize,
    pub n_variates: usize,
    pub t_train: usize,
    pub t_test: usize,
}

impl DatasetStats {
    /// Measured from the maximal 1-runs of the test labels.
    pub fn from_dataset(data: &Dataset) -> Result<Self, ExperimentError> {
        let labels = data
            .test
            .labels()
            .ok_or(ExperimentError::NoAnomalies(data.name.clone()))?;
        let runs = anomaly_runs(labels);
        if runs.is_empty() {
            return Err(ExperimentError::NoAnomalies(data.name.clone()));
        }
        let total: usize = runs.iter().map(|r| r.1).sum();
        Ok(Self {
            a: total as f64 / runs.len() as f64,
            b: runs.iter().map(|r| r.1).min().unwrap_or(1),
            n_variates: data.train.n_variates(),
            t_train: data.train.len(),
            t_test: data.test.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Reco,
    Fc,
}

/// `[x]`: rounding half up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

pub const DEFAULT_WINDOW: usize = 96;
pub const MIN_WINDOW: usize = 10;
/// Fixed forecasting width.
pub const FC_D_MODEL: usize = 2;

/// `W⁺`, `W⁻` and the default window, in that order, duplicates kept.
pub fn window_candidates(a: f64) -> [usize; 3] {
    let w_plus = ((a / 50.0).floor() as usize + 1) * 50;
    let w_minus = round_half_up(a / 2.0).max(MIN_WINDOW);
    [w_plus, w_minus, DEFAULT_WINDOW]
}

/// Candidate grid. Reconstruction crosses `{W⁺, W⁻, 96} × {[W/2], [W/10]} ×
/// {W, [W/5]}`; forecasting fixes `S = 1`, `M = 2`. Exact duplicates are
/// dropped, first occurrence kept. Non-grid fields come from `base`; the
/// head count falls back to 1 when it does not divide `M`.
pub fn derive_candidates(stats: &DatasetStats, approach: Approach, base: &ModelConfig) -> Vec<ModelConfig> {
    let mut out: Vec<ModelConfig> = Vec::new();
    let mut push = |kind: ModelKind, w: usize, s: usize, m: usize| {
        let n_heads = if base.n_heads > 0 && m.is_multiple_of(base.n_heads) {
            base.n_heads
        } else {
            1
        };
        let c = ModelConfig {
            kind,
            window: w,
            step: s,
            d_model: m,
            n_heads,
            ..base.clone()
        };
        if !out.contains(&c) {
            out.push(c);
        }
    };
    for w in window_candidates(stats.a) {
        match approach {
            Approach::Reco => {
                let kind = if base.kind.is_reconstruction() && base.kind != ModelKind::Baseline {
                    base.kind
                } else {
                    ModelKind::ItransformerReco
                };
                for s in [round_half_up(w as f64 / 2.0), round_half_up(w as f64 / 10.0)] {
                    for m in [w, round_half_up(w as f64 / 5.0)] {
                        push(kind, w, s.max(1), m.max(1));
                    }
                }
            }
            Approach::Fc => push(ModelKind::ItransformerFc, w, 1, FC_D_MODEL),
        }
    }
    out
}

/// Threshold rule and combinations evaluated for every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub threshold: ThresholdSpec,
    pub combinations: Vec<Combine>,
}

impl Default for EvalSettings {
    /// POT fitted on the training-split scores, all three combinations.
    fn default() -> Self {
        Self {
            threshold: ThresholdSpec::pot().fit_on(FitOn::Train),
            combinations: Combine::ALL.to_vec(),
        }
    }
}

/// Scores the test split and returns one confusion table per combination.
pub fn evaluate(
    model: &crate::models::TrainedModel,
    data: &Dataset,
    settings: &EvalSettings,
) -> Result<Vec<(Combine, Confusion)>, ExperimentError> {
    let truth = data
        .test
        .labels()
        .ok_or(ExperimentError::NoAnomalies(data.name.clone()))?;
    let test_scores = score(model, &data.test)?;
    let train_scores = match settings.threshold.fit_on {
        FitOn::Train => Some(score(model, &data.train)?),
        FitOn::Scored => None,
    };
    let ctx = LabelContext {
        // Labelled selection uses the test split itself: an optimistic bound.
        validation: (settings.threshold.method == ThresholdMethod::ValidationBest).then_some((&test_scores, truth)),
        train_scores: train_scores.as_ref(),
    };
    settings
        .combinations
        .iter()
        .map(|&c| {
            let out = extract_labels(&test_scores, &settings.threshold, c, &ctx)?;
            Ok((c, confusion(&out.labels, truth)?))
        })
        .collect()
}

/// Trains `config` with `seed` and evaluates it.
pub fn run_once(
    config: &ModelConfig,
    seed: u64,
    data: &Dataset,
    settings: &EvalSettings,
) -> Result<Vec<(Combine, Confusion)>, ExperimentError> {
    let c = config.clone().with_seed(seed);
    let wrap = |e: ExperimentError| ExperimentError::Run {
        model_id: format!("{}/{}", data.name, c.label()),
        source: Box::new(e),
    };
    let model = fit(&c, &data.train).map_err(|e| wrap(e.into()))?;
    evaluate(&model, data, settings).map_err(wrap)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// MCC of one combination across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationScore {
    pub combine: Combine,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// One configuration evaluated over a seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ModelConfig,
    pub seeds: Vec<u64>,
    pub combinations: Vec<CombinationScore>,
    /// Combination with the highest mean MCC; earliest wins ties.
    pub chosen_combination: Combine,
    pub mcc_mean: f64,
    pub mcc_std: f64,
    /// Every combination produced identical labels on every seed.
    pub all_equal: bool,
}

impl RunResult {
    fn assemble(config: &ModelConfig, seeds: &[u64], runs: &[Vec<(Combine, Confusion)>]) -> Self {
        let combos: Vec<Combine> = runs
            .first()
            .map(|r| r.iter().map(|x| x.0).collect())
            .unwrap_or_default();
        let combinations: Vec<CombinationScore> = combos
            .iter()
            .enumerate()
            .map(|(k, &combine)| {
                let per_seed: Vec<f64> = runs.iter().map(|r| mcc(&r[k].1)).collect();
                let (mean, std) = mean_std(&per_seed);
                CombinationScore {
                    combine,
                    per_seed,
                    mean,
                    std,
                }
            })
            .collect();
        let all_equal = runs.iter().all(|r| r.windows(2).all(|p| p[0].1 == p[1].1));
        let mut best = 0;
        for (k, c) in combinations.iter().enumerate() {
            if c.mean > combinations[best].mean {
                best = k;
            }
        }
        let (chosen, mean, std) =
            combinations
                .get(best)
                .map(|c| (c.combine, c.mean, c.std))
                .unwrap_or((Combine::Global, 0.0, 0.0));
        Self {
            config: config.clone(),
            seeds: seeds.to_vec(),
            combinations,
            chosen_combination: chosen,
            mcc_mean: mean,
            mcc_std: std,
            all_equal,
        }
    }

    pub fn combination(&self, c: Combine) -> Option<&CombinationScore> {
        self.combinations.iter().find(|s| s.combine == c)
    }

    /// Mean and std of `c`, or of the chosen combination when `None`.
    pub fn summary(&self, c: Option<Combine>) -> Option<(f64, f64)> {
        match c {
            None => Some((self.mcc_mean, self.mcc_std)),
            Some(c) => self.combination(c).map(|s| (s.mean, s.std)),
        }
    }
}

/// Trains every candidate under every seed (in parallel) and reduces the
/// runs per candidate, in candidate order.
pub fn run_grid(
    data: &Dataset,
    candidates: &[ModelConfig],
    seeds: &[u64],
    settings: &EvalSettings,
) -> Result<Vec<RunResult>, ExperimentError> {
    if seeds.is_empty() || settings.combinations.is_empty() {
        return Err(ExperimentError::Invalid("empty seed or combination list".into()));
    }
    for c in candidates {
        c.validate()?;
    }
    settings.threshold.validate()?;
    let jobs: Vec<(usize, u64)> = (0..candidates.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, s)| run_once(&candidates[i], s, data, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(candidates
        .iter()
        .zip(runs.chunks(seeds.len()))
        .map(|(c, r)| RunResult::assemble(c, seeds, r))
        .collect())
}

/// What the selection rule looks at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionKey {
    pub mean: f64,
    pub std: f64,
    pub m: usize,
    pub s: usize,
    pub w: usize,
}

/// Index of the selected key: among keys whose `mean ± std` interval
/// overlaps the best mean's interval, the smallest `M`, then `S`, then `W`.
/// Remaining ties prefer the higher mean, then the lower std, then the
/// earlier index (such keys are identical in every selection field).
pub fn select_index(keys: &[SelectionKey]) -> Option<usize> {
    let top = (0..keys.len()).max_by(|&a, &b| {
        keys[a]
            .mean
            .total_cmp(&keys[b].mean)
            .then(keys[b].std.total_cmp(&keys[a].std))
            .then(b.cmp(&a))
    })?;
    let best = keys[top];
    let lo = best.mean - best.std;
    (0..keys.len())
        .filter(|&i| keys[i].mean + keys[i].std >= lo)
        .min_by(|&a, &b| {
            let (x, y) = (keys[a], keys[b]);
            (x.m, x.s, x.w)
                .cmp(&(y.m, y.s, y.w))
                .then(y.mean.total_cmp(&x.mean))
                .then(x.std.total_cmp(&y.std))
                .then(a.cmp(&b))
        })
}

/// Selected result under the chosen-combination MCC, or under `combine`.
pub fn select_best_by(results: &[RunResult], combine: Option<Combine>) -> Option<&RunResult> {
    let keys: Vec<SelectionKey> = results
        .iter()
        .map(|r| {
            let (mean, std) = r.summary(combine).unwrap_or((f64::NEG_INFINITY, 0.0));
            SelectionKey {
                mean,
                std,
                m: r.config.d_model,
                s: r.config.step,
                w: r.config.window,
            }
        })
        .collect();
    let i = select_index(&keys)?;
    // Results that agree on every selection field but differ elsewhere are
    // ordered by their label so the choice ignores input order.
    let twin = |r: &RunResult| {
        let k = &keys[i];
        let (mean, std) = r.summary(combine).unwrap_or((f64::NEG_INFINITY, 0.0));
        mean == k.mean && std == k.std && (r.config.d_model, r.config.step, r.config.window) == (k.m, k.s, k.w)
    };
    results.iter().filter(|r| twin(r)).min_by(|a, b| {
        let ka = serde_json::to_string(&a.config).unwrap_or_default();
        let kb = serde_json::to_string(&b.config).unwrap_or_default();
        ka.cmp(&kb)
    })
}

pub fn select_best(results: &[RunResult]) -> Option<&ModelConfig> {
    select_best_by(results, None).map(|r| &r.config)
}

/// Candidates, their results and the selected configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub dataset: String,
    pub stats: DatasetStats,
    pub approach: Approach,
    pub settings: EvalSettings,
    pub select_on: Option<Combine>,
    pub results: Vec<RunResult>,
    pub selected: ModelConfig,
}

impl SearchReport {
    pub fn selected_result(&self) -> Option<&RunResult> {
        self.results.iter().find(|r| r.config == self.selected)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "dataset {}  a={:.1} b={}  approach {:?}\n{:<18} {:>4} {:>4} {:>4}  {:<15} {:>7} {:>7}\n",
            self.dataset,
            self.stats.a,
            self.stats.b,
            self.approach,
            "model",
            "W",
            "S",
            "M",
            "combination",
            "mean",
            "std"
        );
        for r in &self.results {
            let mark = if r.config == self.selected { " *" } else { "" };
            s += &format!(
                "{:<18} {:>4} {:>4} {:>4}  {:<15} {:>7.3} {:>7.3}{mark}\n",
                r.config.kind.name(),
                r.config.window,
                r.config.step,
                r.config.d_model,
                r.chosen_combination.name(),
                r.mcc_mean,
                r.mcc_std
            );
        }
        s
    }
}

/// Derives the grid, runs it and selects a configuration.
pub fn search(
    data: &Dataset,
    approach: Approach,
    base: &ModelConfig,
    seeds: &[u64],
    settings: &EvalSettings,
    select_on: Option<Combine>,
) -> Result<SearchReport, ExperimentError> {
    let stats = DatasetStats::from_dataset(data)?;
    let candidates = derive_candidates(&stats, approach, base);
    let results = run_grid(data, &candidates, seeds, settings)?;
    let selected = select_best_by(&results, select_on)
        .map(|r| r.config.clone())
        .ok_or_else(|| ExperimentError::Invalid("no candidates".into()))?;
    Ok(SearchReport {
        dataset: data.name.clone(),
        stats,
        approach,
        settings: settings.clone(),
        select_on,
        results,
        selected,
    })
}

/// Learning rate of the desk-scale profile; the remaining training
/// defaults (batch 32, 10 epochs) are unchanged.
pub const DESK_LR: f64 = 1e-3;

/// Training defaults used by the desk-scale experiments.
pub fn desk_base(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        lr: DESK_LR,
        ..ModelConfig::default()
    }
}

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
