use serde::{Deserialize, Serialize};

use super::{run_grid, EvalSettings, ExperimentError, RunResult};
use crate::dataio::{contaminate, AnomalySpec, Dataset};
use crate::labeling::Combine;
use crate::losses::{LossKind, LossSpec};
use crate::models::{ModelConfig, ModelKind};

/// Training-loss comparison with and without anomalies in the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationPlan {
    /// Selected configuration; its loss is replaced per row.
    pub config: ModelConfig,
    pub losses: Vec<LossSpec>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Placement seed of the injected training anomalies.
    pub contamination_seed: u64,
    /// Combination reported as the headline MCC.
    pub combine: Combine,
}

impl ContaminationPlan {
    /// MSE, Huber and Soft-DTW at rates `0` and `rate`.
    pub fn new(config: ModelConfig, rate: f64, seeds: Vec<u64>) -> Self {
        Self {
            config,
            losses: [LossKind::Mse, LossKind::Huber, LossKind::Softdtw]
                .into_iter()
                .map(LossSpec::new)
                .collect(),
            rates: vec![0.0, rate],
            seeds,
            contamination_seed: 0,
            combine: Combine::LocalOr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationRow {
    pub loss: LossKind,
    pub rate: f64,
    /// Anomalous stamps actually injected into the training split.
    pub contaminated_stamps: usize,
    pub mcc_mean: f64,
    pub mcc_std: f64,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub dataset: String,
    pub plan: ContaminationPlan,
    pub rows: Vec<ContaminationRow>,
}

impl ContaminationReport {
    pub fn row(&self, loss: LossKind, rate: f64) -> Option<&ContaminationRow> {
        self.rows.iter().find(|r| r.loss == loss && r.rate == rate)
    }

    /// Losses as rows, rates as columns.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10}", "loss");
        for r in &self.plan.rates {
            s += &format!(" {:>17}", format!("rate {r}"));
        }
        s.push('\n');
        for l in &self.plan.losses {
            s += &format!("{:<10}", l.kind.name());
            for &r in &self.plan.rates {
                match self.row(l.kind, r) {
                    Some(row) => s += &format!(" {:>8.3} ± {:<6.3}", row.mcc_mean, row.mcc_std),
                    None => s += &format!(" {:>17}", "-"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Retrains the plan's configuration for every (loss, rate) pair on a
/// training split contaminated with anomalies shaped like `pool`, and
/// evaluates on the untouched test split.
pub fn contamination_study(
    data: &Dataset,
    pool: &[AnomalySpec],
    plan: &ContaminationPlan,
    settings: &EvalSettings,
) -> Result<ContaminationReport, ExperimentError> {
    if !plan.config.kind.is_reconstruction() {
        return Err(ExperimentError::Invalid(format!(
            "contamination study needs a reconstruction model, got {}",
            plan.config.kind
        )));
    }
    let mut settings = settings.clone();
    if !settings.combinations.contains(&plan.combine) {
        settings.combinations.push(plan.combine);
    }
    let mut rows = Vec::new();
    for &rate in &plan.rates {
        let train = contaminate(&data.train, pool, rate, plan.contamination_seed)?;
        let stamps = train.labels().map_or(0, |l| l.iter().filter(|&&x| x == 1).count());
        let dirty = Dataset::new(data.name.clone(), train, data.test.clone())?;
        let configs: Vec<ModelConfig> = plan.losses.iter().map(|l| plan.config.clone().with_loss(*l)).collect();
        for (loss, result) in plan
            .losses
            .iter()
            .zip(run_grid(&dirty, &configs, &plan.seeds, &settings)?)
        {
            let (mcc_mean, mcc_std) = result.summary(Some(plan.combine)).unwrap_or_default();
            rows.push(ContaminationRow {
                loss: loss.kind,
                rate,
                contaminated_stamps: stamps,
                mcc_mean,
                mcc_std,
                result,
            });
        }
    }
    Ok(ContaminationReport {
        dataset: data.name.clone(),
        plan: plan.clone(),
        rows,
    })
}

/// Combination label of univariate rows, where every method coincides.
pub const ALL_EQUAL: &str = "all equal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub model: ModelKind,
    pub config: ModelConfig,
    pub mcc_mean: f64,
    /// `None` for the deterministic baseline.
    pub mcc_std: Option<f64>,
    /// Best combination method, or [`ALL_EQUAL`] for univariate data.
    pub combination: String,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seeds: Vec<u64>,
    pub settings: EvalSettings,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn row(&self, dataset: &str, model: ModelKind) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.model == model)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<14} {:<18} {:>4} {:>4} {:>4}  {:>15}  {}\n",
            "dataset", "model", "W", "S", "M", "MCC", "combination"
        );
        for r in &self.rows {
            let mcc = match r.mcc_std {
                Some(sd) => format!("{:.3} ± {:.3}", r.mcc_mean, sd),
                None => format!("{:.3}", r.mcc_mean),
            };
            s += &format!(
                "{:<14} {:<18} {:>4} {:>4} {:>4}  {:>15}  {}\n",
                r.dataset,
                r.model.name(),
                r.config.window,
                r.config.step,
                r.config.d_model,
                mcc,
                r.combination
            );
        }
        s
    }
}

/// The five benchmark models. The vanilla transformer reuses the selected
/// inverted-reconstruction configuration with only the kind changed.
pub fn benchmark_configs(selected_reco: &ModelConfig, fc: &ModelConfig, usad: &ModelConfig) -> Vec<ModelConfig> {
    vec![
        ModelConfig::baseline(),
        usad.clone(),
        ModelConfig {
            kind: ModelKind::TransformerReco,
            ..selected_reco.clone()
        },
        fc.clone(),
        selected_reco.clone(),
    ]
}

/// Evaluates every `(dataset, configs)` entry over `seeds`. The baseline is
/// deterministic and runs once.
pub fn benchmark(
    entries: &[(Dataset, Vec<ModelConfig>)],
    seeds: &[u64],
    settings: &EvalSettings,
) -> Result<BenchmarkReport, ExperimentError> {
    let mut rows = Vec::new();
    for (data, configs) in entries {
        for config in configs {
            let deterministic = config.kind == ModelKind::Baseline;
            let run_seeds = if deterministic {
                &seeds[..seeds.len().min(1)]
            } else {
                seeds
            };
            let result = run_grid(data, std::slice::from_ref(config), run_seeds, settings)?
                .pop()
                .ok_or_else(|| ExperimentError::Invalid("empty run".into()))?;
            let combination = if data.test.n_variates() == 1 {
                ALL_EQUAL.to_string()
            } else {
                result.chosen_combination.name().to_string()
            };
            rows.push(BenchmarkRow {
                dataset: data.name.clone(),
                model: config.kind,
                config: config.clone(),
                mcc_mean: result.mcc_mean,
                mcc_std: (!deterministic).then_some(result.mcc_std),
                combination,
                result,
            });
        }
    }
    Ok(BenchmarkReport {
        seeds: seeds.to_vec(),
        settings: settings.clone(),
        rows,
    })
}
