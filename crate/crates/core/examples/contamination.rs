//! Trains with MSE, Huber and soft-DTW on clean and 2%-contaminated
//! training data and compares detection quality.

use tsad::dataio::SyntheticProfile;
use tsad::experiment::{contamination_study, desk_base, ContaminationPlan, EvalSettings};
use tsad::models::{ModelConfig, ModelKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SyntheticProfile {
        t_train: 1500,
        t_test: 1500,
        n_variates: 3,
        n_collective: 4,
        n_point: 4,
        ..SyntheticProfile::desk(4)
    }
    .generate()?;
    let config = ModelConfig {
        window: 10,
        step: 5,
        d_model: 10,
        ..desk_base(ModelKind::ItransformerReco)
    };
    let plan = ContaminationPlan::new(config, 0.02, vec![0, 1]);
    let report = contamination_study(&synth.dataset, &synth.specs, &plan, &EvalSettings::default())?;
    println!("{}", report.to_table());
    Ok(())
}
