//! Compares threshold rules and variate combinations on one trained model.

use tsad::dataio::SyntheticProfile;
use tsad::experiment::desk_base;
use tsad::labeling::{extract_labels, Combine, FitOn, LabelContext, ThresholdSpec};
use tsad::metrics::{confusion, mcc, precision_recall_f1, Metric};
use tsad::models::{fit, ModelConfig, ModelKind};
use tsad::scoring::score;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SyntheticProfile {
        t_train: 1500,
        t_test: 1500,
        n_variates: 3,
        n_collective: 4,
        n_point: 4,
        ..SyntheticProfile::desk(2)
    }
    .generate()?;
    let data = &synth.dataset;
    let truth = data.test.labels().unwrap_or_default();
    let model = fit(
        &ModelConfig {
            window: 10,
            step: 5,
            d_model: 10,
            ..desk_base(ModelKind::ItransformerReco)
        },
        &data.train,
    )?;
    let test = score(&model, &data.test)?;
    let train = score(&model, &data.train)?;
    let ctx = LabelContext {
        validation: Some((&test, truth)),
        train_scores: Some(&train),
    };

    let rules = [
        ("pot (fit on test)", ThresholdSpec::pot()),
        ("pot (fit on train)", ThresholdSpec::pot().fit_on(FitOn::Train)),
        ("percentile 2%", ThresholdSpec::percentile(0.02)),
        ("best mcc (oracle)", ThresholdSpec::validation_best(Metric::Mcc)),
    ];
    println!(
        "{:<20} {:<15} {:>7} {:>7} {:>9}",
        "rule", "combination", "mcc", "f1", "flagged"
    );
    for (name, spec) in rules {
        for combine in Combine::ALL {
            let out = extract_labels(&test, &spec, combine, &ctx)?;
            let c = confusion(&out.labels, truth)?;
            let flagged = out.labels.iter().filter(|&&l| l == 1).count();
            println!(
                "{name:<20} {:<15} {:>7.3} {:>7.3} {flagged:>9}",
                combine.name(),
                mcc(&c),
                precision_recall_f1(&c).2
            );
        }
    }
    Ok(())
}
