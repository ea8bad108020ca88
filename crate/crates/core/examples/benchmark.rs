//! Benchmarks every model family on a synthetic and a univariate dataset and
//! prints the report table and its JSON form.

use tsad::dataio::{Dataset, SyntheticProfile};
use tsad::experiment::{benchmark, benchmark_configs, desk_base, BenchmarkReport, EvalSettings};
use tsad::models::{ModelConfig, ModelKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let small = |seed, n_variates| SyntheticProfile {
        name: format!("synthetic-{n_variates}v"),
        t_train: 1200,
        t_test: 1200,
        n_variates,
        n_collective: 4,
        n_point: 4,
        ..SyntheticProfile::desk(seed)
    };
    let multi = small(5, 3).generate()?.dataset;
    let uni = small(6, 1).generate()?.dataset;

    let reco = ModelConfig {
        window: 10,
        step: 5,
        d_model: 10,
        ..desk_base(ModelKind::ItransformerReco)
    };
    let fc = ModelConfig {
        window: 10,
        step: 1,
        d_model: 2,
        ..desk_base(ModelKind::ItransformerFc)
    };
    let usad = ModelConfig {
        lr: desk_base(ModelKind::Usad).lr,
        ..ModelConfig::usad()
    };
    let configs = benchmark_configs(&reco, &fc, &usad);
    let entries: Vec<(Dataset, Vec<ModelConfig>)> = vec![(multi, configs.clone()), (uni, configs)];
    let report = benchmark(&entries, &[0, 1], &EvalSettings::default())?;
    println!("{}", report.to_table());

    let json = report.to_json()?;
    assert_eq!(BenchmarkReport::from_json(&json)?.to_json()?, json);
    println!("{} bytes of JSON, round-trips exactly", json.len());
    Ok(())
}
