//! Derives the candidate grid from anomaly statistics and selects a
//! configuration over several seeds.

use tsad::dataio::SyntheticProfile;
use tsad::experiment::{derive_candidates, desk_base, search, Approach, DatasetStats, EvalSettings};
use tsad::labeling::Combine;
use tsad::models::ModelKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SyntheticProfile {
        t_train: 1200,
        t_test: 1200,
        n_variates: 3,
        n_collective: 4,
        n_point: 4,
        collective_len_min: 10,
        collective_len_max: 30,
        ..SyntheticProfile::desk(3)
    }
    .generate()?;
    let data = &synth.dataset;
    let stats = DatasetStats::from_dataset(data)?;
    println!("average anomaly length a = {:.1}", stats.a);

    let base = desk_base(ModelKind::ItransformerReco);
    for c in derive_candidates(&stats, Approach::Reco, &base) {
        println!("  candidate W={:<3} S={:<3} M={}", c.window, c.step, c.d_model);
    }

    // The full grid trains 12 configurations per seed; keep the demo short.
    let report = search(
        data,
        Approach::Reco,
        &base,
        &[0, 1],
        &EvalSettings::default(),
        Some(Combine::LocalOr),
    )?;
    println!("{}", report.to_table());
    Ok(())
}
