//! Generates the default synthetic profile, lists the planted anomalies and
//! writes the split to CSV.

use tsad::dataio::{anomaly_runs, Dataset, SyntheticProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let synth = SyntheticProfile::desk(seed).generate()?;
    let data = &synth.dataset;
    println!(
        "{}: train {} × {}, test {} × {}",
        data.name,
        data.train.len(),
        data.train.n_variates(),
        data.test.len(),
        data.test.n_variates()
    );
    for s in &synth.specs {
        println!(
            "  {:<18} t={:<5} len={:<3} variates={:?} magnitude={:.2}",
            format!("{:?}", s.kind),
            s.start,
            s.length,
            s.variates,
            s.magnitude
        );
    }
    let labels = data.test.labels().unwrap_or_default();
    let runs = anomaly_runs(labels);
    let anomalous: usize = runs.iter().map(|&(_, len)| len).sum();
    println!(
        "{} runs, {anomalous} anomalous stamps ({:.2}%)",
        runs.len(),
        100.0 * anomalous as f64 / labels.len() as f64
    );

    let dir = std::env::temp_dir().join(format!("tsad-synthetic-{seed}"));
    data.save_dir(&dir)?;
    let back = Dataset::load_dir(&dir)?;
    println!("wrote {} (reloads with {} test stamps)", dir.display(), back.test.len());
    Ok(())
}
