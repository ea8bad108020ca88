//! Loads a dataset directory of CSV files and evaluates the z-score
//! baseline on it. Pass a directory holding `train.csv`, `test.csv` and
//! `test_labels.csv`; without one, a small sine dataset is written first.

use std::path::PathBuf;

use tsad::dataio::{Dataset, TimeSeries};
use tsad::experiment::{evaluate, EvalSettings};
use tsad::metrics::{mcc, precision_recall_f1};
use tsad::models::{fit, ModelConfig};

fn demo_dir() -> Result<PathBuf, Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("tsad-csv-demo");
    let wave = |t: usize, v: usize| ((t as f64) * 0.1 + v as f64).sin();
    let train: Vec<f64> = (0..800).flat_map(|t| (0..2).map(move |v| wave(t, v))).collect();
    let mut test: Vec<f64> = (800..1600).flat_map(|t| (0..2).map(move |v| wave(t, v))).collect();
    let mut labels = vec![0u8; 800];
    for t in [120, 121, 122, 450, 451, 700] {
        test[t * 2] += 3.0;
        labels[t] = 1;
    }
    let data = Dataset::new(
        "sine",
        TimeSeries::new("train", train, 2)?,
        TimeSeries::new("test", test, 2)?.with_labels(labels)?,
    )?;
    data.save_dir(&dir)?;
    Ok(dir)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => demo_dir()?,
    };
    let data = Dataset::load_dir(&dir)?;
    println!(
        "{}: {} variates, {} test stamps",
        data.name,
        data.test.n_variates(),
        data.test.len()
    );
    let model = fit(&ModelConfig::baseline(), &data.train)?;
    for (combine, c) in evaluate(&model, &data, &EvalSettings::default())? {
        let (p, r, f1) = precision_recall_f1(&c);
        println!(
            "{:<15} mcc {:.3}  f1 {f1:.3}  precision {p:.3}  recall {r:.3}",
            combine.name(),
            mcc(&c)
        );
    }
    Ok(())
}
