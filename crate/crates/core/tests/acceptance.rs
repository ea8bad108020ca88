//! Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Runs without the libtest harness so the lines are printed even when every
//! criterion passes. Tolerances live next to each check in `common::criteria`.

mod common;

use std::process::ExitCode;

use common::criteria::{self, Outcome};

fn report(id: usize, name: &str, outcome: &Outcome) -> bool {
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!("[{tag}] criterion {id:>2} {name}: {detail}");
    outcome.is_ok()
}

fn main() -> ExitCode {
    // Ignore libtest flags such as `--nocapture` or `--quiet`; `--list` gets
    // an empty listing so tooling that enumerates tests does not run the gate.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut ok = true;
    ok &= report(1, "gradient oracle", &criteria::gradients());
    ok &= report(2, "soft-DTW oracle", &criteria::softdtw_oracle());
    ok &= report(3, "POT on Exp(1)", &criteria::pot_oracle());
    ok &= report(4, "MCC and F1", &criteria::metric_oracles());
    ok &= report(5, "window laws", &criteria::window_laws());
    ok &= report(6, "combination laws", &criteria::combination_laws());

    let data = criteria::desk();
    let selected = match &data {
        Ok(d) => match criteria::synthetic_end_to_end(d) {
            Ok((detail, cfg)) => {
                report(7, "synthetic end-to-end", &Ok(detail));
                Some(cfg)
            }
            Err((detail, cfg)) => {
                ok &= report(7, "synthetic end-to-end", &Err(detail));
                cfg
            }
        },
        Err(e) => {
            ok &= report(7, "synthetic end-to-end", &Err(e.clone()));
            None
        }
    };
    let downstream = |f: &dyn Fn(&tsad::dataio::SyntheticDataset, &tsad::models::ModelConfig) -> Outcome| -> Outcome {
        match (&data, &selected) {
            (Ok(d), Some(cfg)) => f(d, cfg),
            _ => Err("no dataset or selected configuration".into()),
        }
    };
    ok &= report(8, "contamination robustness", &downstream(&criteria::contamination));
    ok &= report(9, "grid derivation and selection", &criteria::grid_selection());
    ok &= report(10, "benchmark determinism", &downstream(&criteria::determinism));

    println!("acceptance: {}", if ok { "all criteria passed" } else { "FAILED" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
