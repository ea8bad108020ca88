//! One function per acceptance criterion. Each returns a one-line detail on
//! success and the first violation on failure.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::gradcheck::{run_case, CASES};
use super::oracles::{dtw_brute, mcc_direct, select_brute, softdtw_brute, window_count};
use tsad::dataio::{make_windows, SyntheticDataset, SyntheticProfile, TimeSeries, WindowPurpose};
use tsad::experiment::{
    benchmark, benchmark_configs, contamination_study, derive_candidates, desk_base, run_grid, search, select_index,
    Approach, BenchmarkReport, ContaminationPlan, DatasetStats, EvalSettings, SelectionKey, DEFAULT_SEEDS,
};
use tsad::labeling::{combine_local, extract_labels, threshold_pot, Combine, LabelContext, LocalMode, ThresholdSpec};
use tsad::losses::{softdtw, LossKind};
use tsad::metrics::{mcc, precision_recall_f1, Confusion};
use tsad::models::{ModelConfig, ModelKind};
use tsad::scoring::ScoreSeries;
use tsad::tensor_core::seeded_rng;

pub type Outcome = Result<String, String>;

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("runtime {elapsed:.1?} exceeds {limit:?}"))
    }
}

/// 1. Gradient oracle: ≥ 20 instances per layer and loss, rel err < 1e-4, < 60 s.
pub fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (k, case) in CASES.iter().enumerate() {
        worst = worst.max(run_case(case, 20, 100 + k as u64)?);
    }
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{} cases × 20 instances, worst rel err {worst:.1e}, {:.1?}",
        CASES.len(),
        t.elapsed()
    ))
}

/// 2. Soft-DTW against path enumeration for all lengths up to (4, 4).
pub fn softdtw_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = seeded_rng(2);
    let (mut worst_soft, mut worst_hard, mut checked) = (0.0f64, 0.0f64, 0);
    for n in 1..=4 {
        for m in 1..=4 {
            for dim in [1, 2] {
                for _ in 0..10 {
                    let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let y: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                    for gamma in [0.01, 0.1, 1.0, 10.0] {
                        let d = (softdtw(&x, &y, dim, gamma).map_err(|e| e.to_string())?
                            - softdtw_brute(&x, &y, dim, gamma))
                        .abs();
                        if !(d <= 1e-8) {
                            return Err(format!("({n},{m}) dim {dim} γ {gamma}: |Δ| = {d:e}"));
                        }
                        worst_soft = worst_soft.max(d);
                        checked += 1;
                    }
                    let d = (softdtw(&x, &y, dim, 1e-3).map_err(|e| e.to_string())? - dtw_brute(&x, &y, dim)).abs();
                    if !(d <= 1e-3) {
                        return Err(format!("({n},{m}) dim {dim}: γ=1e-3 vs hard DTW |Δ| = {d:e}"));
                    }
                    worst_hard = worst_hard.max(d);
                }
            }
        }
    }
    within(t.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{checked} soft values, max |Δ| {worst_soft:.1e}; γ=1e-3 vs hard max |Δ| {worst_hard:.1e}; {:.1?}",
        t.elapsed()
    ))
}

/// 3. POT on 100k Exp(1) samples over five seeds.
pub fn pot_oracle() -> Outcome {
    let t = Instant::now();
    let exp = Exp::new(1.0).map_err(|e| e.to_string())?;
    let mut zs = Vec::new();
    for seed in 0..5 {
        let mut rng = seeded_rng(300 + seed);
        let x: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
        let (z, fit) = threshold_pot(&x, 1e-3, 0.98).map_err(|e| e.to_string())?;
        if !(6.6..=7.2).contains(&z) || !(fit.xi.abs() < 0.1) {
            return Err(format!("seed {seed}: z = {z:.4}, ξ = {:.4}", fit.xi));
        }
        zs.push(format!("{z:.3}/{:+.3}", fit.xi));
    }
    within(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "z/ξ per seed [{}] (analytic 6.908), {:.1?}",
        zs.join(", "),
        t.elapsed()
    ))
}

/// 4. MCC against its definition; exact ±1; F1 blind to true negatives.
pub fn metric_oracles() -> Outcome {
    let mut rng = seeded_rng(4);
    let mut zero_den = 0;
    for k in 0..1000 {
        let mut cell = |p_zero: f64| {
            if rng.random_bool(p_zero) {
                0
            } else {
                rng.random_range(1..200u64)
            }
        };
        let c = Confusion::new(cell(0.2), cell(0.2), cell(0.2), cell(0.2));
        let direct = mcc_direct(c.tp, c.tn, c.fp, c.fn_);
        if (c.tp + c.fp) * (c.tp + c.fn_) * (c.tn + c.fp) * (c.tn + c.fn_) == 0 {
            zero_den += 1;
            if mcc(&c) != 0.0 {
                return Err(format!("table {k} {c:?}: zero denominator gave {}", mcc(&c)));
            }
        }
        if !((mcc(&c) - direct).abs() < 1e-12) {
            return Err(format!("table {k} {c:?}: {} vs {direct}", mcc(&c)));
        }
    }
    for k in 1..200u64 {
        if mcc(&Confusion::new(k, 3 * k + 1, 0, 0)) != 1.0 || mcc(&Confusion::new(0, 0, k + 2, 5 * k)) != -1.0 {
            return Err(format!("perfect/inverted not exact at k={k}"));
        }
    }
    let base = Confusion::new(30, 400, 12, 9);
    let more = Confusion::new(30, 4000, 12, 9);
    let (f_a, f_b) = (precision_recall_f1(&base).2, precision_recall_f1(&more).2);
    if f_a != f_b || mcc(&base) == mcc(&more) {
        return Err(format!("F1 {f_a} vs {f_b}, MCC {} vs {}", mcc(&base), mcc(&more)));
    }
    Ok(format!(
        "1000 tables ({zero_den} with an empty marginal) match; ±1 exact; F1 {f_a:.4} fixed while MCC {:.4} → {:.4}",
        mcc(&base),
        mcc(&more)
    ))
}

/// 5. Window count, reassembly and padding over random (T, W, S), T ≤ 500.
pub fn window_laws() -> Outcome {
    let mut rng = seeded_rng(5);
    for k in 0..2000 {
        let t = rng.random_range(1..=500usize);
        let n = rng.random_range(1..=3usize);
        let w = rng.random_range(1..=t);
        let s = rng.random_range(1..=w);
        let vals: Vec<f64> = (0..t * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ts = TimeSeries::new("w", vals.clone(), n).map_err(|e| e.to_string())?;
        let ws = make_windows(&ts, w, s, WindowPurpose::Train).map_err(|e| e.to_string())?;
        let expect = window_count(t, w, s);
        if ws.count() != expect || ws.count() != (t - w).div_ceil(s) + 1 {
            return Err(format!("case {k}: T={t} W={w} S={s}: count {} vs {expect}", ws.count()));
        }
        let last = ws.count() - 1;
        if ws.pad_len() != last * s + w - t || (last > 0 && ws.pad_len() >= s) {
            return Err(format!("case {k}: pad_len {}", ws.pad_len()));
        }
        // Only the last window may run past the end, by repeating the last row.
        for i in 0..ws.count() {
            let win = ws.get(i);
            for r in 0..w {
                let src = (ws.start(i) + r).min(t - 1);
                if i < last && ws.start(i) + r >= t {
                    return Err(format!("case {k}: window {i} padded"));
                }
                if win[r * n..(r + 1) * n] != vals[src * n..(src + 1) * n] {
                    return Err(format!("case {k}: window {i} row {r} wrong"));
                }
            }
        }
        // Every stamp is covered.
        if (0..t).any(|x| !(0..ws.count()).any(|i| ws.start(i) <= x && x < ws.start(i) + w)) {
            return Err(format!("case {k}: uncovered stamp"));
        }
        let test = make_windows(&ts, w, 1, WindowPurpose::TestReco).map_err(|e| e.to_string())?;
        let mut joined: Vec<f64> = test.iter().flatten().collect();
        joined.truncate(t * n);
        if joined != vals {
            return Err(format!("case {k}: reassembly differs"));
        }
    }
    Ok("2000 random (T ≤ 500, W, S): count, padding, coverage, reassembly hold".into())
}

/// 6. OR ≥ majority on 10k label matrices; univariate methods coincide.
pub fn combination_laws() -> Outcome {
    let mut rng = seeded_rng(6);
    for k in 0..10_000 {
        let t = rng.random_range(1..=30usize);
        let n = rng.random_range(1..=7usize);
        let p = rng.random_range(0.0..1.0);
        let labels: Vec<u8> = (0..t * n).map(|_| u8::from(rng.random_bool(p))).collect();
        let or = combine_local(&labels, n, LocalMode::Or);
        let maj = combine_local(&labels, n, LocalMode::Majority);
        if or.iter().zip(&maj).any(|(o, m)| o < m) {
            return Err(format!("matrix {k}: majority exceeds OR"));
        }
    }
    let specs = [ThresholdSpec::pot(), ThresholdSpec::percentile(0.05)];
    for k in 0..200 {
        let t = rng.random_range(100..=600usize);
        let scores: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
        let s = ScoreSeries::new("u", scores, 1, vec![1; t]).map_err(|e| e.to_string())?;
        for spec in &specs {
            let ctx = LabelContext::default();
            let out: Vec<Vec<u8>> = Combine::ALL
                .iter()
                .map(|&c| extract_labels(&s, spec, c, &ctx).map(|o| o.labels))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            if out[0] != out[1] || out[1] != out[2] {
                return Err(format!("univariate series {k}: methods differ under {:?}", spec.method));
            }
        }
    }
    Ok("10000 matrices OR ≥ majority; 200 univariate series × {POT, percentile} identical across methods".into())
}

pub fn desk() -> Result<SyntheticDataset, String> {
    SyntheticProfile::desk(0).generate().map_err(|e| e.to_string())
}

/// 7. Grid-selected iTransformer-reco, POT, local-OR, five seeds.
#[allow(clippy::result_large_err)]
pub fn synthetic_end_to_end(data: &SyntheticDataset) -> Result<(String, ModelConfig), (String, Option<ModelConfig>)> {
    let t = Instant::now();
    let settings = EvalSettings::default();
    let report = search(
        &data.dataset,
        Approach::Reco,
        &desk_base(ModelKind::ItransformerReco),
        &DEFAULT_SEEDS,
        &settings,
        Some(Combine::LocalOr),
    )
    .map_err(|e| (e.to_string(), None))?;
    let selected = report.selected.clone();
    let (mean, std) = report
        .selected_result()
        .and_then(|r| r.summary(Some(Combine::LocalOr)))
        .ok_or_else(|| ("selected result missing".to_string(), None))?;
    let baseline = run_grid(
        &data.dataset,
        &[ModelConfig::baseline()],
        &DEFAULT_SEEDS[..1],
        &settings,
    )
    .map_err(|e| (e.to_string(), Some(selected.clone())))?;
    let (base_mean, _) = baseline[0].summary(Some(Combine::LocalOr)).unwrap_or_default();
    let elapsed = t.elapsed();
    let detail = format!(
        "selected W={} S={} M={}: local-OR MCC {mean:.3} ± {std:.3} (target ≥ 0.7); baseline {base_mean:.3}; {elapsed:.1?}",
        selected.window, selected.step, selected.d_model
    );
    if mean >= 0.7 && mean >= base_mean && elapsed <= Duration::from_secs(600) {
        Ok((detail, selected))
    } else {
        Err((detail, Some(selected)))
    }
}

/// 8. Clean vs 2 % contaminated training, MSE vs robust losses.
pub fn contamination(data: &SyntheticDataset, config: &ModelConfig) -> Outcome {
    let t = Instant::now();
    let plan = ContaminationPlan::new(config.clone(), 0.02, DEFAULT_SEEDS.to_vec());
    let report =
        contamination_study(&data.dataset, &data.specs, &plan, &EvalSettings::default()).map_err(|e| e.to_string())?;
    let get = |l: LossKind, r: f64| {
        report
            .row(l, r)
            .map(|x| x.mcc_mean)
            .ok_or(format!("missing row {l} {r}"))
    };
    let clean = get(LossKind::Mse, 0.0)?;
    let dirty = get(LossKind::Mse, 0.02)?;
    let robust = get(LossKind::Huber, 0.02)?.max(get(LossKind::Softdtw, 0.02)?);
    let detail = format!(
        "MSE clean {clean:.3} vs 2% {dirty:.3}; best robust at 2% {robust:.3} (≥ {:.3}); {:.1?}",
        dirty - 0.02,
        t.elapsed()
    );
    if clean > dirty && robust >= dirty - 0.02 && t.elapsed() <= Duration::from_secs(1200) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 9. Candidate memberships and selection against the brute-force rule.
pub fn grid_selection() -> Outcome {
    let base = ModelConfig::default();
    let stats = |a: f64| DatasetStats {
        a,
        b: 1,
        n_variates: 1,
        t_train: 1,
        t_test: 1,
    };
    let has = |c: &[ModelConfig], w, s, m| c.iter().any(|c| (c.window, c.step, c.d_model) == (w, s, m));
    if !has(&derive_candidates(&stats(1.0), Approach::Reco, &base), 10, 1, 2) {
        return Err("a = 1: (W=10, S=1, M=2) missing".into());
    }
    if !has(&derive_candidates(&stats(215.0), Approach::Reco, &base), 96, 10, 96) {
        return Err("a = 215: (W=96, S=10, M=96) missing".into());
    }
    let mut rng = seeded_rng(9);
    for k in 0..1000 {
        let len = rng.random_range(1..=8usize);
        let keys: Vec<SelectionKey> = (0..len)
            .map(|_| SelectionKey {
                mean: rng.random_range(0..=10u32) as f64 / 10.0,
                std: rng.random_range(0..=3u32) as f64 / 20.0,
                m: [2, 10, 19, 96][rng.random_range(0..4)],
                s: [1, 5, 10, 48][rng.random_range(0..4)],
                w: [10, 50, 96][rng.random_range(0..3)],
            })
            .collect();
        let fast = select_index(&keys).map(|i| keys[i]);
        if fast != select_brute(&keys) {
            return Err(format!("set {k}: {fast:?} vs {:?}", select_brute(&keys)));
        }
        let mut shuffled = keys.clone();
        shuffled.shuffle(&mut rng);
        if select_index(&shuffled).map(|i| shuffled[i]) != fast {
            return Err(format!("set {k}: order changes the choice"));
        }
    }
    Ok("a = 1 yields (10,1,2) and a = 215 yields (96,10,96); 1000 random sets match brute force".into())
}

/// 10. Two benchmark runs serialise to identical bytes.
pub fn determinism(data: &SyntheticDataset, selected: &ModelConfig) -> Outcome {
    let t = Instant::now();
    let seeds = [0, 1];
    let fc = ModelConfig {
        step: 1,
        d_model: 2,
        ..desk_base(ModelKind::ItransformerFc).clone()
    };
    let fc = ModelConfig { window: 10, ..fc };
    let usad = ModelConfig {
        lr: desk_base(ModelKind::Usad).lr,
        ..ModelConfig::usad()
    };
    let configs = benchmark_configs(selected, &fc, &usad);
    let entries = [(data.dataset.clone(), configs)];
    let run = || -> Result<String, String> {
        benchmark(&entries, &seeds, &EvalSettings::default())
            .and_then(|r| r.to_json())
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    if a != b {
        return Err("reports differ between runs".into());
    }
    let parsed = BenchmarkReport::from_json(&a).map_err(|e| e.to_string())?;
    if parsed.to_json().map_err(|e| e.to_string())? != a {
        return Err("report does not round-trip".into());
    }
    let base = parsed
        .row(&data.dataset.name, ModelKind::Baseline)
        .ok_or("baseline row missing")?;
    if base.mcc_std.is_some() {
        return Err("baseline row carries a std".into());
    }
    Ok(format!(
        "{} rows, {} bytes identical across runs and re-parse; {:.1?}",
        parsed.rows.len(),
        a.len(),
        t.elapsed()
    ))
}
