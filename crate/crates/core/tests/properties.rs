//! Invariants checked over generated inputs.

mod common;

use common::oracles::{select_brute, window_count};
use proptest::prelude::*;
use tsad::dataio::{
    make_windows, normalize, synthesize, AnomalyKind, AnomalySpec, NormMode, TimeSeries, WindowPurpose,
};
use tsad::experiment::{derive_candidates, select_index, Approach, DatasetStats, SelectionKey};
use tsad::labeling::{combine_global, combine_local, LocalMode};
use tsad::metrics::{mcc, Confusion};
use tsad::models::{init_transformer, ModelConfig, ModelKind, TrainedModel};
use tsad::scoring::{score, ScoreSeries};

fn series(t: usize, n: usize) -> impl Strategy<Value = TimeSeries> {
    prop::collection::vec(-3.0..3.0f64, t * n).prop_map(move |v| TimeSeries::new("p", v, n).unwrap())
}

fn untrained(kind: ModelKind, w: usize, n: usize, seed: u64) -> TrainedModel {
    let config = ModelConfig {
        n_layers: 1,
        seed,
        ..ModelConfig::new(kind, w, 1, 4)
    };
    TrainedModel {
        params: init_transformer(&config, n),
        config,
        n_variates: n,
        train_loss_curve: Vec::new(),
        norm: None,
    }
}

fn key() -> impl Strategy<Value = SelectionKey> {
    (0..=10u32, 0..=3u32, 0..4usize, 0..4usize, 0..3usize).prop_map(|(mean, std, m, s, w)| SelectionKey {
        mean: mean as f64 / 10.0,
        std: std as f64 / 20.0,
        m: [2, 10, 19, 96][m],
        s: [1, 5, 10, 48][s],
        w: [10, 50, 96][w],
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn window_count_and_padding((t, w, s) in (1..300usize).prop_flat_map(|t| (Just(t), 1..=t))
        .prop_flat_map(|(t, w)| (Just(t), Just(w), 1..=w)),
        n in 1..4usize)
    {
        let ts = TimeSeries::new("w", (0..t * n).map(|x| x as f64).collect(), n).unwrap();
        let ws = make_windows(&ts, w, s, WindowPurpose::Train).unwrap();
        prop_assert_eq!(ws.count(), window_count(t, w, s));
        let last = ws.count() - 1;
        prop_assert_eq!(ws.start(last) + w, t + ws.pad_len());
        prop_assert!(ws.start(last.saturating_sub(1)) + w <= t || last == 0);
        let tail = ws.get(last);
        for r in (w - ws.pad_len())..w {
            prop_assert_eq!(&tail[r * n..(r + 1) * n], ts.row(t - 1));
        }
    }

    #[test]
    fn windows_longer_than_series_are_rejected(t in 1..50usize, extra in 1..10usize) {
        let ts = TimeSeries::new("w", vec![0.0; t], 1).unwrap();
        prop_assert!(make_windows(&ts, t + extra, 1, WindowPurpose::Train).is_err());
    }

    #[test]
    fn local_or_dominates_majority(n in 1..8usize, bits in prop::collection::vec(0..2u8, 1..200)) {
        let t = bits.len() / n;
        prop_assume!(t > 0);
        let labels = &bits[..t * n];
        let or = combine_local(labels, n, LocalMode::Or);
        let maj = combine_local(labels, n, LocalMode::Majority);
        for (row, (o, m)) in labels.chunks(n).zip(or.iter().zip(&maj)) {
            let k = row.iter().filter(|&&b| b == 1).count();
            prop_assert_eq!(*o == 1, k >= 1);
            prop_assert_eq!(*m == 1, 2 * k >= n);
        }
    }

    #[test]
    fn global_score_is_variate_mean(n in 1..5usize, v in prop::collection::vec(0.0..10.0f64, 4..80)) {
        let t = v.len() / n;
        let vals = v[..t * n].to_vec();
        let s = ScoreSeries::new("g", vals.clone(), n, vec![1; t]).unwrap();
        for (i, g) in combine_global(&s).iter().enumerate() {
            let direct: f64 = vals[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
            prop_assert!((g - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_ignores_order(keys in prop::collection::vec(key(), 1..10), rot in 0..10usize) {
        let pick = select_index(&keys).map(|i| keys[i]);
        prop_assert_eq!(pick, select_brute(&keys));
        let mut rev = keys.clone();
        rev.reverse();
        let k = rot % rev.len();
        rev.rotate_left(k);
        prop_assert_eq!(select_index(&rev).map(|i| rev[i]), pick);
    }

    #[test]
    fn candidate_grid_is_valid(a in 1.0..5000.0f64, heads in 1..4usize) {
        let stats = DatasetStats { a, b: 1, n_variates: 3, t_train: 10_000, t_test: 10_000 };
        let base = ModelConfig { n_heads: heads, ..ModelConfig::default() };
        for approach in [Approach::Reco, Approach::Fc] {
            let c = derive_candidates(&stats, approach, &base);
            let cap = if approach == Approach::Reco { 12 } else { 3 };
            prop_assert!(!c.is_empty() && c.len() <= cap);
            for (i, x) in c.iter().enumerate() {
                prop_assert!(x.step >= 1 && x.step <= x.window && x.d_model <= x.window);
                prop_assert!(x.window >= 10);
                prop_assert!(x.validate().is_ok(), "{:?}", x);
                prop_assert!(!c[..i].contains(x));
            }
        }
    }

    #[test]
    fn mcc_is_bounded(tp in 0..1000u64, tn in 0..1000u64, fp in 0..1000u64, fn_ in 0..1000u64) {
        let m = mcc(&Confusion::new(tp, tn, fp, fn_));
        prop_assert!((-1.0..=1.0).contains(&m));
    }

    #[test]
    fn zscore_is_idempotent(ts in series(40, 3)) {
        let once = normalize(&ts, NormMode::Zscore, None).unwrap();
        let twice = normalize(&once, NormMode::Zscore, None).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn synthetic_labels_match_injections(
        seed in 0..1000u64,
        slots in prop::collection::btree_set(0..9usize, 1..5),
        kinds in prop::collection::vec(0..5usize, 5),
    ) {
        let (len, n) = (400, 3);
        let all = [
            AnomalyKind::PointGlobal,
            AnomalyKind::PointContextual,
            AnomalyKind::CollectiveShape,
            AnomalyKind::CollectiveTrend,
            AnomalyKind::CollectiveSeason,
        ];
        let specs: Vec<AnomalySpec> = slots
            .iter()
            .zip(&kinds)
            .map(|(&slot, &k)| {
                let kind = all[k];
                let length = if kind.is_point() { 1 } else { 15 };
                AnomalySpec { kind, start: 20 + slot * 40, length, variates: vec![slot % n], magnitude: 1.0 }
            })
            .collect();
        let clean = synthesize(len, n, &[], seed).unwrap();
        let dirty = synthesize(len, n, &specs, seed).unwrap();
        let labels = dirty.labels().unwrap();
        for (t, &label) in labels.iter().enumerate() {
            let inside = specs.iter().find(|s| s.start <= t && t < s.end());
            prop_assert_eq!(label == 1, inside.is_some());
            for v in 0..n {
                if inside.is_none_or(|s| !s.variates.contains(&v)) {
                    prop_assert_eq!(clean.value(t, v), dirty.value(t, v));
                }
            }
        }
    }

    #[test]
    fn model_outputs_have_expected_shapes(w in 2..8usize, n in 1..4usize, b in 1..4usize, seed in 0..50u64) {
        let x: Vec<f64> = (0..b * w * n).map(|i| (i as f64 * 0.37).sin()).collect();
        for kind in [ModelKind::ItransformerReco, ModelKind::TransformerReco] {
            let out = untrained(kind, w, n, seed).reconstruct_batch(&x).unwrap();
            prop_assert_eq!(out.len(), b * w * n);
            prop_assert!(out.iter().all(|v| v.is_finite()));
        }
        let out = untrained(ModelKind::ItransformerFc, w, n, seed).forecast_batch(&x).unwrap();
        prop_assert_eq!(out.len(), b * n);
    }

    #[test]
    fn reconstruction_scores_are_window_local(ts in series(37, 2), w in 2..8usize, t in 0..37usize) {
        let model = untrained(ModelKind::ItransformerReco, w, 2, 1);
        let before = score(&model, &ts).unwrap();
        let mut vals = ts.values().to_vec();
        vals[t * 2] += 5.0;
        let after = score(&model, &TimeSeries::new("p", vals, 2).unwrap()).unwrap();
        let block = (t / w) * w..((t / w) * w + w).min(37);
        for u in 0..37 {
            if !block.contains(&u) {
                prop_assert_eq!(before.row(u), after.row(u));
            }
        }
    }

    #[test]
    fn forecast_scores_are_window_local(ts in series(30, 2), w in 2..6usize, t in 0..30usize) {
        let model = untrained(ModelKind::ItransformerFc, w, 2, 2);
        let before = score(&model, &ts).unwrap();
        let mut vals = ts.values().to_vec();
        vals[t * 2 + 1] -= 4.0;
        let after = score(&model, &TimeSeries::new("p", vals, 2).unwrap()).unwrap();
        for u in 0..30 {
            if u < t || u > t + w {
                prop_assert_eq!(before.row(u), after.row(u));
            }
        }
        prop_assert!(before.coverage()[..w].iter().all(|&c| c == 0));
    }
}
