//! Synthetic multivariate signals with injected point and collective anomalies.
//!
//! The clean signal is a random linear mixture of sinusoids (one latent wave
//! per variate, distinct periods and phases) plus Gaussian noise with a
//! standard deviation of 5% of each variate's amplitude. Injection is a pure
//! function of the series and the spec, so the clean base can always be
//! regenerated from the seed.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, TimeSeries};
use crate::tensor_core::{seeded_rng, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Additive spike of `magnitude × range`.
    PointGlobal,
    /// Jump to the opposite side of the variate mean, `magnitude × range / 2`
    /// away from it: in range, but wrong for the local phase.
    PointContextual,
    /// Segment replaced by a square wave around the mean.
    CollectiveShape,
    /// Linear ramp from 0 to `magnitude × range` added over the segment.
    CollectiveTrend,
    /// Segment replaced by the same signal played `1 + magnitude` times
    /// faster (linear interpolation between samples).
    CollectiveSeason,
}

impl AnomalyKind {
    pub fn is_point(self) -> bool {
        matches!(self, AnomalyKind::PointGlobal | AnomalyKind::PointContextual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub start: usize,
    pub length: usize,
    pub variates: Vec<usize>,
    pub magnitude: f64,
}

impl AnomalySpec {
    pub fn point(kind: AnomalyKind, t: usize, variates: Vec<usize>, magnitude: f64) -> Self {
        Self {
            kind,
            start: t,
            length: 1,
            variates,
            magnitude,
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    fn validate(&self, len: usize, n_variates: usize) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSpec(msg));
        if self.length == 0 {
            return bad("length must be positive".into());
        }
        if self.kind.is_point() && self.length != 1 {
            return bad(format!("{:?} must have length 1", self.kind));
        }
        if self.end() > len {
            return bad(format!("[{}, {}) exceeds T={len}", self.start, self.end()));
        }
        if self.variates.is_empty() {
            return bad("no variates".into());
        }
        if let Some(v) = self.variates.iter().find(|&&v| v >= n_variates) {
            return bad(format!("variate {v} out of range for N={n_variates}"));
        }
        if !self.magnitude.is_finite() {
            return bad("magnitude must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct VariateStats {
    mean: f64,
    range: f64,
}

fn variate_stats(values: &[f64], n: usize) -> Vec<VariateStats> {
    let len = values.len() / n;
    (0..n)
        .map(|v| {
            let col = values.iter().skip(v).step_by(n);
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for &x in col {
                lo = lo.min(x);
                hi = hi.max(x);
                sum += x;
            }
            VariateStats {
                mean: sum / len as f64,
                range: hi - lo,
            }
        })
        .collect()
}

fn inject(values: &mut [f64], n: usize, spec: &AnomalySpec, stats: &[VariateStats]) {
    let len = values.len() / n;
    let original = values.to_vec();
    let half_period = (spec.length / 6).max(2);
    for &v in &spec.variates {
        let VariateStats { mean, range } = stats[v];
        for k in 0..spec.length {
            let t = spec.start + k;
            let x = &mut values[t * n + v];
            match spec.kind {
                AnomalyKind::PointGlobal => *x += spec.magnitude * range,
                AnomalyKind::PointContextual => {
                    let side = if *x >= mean { -1.0 } else { 1.0 };
                    *x = mean + side * spec.magnitude * range / 2.0;
                }
                AnomalyKind::CollectiveShape => {
                    let side = if (k / half_period).is_multiple_of(2) { 1.0 } else { -1.0 };
                    *x = mean + side * spec.magnitude * range / 2.0;
                }
                AnomalyKind::CollectiveTrend => {
                    *x += spec.magnitude * range * (k + 1) as f64 / spec.length as f64;
                }
                AnomalyKind::CollectiveSeason => {
                    let speed = 1.0 + spec.magnitude.abs();
                    let mut pos = k as f64 * speed;
                    if spec.start as f64 + pos > (len - 1) as f64 {
                        pos %= spec.length as f64;
                    }
                    let src = spec.start as f64 + pos;
                    let lo = src.floor() as usize;
                    let hi = (lo + 1).min(len - 1);
                    let frac = src - lo as f64;
                    *x = (1.0 - frac) * original[lo * n + v] + frac * original[hi * n + v];
                }
            }
        }
    }
}

fn check_overlaps(specs: &[AnomalySpec]) -> Result<(), DataError> {
    let mut sorted: Vec<&AnomalySpec> = specs.iter().collect();
    sorted.sort_by_key(|s| s.start);
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end() {
            return Err(DataError::OverlappingSpecs(pair[1].start));
        }
    }
    Ok(())
}

/// Clean-signal generator: mixed sinusoids plus noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub n_variates: usize,
    pub periods: Vec<f64>,
    pub phases: Vec<f64>,
    /// `N × N` mixing of latent waves into variates (row per variate).
    pub mixing: Vec<f64>,
    pub noise_fraction: f64,
}

impl SignalModel {
    pub fn from_seed(n_variates: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let periods = (0..n_variates).map(|_| rng.random_range(24.0..96.0)).collect();
        let phases = (0..n_variates).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut mixing = vec![0.0; n_variates * n_variates];
        for r in 0..n_variates {
            for c in 0..n_variates {
                mixing[r * n_variates + c] = if r == c { 1.0 } else { rng.random_range(-0.5..0.5) };
            }
        }
        Self {
            n_variates,
            periods,
            phases,
            mixing,
            noise_fraction: 0.05,
        }
    }

    /// Peak amplitude bound of variate `v`'s clean signal.
    pub fn amplitude(&self, v: usize) -> f64 {
        let n = self.n_variates;
        self.mixing[v * n..(v + 1) * n].iter().map(|a| a.abs()).sum()
    }

    pub fn clean_value(&self, t: usize, v: usize) -> f64 {
        let n = self.n_variates;
        (0..n)
            .map(|k| self.mixing[v * n + k] * (2.0 * PI * t as f64 / self.periods[k] + self.phases[k]).sin())
            .sum()
    }

    /// Rows `t0 .. t0 + len` with noise drawn from `rng`.
    pub fn render(&self, t0: usize, len: usize, rng: &mut SeededRng) -> Vec<f64> {
        let n = self.n_variates;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::with_capacity(len * n);
        for t in t0..t0 + len {
            for v in 0..n {
                let noise = normal.sample(rng) * self.noise_fraction * self.amplitude(v);
                out.push(self.clean_value(t, v) + noise);
            }
        }
        out
    }
}

const NOISE_STREAM: u64 = 0x5eed_0001;

/// Generates a `T × N` series and injects `specs`; labels are 1 exactly on
/// the union of spec supports.
pub fn synthesize(len: usize, n_variates: usize, specs: &[AnomalySpec], seed: u64) -> Result<TimeSeries, DataError> {
    if len == 0 || n_variates == 0 {
        return Err(DataError::Empty("synthesize needs T >= 1 and N >= 1".into()));
    }
    for s in specs {
        s.validate(len, n_variates)?;
    }
    check_overlaps(specs)?;
    let model = SignalModel::from_seed(n_variates, seed);
    let mut values = model.render(0, len, &mut seeded_rng(seed ^ NOISE_STREAM));
    let stats = variate_stats(&values, n_variates);
    let mut labels = vec![0u8; len];
    for s in specs {
        inject(&mut values, n_variates, s, &stats);
        labels[s.start..s.end()].iter_mut().for_each(|l| *l = 1);
    }
    TimeSeries::new(format!("synthetic-{seed}"), values, n_variates)?.with_labels(labels)
}

/// Largest contamination rate accepted by [`contaminate`].
pub const MAX_CONTAMINATION_RATE: f64 = 0.05;

/// Injects anomalies shaped like the `pool` templates at random free
/// positions until `round(rate × T)` timestamps are labelled. The final
/// collective anomaly is shortened so the target is met exactly.
pub fn contaminate(train: &TimeSeries, pool: &[AnomalySpec], rate: f64, seed: u64) -> Result<TimeSeries, DataError> {
    if !(0.0..=MAX_CONTAMINATION_RATE).contains(&rate) {
        return Err(DataError::InfeasibleRate {
            rate,
            reason: format!("must lie in [0, {MAX_CONTAMINATION_RATE}]"),
        });
    }
    let len = train.len();
    let n = train.n_variates();
    let mut labels = train.labels().map(<[u8]>::to_vec).unwrap_or_else(|| vec![0; len]);
    let mut out = train.clone();
    let existing: usize = labels.iter().map(|&l| l as usize).sum();
    let target = (rate * len as f64).round() as usize;
    if target == 0 {
        out.set_labels(labels)?;
        return Ok(out);
    }
    if pool.is_empty() {
        return Err(DataError::InfeasibleRate {
            rate,
            reason: "empty anomaly pool".into(),
        });
    }
    let stats = variate_stats(train.values(), n);
    let mut rng = seeded_rng(seed);
    let mut added = 0;
    let mut k = 0;
    while added < target {
        let template = &pool[k % pool.len()];
        k += 1;
        let mut length = template.length.min(len);
        if !template.kind.is_point() {
            length = length.min(target - added);
        }
        let mut variates: Vec<usize> = template.variates.iter().copied().filter(|&v| v < n).collect();
        if variates.is_empty() {
            variates.push(0);
        }
        let mut placed = None;
        for _ in 0..1000 {
            let start = rng.random_range(0..=len - length);
            let lo = start.saturating_sub(1);
            let hi = (start + length + 1).min(len);
            if labels[lo..hi].iter().all(|&l| l == 0) {
                placed = Some(start);
                break;
            }
        }
        let Some(start) = placed else {
            return Err(DataError::InfeasibleRate {
                rate,
                reason: format!(
                    "no free slot of length {length} after {} labelled stamps",
                    existing + added
                ),
            });
        };
        let spec = AnomalySpec {
            kind: if length == 1 && !template.kind.is_point() {
                AnomalyKind::PointGlobal
            } else {
                template.kind
            },
            start,
            length,
            variates,
            magnitude: template.magnitude,
        };
        inject(out.values_mut(), n, &spec, &stats);
        labels[start..start + length].iter_mut().for_each(|l| *l = 1);
        added += length;
    }
    out.set_labels(labels)?;
    Ok(out)
}

/// Parameters of a reproducible train/test pair with anomalies in the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticProfile {
    pub name: String,
    pub t_train: usize,
    pub t_test: usize,
    pub n_variates: usize,
    pub n_collective: usize,
    pub n_point: usize,
    pub collective_len_min: usize,
    pub collective_len_max: usize,
    pub seed: u64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self::desk(0)
    }
}

/// Output of [`SyntheticProfile::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub specs: Vec<AnomalySpec>,
    pub signal: SignalModel,
}

impl SyntheticProfile {
    /// `T = 5000` per split, `N = 5`, 10 collective and 10 point anomalies.
    pub fn desk(seed: u64) -> Self {
        Self {
            name: "synthetic".into(),
            t_train: 5000,
            t_test: 5000,
            n_variates: 5,
            n_collective: 10,
            n_point: 10,
            collective_len_min: 20,
            collective_len_max: 60,
            seed,
        }
    }

    fn random_specs(&self, rng: &mut SeededRng) -> Result<Vec<AnomalySpec>, DataError> {
        let len = self.t_test;
        let n = self.n_variates;
        let collective = [
            AnomalyKind::CollectiveShape,
            AnomalyKind::CollectiveTrend,
            AnomalyKind::CollectiveSeason,
        ];
        let points = [AnomalyKind::PointGlobal, AnomalyKind::PointContextual];
        let mut plan: Vec<(AnomalyKind, usize)> = Vec::new();
        for i in 0..self.n_collective {
            let l = rng.random_range(self.collective_len_min..=self.collective_len_max);
            plan.push((collective[i % collective.len()], l));
        }
        for i in 0..self.n_point {
            plan.push((points[i % points.len()], 1));
        }
        let mut taken = vec![false; len];
        let gap = 10;
        let margin = 20.min(len / 10);
        let mut specs = Vec::with_capacity(plan.len());
        let mut all_variates: Vec<usize> = (0..n).collect();
        for (kind, length) in plan {
            if length + 2 * margin > len {
                return Err(DataError::InvalidSpec(format!(
                    "anomaly of length {length} does not fit in T={len}"
                )));
            }
            let mut start = None;
            for _ in 0..10_000 {
                let s = rng.random_range(margin..=len - margin - length);
                let lo = s.saturating_sub(gap);
                let hi = (s + length + gap).min(len);
                if taken[lo..hi].iter().all(|&x| !x) {
                    start = Some(s);
                    break;
                }
            }
            let start = start.ok_or_else(|| DataError::InvalidSpec("too many anomalies for the test length".into()))?;
            taken[start..start + length].iter_mut().for_each(|x| *x = true);
            let k = rng.random_range(1..=n.div_ceil(2));
            all_variates.shuffle(rng);
            let mut variates = all_variates[..k].to_vec();
            variates.sort_unstable();
            let magnitude = match kind {
                AnomalyKind::PointGlobal => rng.random_range(0.6..1.0),
                AnomalyKind::PointContextual => 0.9,
                AnomalyKind::CollectiveShape => 0.8,
                AnomalyKind::CollectiveTrend => rng.random_range(1.0..2.0),
                AnomalyKind::CollectiveSeason => 1.0,
            };
            specs.push(AnomalySpec {
                kind,
                start,
                length,
                variates,
                magnitude,
            });
        }
        specs.sort_by_key(|s| s.start);
        Ok(specs)
    }

    pub fn generate(&self) -> Result<SyntheticDataset, DataError> {
        if self.n_variates == 0 || self.t_train == 0 || self.t_test == 0 {
            return Err(DataError::Empty("synthetic profile has an empty split".into()));
        }
        let signal = SignalModel::from_seed(self.n_variates, self.seed);
        let mut rng = seeded_rng(self.seed ^ NOISE_STREAM);
        let train_values = signal.render(0, self.t_train, &mut rng);
        let mut test_values = signal.render(self.t_train, self.t_test, &mut rng);
        let specs = self.random_specs(&mut seeded_rng(self.seed.wrapping_add(0xa11)))?;
        let stats = variate_stats(&test_values, self.n_variates);
        let mut labels = vec![0u8; self.t_test];
        for s in &specs {
            inject(&mut test_values, self.n_variates, s, &stats);
            labels[s.start..s.end()].iter_mut().for_each(|l| *l = 1);
        }
        let train = TimeSeries::new(format!("{}-train", self.name), train_values, self.n_variates)?
            .with_labels(vec![0; self.t_train])?;
        let test = TimeSeries::new(format!("{}-test", self.name), test_values, self.n_variates)?.with_labels(labels)?;
        Ok(SyntheticDataset {
            dataset: Dataset::new(self.name.clone(), train, test)?,
            specs,
            signal,
        })
    }
}
