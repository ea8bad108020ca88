//! Peaks-over-threshold: a generalised Pareto tail fitted above a high
//! empirical quantile, extrapolated to the requested risk level.

use serde::{Deserialize, Serialize};

use super::{threshold_percentile, LabelError};

/// Generalised Pareto fit of the excesses over `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub u: f64,
    pub sigma: f64,
    pub xi: f64,
    pub n_excess: usize,
    pub n_total: usize,
}

impl GpdFit {
    /// Threshold exceeded with probability `q` under the fitted tail.
    pub fn quantile(&self, q: f64) -> f64 {
        let r = q * self.n_total as f64 / self.n_excess as f64;
        if self.xi.abs() < 1e-8 {
            self.u - self.sigma * r.ln()
        } else {
            self.u + self.sigma / self.xi * (r.powf(-self.xi) - 1.0)
        }
    }

    /// Tail CDF of an excess `y ≥ 0`.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if self.xi.abs() < 1e-8 {
            return 1.0 - (-y / self.sigma).exp();
        }
        let s = 1.0 + self.xi * y / self.sigma;
        if s <= 0.0 {
            1.0
        } else {
            1.0 - s.powf(-1.0 / self.xi)
        }
    }
}

fn log_likelihood(y: &[f64], xi: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = y.len() as f64;
    if xi.abs() < 1e-12 {
        return -n * sigma.ln() - y.iter().sum::<f64>() / sigma;
    }
    let tau = xi / sigma;
    let mut acc = 0.0;
    for &v in y {
        let s = 1.0 + tau * v;
        if s <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += s.ln();
    }
    -n * sigma.ln() - (1.0 + 1.0 / xi) * acc
}

/// Profile-likelihood equation in `t = ξ/σ`: `u(t)·v(t) − 1` with
/// `u = 1 + mean(ln(1+tY))`, `v = mean(1/(1+tY))`.
fn grimshaw_w(y: &[f64], t: f64) -> f64 {
    let n = y.len() as f64;
    let (mut lsum, mut isum) = (0.0, 0.0);
    for &v in y {
        let s = 1.0 + t * v;
        lsum += s.ln();
        isum += 1.0 / s;
    }
    (1.0 + lsum / n) * (isum / n) - 1.0
}

/// Sign-change scan on a grid followed by bisection.
fn roots(y: &[f64], lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let mut out = Vec::new();
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return out;
    }
    let step = (hi - lo) / grid as f64;
    let mut a = lo;
    let mut fa = grimshaw_w(y, a);
    for k in 1..=grid {
        let b = if k == grid { hi } else { lo + step * k as f64 };
        let fb = grimshaw_w(y, b);
        if fa.is_finite() && fb.is_finite() && fa * fb < 0.0 {
            let (mut l, mut r, mut fl) = (a, b, fa);
            for _ in 0..100 {
                let m = 0.5 * (l + r);
                let fm = grimshaw_w(y, m);
                if fm == 0.0 {
                    l = m;
                    r = m;
                    break;
                }
                if fl * fm < 0.0 {
                    r = m;
                } else {
                    l = m;
                    fl = fm;
                }
            }
            out.push(0.5 * (l + r));
        }
        a = b;
        fa = fb;
    }
    out
}

/// Maximum-likelihood GPD fit on positive excesses.
///
/// Candidates are the exponential case (`ξ = 0`, `σ = mean`) and every
/// non-trivial root of the profile equation; when no root exists, the
/// method-of-moments estimate is added instead. The candidate with the highest likelihood wins.
pub fn fit_gpd(excesses: &[f64]) -> (f64, f64) {
    let y = excesses;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-8;

    let mut candidates = vec![(0.0, mean)];
    let mut zeros = Vec::new();
    let a = -1.0 / ymax;
    let edge = if a.abs() < 2.0 * eps { a.abs() / 10.0 } else { eps };
    zeros.extend(roots(y, a + edge, -edge, 200));
    if ymin > 0.0 {
        let b = 2.0 * (mean - ymin) / (mean * ymin);
        let c = 2.0 * (mean - ymin) / (ymin * ymin);
        zeros.extend(roots(y, b.max(edge), c, 200));
    }
    // w(0) = 0 always; roots that collapse onto it only restate the ξ = 0 case.
    zeros.retain(|t| (t * ymax).abs() > 1e-3);
    for t in &zeros {
        let xi = y.iter().map(|v| (1.0 + t * v).ln()).sum::<f64>() / n;
        let sigma = xi / t;
        if sigma > 0.0 && sigma.is_finite() && xi.is_finite() {
            candidates.push((xi, sigma));
        }
    }
    if zeros.is_empty() {
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 {
            let r = mean * mean / var;
            let xi = 0.5 * (1.0 - r);
            let mut sigma = 0.5 * mean * (r + 1.0);
            if xi < 0.0 {
                // keep every excess inside the fitted support
                sigma = sigma.max(-xi * ymax * (1.0 + 1e-9));
            }
            candidates.push((xi, sigma));
        }
    }
    let mut best = candidates[0];
    let mut best_ll = log_likelihood(y, best.0, best.1);
    for &(xi, sigma) in &candidates[1..] {
        let ll = log_likelihood(y, xi, sigma);
        if ll > best_ll {
            best = (xi, sigma);
            best_ll = ll;
        }
    }
    best
}

/// POT threshold: `u` is the `init_level` empirical quantile, the tail above
/// it is fitted by [`fit_gpd`], and the returned threshold is exceeded with
/// probability `q`.
pub fn threshold_pot(scores: &[f64], q: f64, init_level: f64) -> Result<(f64, GpdFit), LabelError> {
    if !(init_level > 0.0 && init_level < 1.0) {
        return Err(LabelError::InvalidSpec(format!(
            "init_level {init_level} must lie in (0, 1)"
        )));
    }
    if !(q > 0.0 && q < 1.0 - init_level) {
        return Err(LabelError::InvalidSpec(format!(
            "risk q={q} must lie in (0, {})",
            1.0 - init_level
        )));
    }
    if scores.is_empty() {
        return Err(LabelError::Empty);
    }
    let u = threshold_percentile(scores, 1.0 - init_level)?;
    let excesses: Vec<f64> = scores.iter().filter(|&&s| s > u).map(|s| s - u).collect();
    if excesses.len() < 2 {
        return Err(LabelError::TooFewExcesses {
            found: excesses.len(),
            init_level,
        });
    }
    let (xi, sigma) = fit_gpd(&excesses);
    let fit = GpdFit {
        u,
        sigma,
        xi,
        n_excess: excesses.len(),
        n_total: scores.len(),
    };
    let z = fit.quantile(q);
    if !z.is_finite() {
        return Err(LabelError::FitFailed(format!("non-finite threshold for {fit:?}")));
    }
    Ok((z, fit))
}
