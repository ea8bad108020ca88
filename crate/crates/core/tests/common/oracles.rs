//! Direct, slow reference implementations.

use tsad::experiment::SelectionKey;

/// Every monotone alignment path from `(0, 0)` to `(n-1, m-1)` with unit
/// steps right, down or diagonal; each path is the list of cells it visits.
pub fn monotone_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(i: usize, j: usize, n: usize, m: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        cur.push((i, j));
        if i == n - 1 && j == m - 1 {
            out.push(cur.clone());
        } else {
            if i + 1 < n {
                walk(i + 1, j, n, m, cur, out);
            }
            if j + 1 < m {
                walk(i, j + 1, n, m, cur, out);
            }
            if i + 1 < n && j + 1 < m {
                walk(i + 1, j + 1, n, m, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

fn path_costs(x: &[f64], y: &[f64], dim: usize) -> Vec<f64> {
    let (n, m) = (x.len() / dim, y.len() / dim);
    monotone_paths(n, m)
        .iter()
        .map(|p| {
            p.iter()
                .map(|&(i, j)| (0..dim).map(|k| (x[i * dim + k] - y[j * dim + k]).powi(2)).sum::<f64>())
                .sum()
        })
        .collect()
}

/// `−γ log Σ_paths exp(−cost/γ)`, evaluated with a max shift.
pub fn softdtw_brute(x: &[f64], y: &[f64], dim: usize, gamma: f64) -> f64 {
    let costs = path_costs(x, y, dim);
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = costs.iter().map(|c| (-(c - lo) / gamma).exp()).sum();
    lo - gamma * s.ln()
}

pub fn dtw_brute(x: &[f64], y: &[f64], dim: usize) -> f64 {
    path_costs(x, y, dim).into_iter().fold(f64::INFINITY, f64::min)
}

/// MCC straight from its definition in floating point; 0 for an empty marginal.
pub fn mcc_direct(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// Selection rule written as successive set filters.
///
/// 1. The reference interval belongs to the best mean (narrowest interval
///    among equal best means).
/// 2. Keep every key whose interval reaches it.
/// 3. Narrow to the smallest M, then S, then W, then the highest mean, then
///    the lowest std.
pub fn select_brute(keys: &[SelectionKey]) -> Option<SelectionKey> {
    if keys.is_empty() {
        return None;
    }
    let best = keys.iter().map(|k| k.mean).fold(f64::NEG_INFINITY, f64::max);
    let best_std = keys
        .iter()
        .filter(|k| k.mean == best)
        .map(|k| k.std)
        .fold(f64::INFINITY, f64::min);
    let lo = best - best_std;
    let mut set: Vec<SelectionKey> = keys.iter().copied().filter(|k| k.mean + k.std >= lo).collect();
    let m = set.iter().map(|k| k.m).min()?;
    set.retain(|k| k.m == m);
    let s = set.iter().map(|k| k.s).min()?;
    set.retain(|k| k.s == s);
    let w = set.iter().map(|k| k.w).min()?;
    set.retain(|k| k.w == w);
    let mean = set.iter().map(|k| k.mean).fold(f64::NEG_INFINITY, f64::max);
    set.retain(|k| k.mean == mean);
    let std = set.iter().map(|k| k.std).fold(f64::INFINITY, f64::min);
    set.retain(|k| k.std == std);
    set.first().copied()
}

/// `ceil((T − W) / S) + 1` by counting window starts directly.
pub fn window_count(t: usize, w: usize, s: usize) -> usize {
    let mut count = 1;
    let mut start = 0;
    while start + w < t {
        start += s;
        count += 1;
    }
    count
}
