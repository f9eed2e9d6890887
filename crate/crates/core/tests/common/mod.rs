//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.
#![allow(dead_code)]

use ndarray::{Array2, Array3};

pub const EPS: f64 = 1e-12;

/// Direct evaluation of the convolutive model with explicit zero padding.
pub fn brute_apply(w: &Array3<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (n, tau, r) = w.dim();
    let m = h.ncols();
    let mut out = Array2::zeros((n, m));
    for f in 0..n {
        for t in 0..m {
            let mut acc = 0.0;
            for q in 0..r {
                for i in 0..tau {
                    if t >= i {
                        acc += w[[f, i, q]] * h[[q, t - i]];
                    }
                }
            }
            out[[f, t]] = acc;
        }
    }
    out
}

/// Plain matrix product for the `tau = 1` case.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (rows, inner) = a.dim();
    let cols = b.ncols();
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += a[[i, k]] * b[[k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Classical KL-NMF activation update `H * (W^T (M / WH)) / (W^T 1)`.
pub fn nmf_update_h(m: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let wh = matmul(w, h);
    let (n, cols) = m.dim();
    let r = w.ncols();
    let mut out = h.clone();
    for q in 0..r {
        let col_sum: f64 = (0..n).map(|f| w[[f, q]]).sum();
        for t in 0..cols {
            let num: f64 = (0..n).map(|f| w[[f, q]] * m[[f, t]] / (wh[[f, t]] + EPS)).sum();
            out[[q, t]] = h[[q, t]] * num / (col_sum + EPS);
        }
    }
    out
}

/// Classical KL-NMF template update `W * ((M / WH) H^T) / (1 H^T)`.
pub fn nmf_update_w(m: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let wh = matmul(w, h);
    let (n, cols) = m.dim();
    let r = w.ncols();
    let mut out = w.clone();
    for q in 0..r {
        let row_sum: f64 = (0..cols).map(|t| h[[q, t]]).sum();
        for f in 0..n {
            let num: f64 = (0..cols).map(|t| m[[f, t]] / (wh[[f, t]] + EPS) * h[[q, t]]).sum();
            out[[f, q]] = w[[f, q]] * num / (row_sum + EPS);
        }
    }
    out
}

/// Generalized KL divergence, coded from the definition.
pub fn kl(m: &Array2<f64>, a: &Array2<f64>) -> f64 {
    m.iter()
        .zip(a.iter())
        .map(|(&x, &y)| {
            let y = y + EPS;
            if x == 0.0 {
                y
            } else {
                x * (x / y).ln() - x + y
            }
        })
        .sum()
}

/// Onset rule evaluated literally at every frame: the value must exceed the
/// zero-padded 21-frame mean plus `delta`.
pub fn brute_onsets(row: &[f64], delta: f64, half: usize) -> Vec<usize> {
    let m = row.len() as isize;
    let half = half as isize;
    (0..m)
        .filter(|&t| {
            let mut sum = 0.0;
            for j in -half..=half {
                let k = t + j;
                if k >= 0 && k < m {
                    sum += row[k as usize];
                }
            }
            row[t as usize] > sum / (2 * half + 1) as f64 + delta
        })
        .map(|t| t as usize)
        .collect()
}

/// Largest matching by exhaustive search. `feasible[r][e]` says whether
/// reference `r` may pair with estimate `e`.
pub fn brute_max_matching(feasible: &[Vec<bool>]) -> usize {
    fn go(r: usize, feasible: &[Vec<bool>], used: &mut Vec<bool>) -> usize {
        if r == feasible.len() {
            return 0;
        }
        let mut best = go(r + 1, feasible, used);
        for e in 0..used.len() {
            if feasible[r][e] && !used[e] {
                used[e] = true;
                best = best.max(1 + go(r + 1, feasible, used));
                used[e] = false;
            }
        }
        best
    }
    let est = feasible.first().map_or(0, |row| row.len());
    go(0, feasible, &mut vec![false; est])
}

/// Cosine similarity between two templates after the best circular shift of
/// the time axis of `b`.
pub fn best_shift_cosine(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (n, tau) = a.dim();
    let norm = |x: &Array2<f64>| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let na = norm(a);
    let nb = norm(b);
    (0..tau)
        .map(|s| {
            let mut dot = 0.0;
            for f in 0..n {
                for i in 0..tau {
                    dot += a[[f, i]] * b[[f, (i + s) % tau]];
                }
            }
            dot / (na * nb)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
