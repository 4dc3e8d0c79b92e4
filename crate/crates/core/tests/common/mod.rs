//! Independent reference implementations used as test oracles. They favor
//! obviousness over speed and share no code with the library beyond its
//! input types.
#![allow(dead_code)]

use dbn_ccm::rng::CounterRng;
use dbn_ccm::series::{Recording, TimeSeries};

pub fn series(label: &str, values: Vec<f64>) -> TimeSeries {
    TimeSeries::new(label, values, 1.0).unwrap()
}

pub fn recording(channels: Vec<Vec<f64>>) -> Recording {
    let chans = channels
        .into_iter()
        .enumerate()
        .map(|(i, v)| series(&format!("c{i}"), v))
        .collect();
    Recording::new(chans, None).unwrap()
}

pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = CounterRng::new(seed);
    (0..n).map(|_| rng.normal()).collect()
}

/// Row `k` of the delay embedding, written straight from the definition.
pub fn delay_row(x: &[f64], e: usize, tau: usize, k: usize) -> Vec<f64> {
    let t = k + (e - 1) * tau;
    (0..e).map(|j| x[t - j * tau]).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Full scan: every admissible row, sorted by (distance, row), first `k`.
pub fn brute_knn(rows: &[Vec<f64>], q: usize, radius: usize, k: usize) -> Option<(Vec<usize>, Vec<f64>)> {
    let mut all: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&j| j != q && j.abs_diff(q) > radius)
        .map(|j| (dist(&rows[q], &rows[j]), j))
        .collect();
    if all.len() < k {
        return None;
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    Some((all.iter().map(|p| p.1).collect(), all.iter().map(|p| p.0).collect()))
}

/// Sequential cross map with per-query mean bandwidth. `p` holds one density
/// per time index (rows with `None` leave the library).
pub fn naive_cross_map(x: &[f64], y: &[f64], e: usize, tau: usize, p: Option<&[Option<f64>]>) -> (Vec<f64>, f64) {
    let off = (e - 1) * tau;
    let n = x.len() - off;
    let rows: Vec<Vec<f64>> = (0..n).map(|k| delay_row(x, e, tau, k)).collect();
    let mut preds = Vec::with_capacity(n);
    for q in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q && j.abs_diff(q) > off)
            .filter(|&j| p.is_none_or(|p| p[j + off].is_some()))
            .map(|j| (dist(&rows[q], &rows[j]), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(e + 1);
        let sigma = cand.iter().map(|c| c.0).sum::<f64>() / cand.len() as f64;
        let mut u: Vec<f64> = cand
            .iter()
            .map(|c| if sigma > 0.0 { (-(c.0 * c.0) / (2.0 * sigma * sigma)).exp() } else { 1.0 })
            .collect();
        if let Some(p) = p {
            let ps: Vec<f64> = cand.iter().map(|c| p[c.1 + off].unwrap()).collect();
            let pmax = ps.iter().cloned().fold(0.0, f64::max);
            for (ui, pi) in u.iter_mut().zip(&ps) {
                *ui *= pi / pmax;
            }
        }
        let total: f64 = u.iter().sum();
        preds.push(cand.iter().zip(&u).map(|(c, ui)| ui / total * y[c.1 + off]).sum());
    }
    let rho = pearson(&y[off..], &preds);
    (preds, rho)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    sab / (saa * sbb).sqrt()
}

/// Least squares by normal equations and Gauss-Jordan elimination with
/// partial pivoting. Returns the coefficient vector.
pub fn ols(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = design[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let pivot = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot[col];
                for (v, pv) in row.iter_mut().zip(&pivot).skip(col) {
                    *v -= f * pv;
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Lagged design `[1, x_c(t-l) for l in 1..=L for c in channels]` and the
/// response for channel `to`, rows `t = L..N`.
pub fn var_design(chans: &[Vec<f64>], to: usize, lags: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = chans[0].len();
    let mut design = Vec::new();
    let mut y = Vec::new();
    for t in lags..n {
        let mut row = vec![1.0];
        for c in chans {
            for l in 1..=lags {
                row.push(c[t - l]);
            }
        }
        design.push(row);
        y.push(chans[to][t]);
    }
    (design, y)
}

/// F1 of a predicted directed support against the truth, diagonal ignored.
pub fn support_f1(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for i in 0..truth.len() {
        for j in 0..truth.len() {
            if i == j {
                continue;
            }
            match (pred[i][j], truth[i][j]) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fneg)
    }
}
