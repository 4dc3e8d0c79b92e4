//! Linear Granger causality and the F-distribution tail it needs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{surrogate_index_map, SurrogateConfig, SurrogateSummary};
use crate::series::TimeSeries;
use crate::stats;

/// Below this full-model RSS the fit is treated as exact: `F = inf`, `p = 0`.
pub const EXACT_FIT_RSS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    /// `(source, target)`: does the source's past improve the target's
    /// prediction?
    pub direction: (String, String),
    pub lag_order: usize,
    /// `+inf` on an exact fit (serialized as `null`).
    pub f_statistic: f64,
    pub p_value: f64,
    pub r2_restricted: f64,
    pub r2_full: f64,
    pub rss_restricted: f64,
    pub rss_full: f64,
}

/// Lanczos approximation (g = 7, 9 terms).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Survival function `P(F > f)` of the F distribution with `(d1, d2)`
/// degrees of freedom.
pub fn f_distribution_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)
}

/// Least-squares residual sum of squares. Rank deficiency is an error.
fn ols_rss(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..r.ncols()).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..r.ncols()).any(|i| r[(i, i)].abs() < 1e-10 * diag_max) {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * y;
    let n = x.ncols();
    let beta = r
        .solve_upper_triangular(&qty.rows(0, n).into_owned())
        .ok_or(Error::SingularDesign)?;
    let resid = y - x * beta;
    Ok(resid.norm_squared())
}

fn lagged_design(target: &[f64], source: Option<&[f64]>, p: usize) -> DMatrix<f64> {
    let rows = target.len() - p;
    let cols = 1 + p * if source.is_some() { 2 } else { 1 };
    DMatrix::from_fn(rows, cols, |i, j| {
        let t = i + p;
        match j {
            0 => 1.0,
            j if j <= p => target[t - j],
            j => source.expect("full design")[t - (j - p)],
        }
    })
}

fn rss_pair(source: &[f64], target: &[f64], p: usize) -> Result<(f64, f64, f64)> {
    if p == 0 {
        return Err(Error::InvalidParameter("lag order must be >= 1".into()));
    }
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    // full model has 2p + 1 coefficients and needs at least one residual dof
    let required = 3 * p + 2;
    if target.len() < required {
        return Err(Error::SeriesTooShort {
            required,
            actual: target.len(),
        });
    }
    let y = DVector::from_column_slice(&target[p..]);
    let rss_r = ols_rss(&lagged_design(target, None, p), &y)?;
    let rss_f = ols_rss(&lagged_design(target, Some(source), p), &y)?;
    let ybar = stats::mean(&target[p..]);
    let tss: f64 = target[p..].iter().map(|v| (v - ybar).powi(2)).sum();
    Ok((rss_r, rss_f.min(rss_r), tss))
}

/// Granger test of `source -> target` with `lag_order` lags of each.
pub fn granger(source: &TimeSeries, target: &TimeSeries, lag_order: usize) -> Result<GrangerResult> {
    let p = lag_order;
    let (rss_r, rss_f, tss) = rss_pair(source.values(), target.values(), p)?;
    let n_rows = (target.len() - p) as f64;
    let df2 = n_rows - (2 * p + 1) as f64;
    let (f_statistic, p_value) = if rss_f < EXACT_FIT_RSS {
        (f64::INFINITY, 0.0)
    } else {
        let f = ((rss_r - rss_f) / p as f64) / (rss_f / df2);
        (f, f_distribution_sf(f, p as f64, df2))
    };
    let r2 = |rss: f64| if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    Ok(GrangerResult {
        direction: (source.label().to_string(), target.label().to_string()),
        lag_order: p,
        f_statistic,
        p_value,
        r2_restricted: r2(rss_r),
        r2_full: r2(rss_f),
        rss_restricted: rss_r,
        rss_full: rss_f,
    })
}

/// Partial correlation of the target with the source's past given its own
/// past: `sqrt(max(0, (RSS_r - RSS_f) / RSS_r))`. A skill score on the same
/// `[0, 1]` footing as cross-map `rho`.
pub fn granger_skill(source: &[f64], target: &[f64], lag_order: usize) -> Result<f64> {
    let (rss_r, rss_f, _) = rss_pair(source, target, lag_order)?;
    if rss_r <= 0.0 {
        return Ok(0.0);
    }
    Ok(((rss_r - rss_f) / rss_r).max(0.0).sqrt())
}

/// [`granger_skill`] over target surrogates drawn exactly as for cross-map
/// skill.
pub fn granger_shuffled(
    source: &[f64],
    target: &[f64],
    lag_order: usize,
    sc: &SurrogateConfig,
) -> Result<SurrogateSummary> {
    if sc.n_surrogates == 0 {
        return Err(Error::InvalidParameter("n_surrogates must be >= 1".into()));
    }
    let values = (0..sc.n_surrogates)
        .into_par_iter()
        .map(|i| {
            let map = surrogate_index_map(target.len(), sc, i);
            let ys: Vec<f64> = map.iter().map(|&j| target[j]).collect();
            granger_skill(source, &ys, lag_order)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = stats::mean_std(&values);
    Ok(SurrogateSummary { mean, std, values })
}
