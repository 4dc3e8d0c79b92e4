//! Delay embedding and embedding-parameter selection.
//!
//! Row `k` of a shadow manifold is `[x_t, x_{t-tau}, ..., x_{t-(E-1)tau}]` with
//! `t = k + (E-1)tau`, so the first row uses the earliest time index at which
//! every lag exists.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingParams {
    #[serde(rename = "E")]
    pub dimension: usize,
    pub tau: usize,
}

impl EmbeddingParams {
    pub fn new(dimension: usize, tau: usize) -> Result<Self> {
        if dimension == 0 || tau == 0 {
            return Err(Error::InvalidParameter(format!(
                "embedding needs E >= 1 and tau >= 1, got E={dimension}, tau={tau}"
            )));
        }
        Ok(Self { dimension, tau })
    }

    /// Samples consumed before the first embeddable index: `(E-1)*tau`.
    pub fn offset(&self) -> usize {
        (self.dimension - 1) * self.tau
    }

    /// Number of manifold rows for a series of length `n`, if any.
    pub fn n_points(&self, n: usize) -> Option<usize> {
        n.checked_sub(self.offset()).filter(|&p| p > 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowManifold {
    points: Vec<f64>,
    n_points: usize,
    params: EmbeddingParams,
}

impl ShadowManifold {
    pub fn params(&self) -> EmbeddingParams {
        self.params
    }

    pub fn dimension(&self) -> usize {
        self.params.dimension
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// Original time index of row 0.
    pub fn source_index_offset(&self) -> usize {
        self.params.offset()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let e = self.params.dimension;
        &self.points[k * e..(k + 1) * e]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.params.dimension)
    }

    /// Original time index of row `k`.
    pub fn time_index(&self, k: usize) -> usize {
        k + self.params.offset()
    }

    /// Manifold row holding time index `t`, if `t` is embeddable.
    pub fn row_of_time(&self, t: usize) -> Option<usize> {
        t.checked_sub(self.params.offset())
            .filter(|&k| k < self.n_points)
    }

    /// Euclidean distance between two rows.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclidean(self.row(a), self.row(b))
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn embed(series: &TimeSeries, params: EmbeddingParams) -> Result<ShadowManifold> {
    embed_values(series.values(), params)
}

pub fn embed_values(values: &[f64], params: EmbeddingParams) -> Result<ShadowManifold> {
    let n_points = params.n_points(values.len()).ok_or(Error::SeriesTooShort {
        required: params.offset(),
        actual: values.len(),
    })?;
    let (e, tau, offset) = (params.dimension, params.tau, params.offset());
    let mut points = Vec::with_capacity(n_points * e);
    for k in 0..n_points {
        let t = offset + k;
        points.extend((0..e).map(|j| values[t - j * tau]));
    }
    Ok(ShadowManifold {
        points,
        n_points,
        params,
    })
}

fn histogram_bin(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width <= 0.0 {
        return 0;
    }
    (((v - lo) / width) as usize).min(bins - 1)
}

/// Histogram mutual information (nats) between `x_t` and `x_{t+lag}`.
pub fn delayed_mutual_information(values: &[f64], lag: usize, bins: usize) -> f64 {
    let n = values.len() - lag;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let idx: Vec<usize> = values
        .iter()
        .map(|&v| histogram_bin(v, lo, width, bins))
        .collect();
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for t in 0..n {
        let (a, b) = (idx[t], idx[t + lag]);
        joint[a * bins + b] += 1;
        pa[a] += 1;
        pb[b] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c > 0 {
                let pab = c as f64 / nf;
                mi += pab * (pab * nf * nf / (pa[a] as f64 * pb[b] as f64)).ln();
            }
        }
    }
    mi
}

fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    let m = stats::mean(values);
    let denom: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = values[..values.len() - lag]
        .iter()
        .zip(&values[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    num / denom
}

/// Delay from the first minimum of time-delayed mutual information.
///
/// Histogram estimator with `ceil(sqrt(N/5))` equal-width bins. A lag counts
/// as the first minimum when it is a local minimum of the MI curve and lies
/// more than the estimator's independence bias `(B-1)^2 / (2n)` below the
/// lag-1 value; otherwise the first lag with autocorrelation below `1/e` is
/// returned (or `max_lag` if there is none).
pub fn select_tau(series: &TimeSeries, max_lag: usize) -> Result<usize> {
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be >= 1".into()));
    }
    let values = series.values();
    let n = values.len();
    if n < 4 * max_lag {
        return Err(Error::SeriesTooShort {
            required: 4 * max_lag - 1,
            actual: n,
        });
    }
    let bins = ((n as f64 / 5.0).sqrt().ceil() as usize).max(2);
    let mi: Vec<f64> = (1..=max_lag)
        .map(|lag| delayed_mutual_information(values, lag, bins))
        .collect();
    let at = |lag: usize| mi[lag - 1];
    for lag in 2..max_lag {
        let bias = ((bins - 1) * (bins - 1)) as f64 / (2.0 * (n - lag) as f64);
        if at(lag) < at(lag - 1) && at(lag) <= at(lag + 1) && at(1) - at(lag) > bias {
            return Ok(lag);
        }
    }
    let threshold = (-1.0f64).exp();
    Ok((1..=max_lag)
        .find(|&lag| autocorrelation(values, lag) < threshold)
        .unwrap_or(max_lag))
}

/// False-nearest-neighbor thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnnConfig {
    /// Growth of the nearest-neighbor gap, relative to the E-dimensional
    /// distance, above which a neighbor is false.
    pub distance_ratio: f64,
    /// (E+1)-dimensional distance, in series standard deviations, above which
    /// a neighbor is false.
    pub loneliness: f64,
    /// FNN fraction accepted as "unfolded".
    pub fraction: f64,
}

impl Default for FnnConfig {
    fn default() -> Self {
        Self {
            distance_ratio: 15.0,
            loneliness: 2.0,
            fraction: 0.05,
        }
    }
}

/// Fraction of false nearest neighbors when going from `dimension` to
/// `dimension + 1`. Each delay vector is extended by the next sample
/// `tau` steps later, so both point sets are windows of the same series.
pub fn fnn_fraction(values: &[f64], tau: usize, dimension: usize, cfg: &FnnConfig) -> f64 {
    let n_pts = values.len() - dimension * tau;
    let sd = stats::mean_std(values).1;
    let eps = 1e-9 * sd;
    let point = |s: usize, j: usize| values[s + j * tau];
    let false_count: usize = (0..n_pts)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..n_pts {
                if j == i {
                    continue;
                }
                let d2: f64 = (0..dimension)
                    .map(|k| (point(i, k) - point(j, k)).powi(2))
                    .sum();
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            let (d2, j) = best;
            let r = d2.sqrt();
            let gap = (point(i, dimension) - point(j, dimension)).abs();
            let grows = if r <= eps {
                gap > eps
            } else {
                gap / r > cfg.distance_ratio
            };
            let lonely = (d2 + gap * gap).sqrt() / sd > cfg.loneliness;
            usize::from(grows || lonely)
        })
        .sum();
    false_count as f64 / n_pts as f64
}

/// Smallest dimension whose FNN fraction falls below `cfg.fraction`, or
/// `max_e` if none does.
pub fn select_dimension(series: &TimeSeries, tau: usize, max_e: usize) -> Result<usize> {
    select_dimension_with(series, tau, max_e, &FnnConfig::default())
}

pub fn select_dimension_with(
    series: &TimeSeries,
    tau: usize,
    max_e: usize,
    cfg: &FnnConfig,
) -> Result<usize> {
    if tau == 0 || max_e == 0 {
        return Err(Error::InvalidParameter("tau and max_E must be >= 1".into()));
    }
    let values = series.values();
    let required = (max_e - 1) * tau + 1;
    if values.len() <= required {
        return Err(Error::SeriesTooShort {
            required,
            actual: values.len(),
        });
    }
    if stats::mean_std(values).1 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    for e in 1..max_e {
        if fnn_fraction(values, tau, e, cfg) < cfg.fraction {
            return Ok(e);
        }
    }
    Ok(max_e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> TimeSeries {
        TimeSeries::new("r", (0..n).map(|i| i as f64).collect(), 1.0).unwrap()
    }

    #[test]
    fn first_point_and_count() {
        let m = embed(&ramp(10), EmbeddingParams::new(3, 2).unwrap()).unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m.row(0), &[4.0, 2.0, 0.0]);
        assert_eq!(m.source_index_offset(), 4);
    }

    #[test]
    fn two_dimensional_example() {
        let m = embed(&ramp(10), EmbeddingParams::new(2, 3).unwrap()).unwrap();
        assert_eq!(m.row(0), &[3.0, 0.0]);
        assert_eq!(m.row(6), &[9.0, 6.0]);
        assert_eq!(m.len(), 7);
    }

    #[test]
    fn unit_dimension_is_identity() {
        let s = TimeSeries::new("s", vec![3.0, -1.0, 2.5], 1.0).unwrap();
        let m = embed(&s, EmbeddingParams::new(1, 7).unwrap()).unwrap();
        let rows: Vec<f64> = m.rows().map(|r| r[0]).collect();
        assert_eq!(rows, s.values());
    }

    #[test]
    fn too_short() {
        let err = embed(&ramp(4), EmbeddingParams::new(3, 2).unwrap());
        assert!(matches!(err, Err(Error::SeriesTooShort { .. })));
        assert!(EmbeddingParams::new(0, 1).is_err());
    }

    #[test]
    fn row_time_mapping_round_trips() {
        let m = embed(&ramp(20), EmbeddingParams::new(3, 3).unwrap()).unwrap();
        for k in 0..m.len() {
            assert_eq!(m.row_of_time(m.time_index(k)), Some(k));
        }
        assert_eq!(m.row_of_time(5), None);
    }

    #[test]
    fn tau_single_candidate() {
        let s = TimeSeries::new("s", (0..40).map(|i| (i as f64).sin()).collect(), 1.0).unwrap();
        assert_eq!(select_tau(&s, 1).unwrap(), 1);
        assert!(select_tau(&s, 11).is_err());
    }

    #[test]
    fn dimension_single_candidate() {
        let s = TimeSeries::new("s", (0..40).map(|i| (i as f64).sin()).collect(), 1.0).unwrap();
        assert_eq!(select_dimension(&s, 1, 1).unwrap(), 1);
    }
}
