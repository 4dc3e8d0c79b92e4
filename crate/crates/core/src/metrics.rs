//! Predictive Consistency against shuffled surrogates and Causal Impact
//! ranking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossmap::{CrossMapConfig, CrossMapper};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};
use crate::series::TimeSeries;
use crate::stats;

/// `(rho_pre - rho_shuffled) / (1 - rho_shuffled)`. Unbounded below.
pub fn pc_norm(rho_pre: f64, rho_shuffled: f64) -> Result<f64> {
    if !(rho_shuffled < 1.0 - 1e-9) {
        return Err(Error::DegenerateBaseline(rho_shuffled));
    }
    Ok(1.0 - (1.0 - rho_pre) / (1.0 - rho_shuffled))
}

/// `CI_i = rho_pre_i * |delta_i| / max_j |delta_j|` over `(rho_pre, rho_post)`
/// pairs. When every delta is zero all CI values are 0.
pub fn causal_impact(results: &[(f64, f64)]) -> Vec<f64> {
    let max_delta = results
        .iter()
        .map(|(pre, post)| (post - pre).abs())
        .fold(0.0, f64::max);
    if max_delta == 0.0 {
        return vec![0.0; results.len()];
    }
    results
        .iter()
        .map(|(pre, post)| pre * ((post - pre).abs() / max_delta))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMethod {
    /// Rotate the target by a uniform offset in `[N/4, 3N/4]`.
    #[default]
    CircularShift,
    /// Random permutation of the target.
    FullPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub method: SurrogateMethod,
    pub n_surrogates: usize,
    pub seed: u64,
    /// Test hook: use this rotation for every circular-shift surrogate.
    #[serde(skip)]
    pub forced_shift: Option<usize>,
}

impl SurrogateConfig {
    pub fn new(method: SurrogateMethod, n_surrogates: usize, seed: u64) -> Self {
        Self {
            method,
            n_surrogates,
            seed,
            forced_shift: None,
        }
    }
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self::new(SurrogateMethod::CircularShift, 100, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

/// Index map of surrogate `i`: surrogate sample `t` takes original sample
/// `map[t]`.
pub fn surrogate_index_map(n: usize, sc: &SurrogateConfig, i: usize) -> Vec<usize> {
    let mut rng = CounterRng::new(derive_seed(sc.seed, &format!("surrogate:{i}")));
    match sc.method {
        SurrogateMethod::CircularShift => {
            let shift = sc.forced_shift.unwrap_or_else(|| {
                let lo = n / 4;
                let hi = 3 * n / 4;
                lo + rng.below((hi - lo + 1) as u64) as usize
            }) % n.max(1);
            (0..n).map(|t| (t + n - shift) % n).collect()
        }
        SurrogateMethod::FullPermutation => {
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            idx
        }
    }
}

/// Cross-map skill distribution with the target's alignment to the source
/// destroyed. Densities, if given, travel with their target samples.
pub fn shuffled_rho(
    source: &TimeSeries,
    target: &TimeSeries,
    cfg: &CrossMapConfig,
    densities: Option<&[Option<f64>]>,
    sc: &SurrogateConfig,
) -> Result<SurrogateSummary> {
    if sc.n_surrogates == 0 {
        return Err(Error::InvalidParameter("n_surrogates must be >= 1".into()));
    }
    if source.len() != target.len() {
        return Err(Error::ChannelMismatch(format!(
            "source has {} samples, target {}",
            source.len(),
            target.len()
        )));
    }
    let n = target.len();
    let y = target.values();
    // standard mode: the neighbor graph does not depend on the target
    let shared = match densities {
        None => Some(CrossMapper::new(source, cfg, None, None)?),
        Some(_) => None,
    };
    let values = (0..sc.n_surrogates)
        .into_par_iter()
        .map(|i| {
            let map = surrogate_index_map(n, sc, i);
            let ys: Vec<f64> = map.iter().map(|&j| y[j]).collect();
            let corr = match (&shared, densities) {
                (Some(mapper), _) => mapper.predict(&ys, None)?.1,
                (None, Some(d)) => {
                    let ds: Vec<Option<f64>> = map.iter().map(|&j| d[j]).collect();
                    let ok = |t: usize| ds[t].is_some();
                    let mapper = CrossMapper::new(source, cfg, None, Some(&ok))?;
                    mapper.predict(&ys, Some(&ds))?.1
                }
                (None, None) => unreachable!(),
            };
            Ok(corr.rho)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = stats::mean_std(&values);
    Ok(SurrogateSummary { mean, std, values })
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `source->target` (manifold of source predicts target).
    pub pair: String,
    pub band: String,
    pub method: String,
    pub pc_norm: f64,
    pub ci: f64,
    pub rho_pre: f64,
    pub rho_post: f64,
    pub rho_shuffled_mean: f64,
    pub rho_shuffled_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

pub const METRICS_CSV_HEADER: [&str; 9] = [
    "pair",
    "band",
    "method",
    "pc_norm",
    "ci",
    "rho_pre",
    "rho_post",
    "rho_shuffled_mean",
    "rho_shuffled_std",
];

impl MetricsReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(METRICS_CSV_HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.pair.clone(),
                r.band.clone(),
                r.method.clone(),
                r.pc_norm.to_string(),
                r.ci.to_string(),
                r.rho_pre.to_string(),
                r.rho_post.to_string(),
                r.rho_shuffled_mean.to_string(),
                r.rho_shuffled_std.to_string(),
            ])?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != METRICS_CSV_HEADER {
            return Err(Error::MalformedReport(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| {
                    Error::MalformedReport(format!("column {} value '{}'", METRICS_CSV_HEADER[i], &rec[i]))
                })
            };
            rows.push(MetricRow {
                pair: rec[0].to_string(),
                band: rec[1].to_string(),
                method: rec[2].to_string(),
                pc_norm: num(3)?,
                ci: num(4)?,
                rho_pre: num(5)?,
                rho_post: num(6)?,
                rho_shuffled_mean: num(7)?,
                rho_shuffled_std: num(8)?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pc_examples() {
        assert_eq!(pc_norm(0.8, 0.2).unwrap(), 0.75);
        assert_eq!(pc_norm(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(pc_norm(1.0, -0.4).unwrap(), 1.0);
        assert!(pc_norm(-0.5, 0.5).unwrap() < 0.0);
        assert!(matches!(pc_norm(0.5, 1.0), Err(Error::DegenerateBaseline(_))));
    }

    #[test]
    fn ci_examples() {
        assert_eq!(causal_impact(&[(0.7, 0.4)]), vec![0.7]);
        let ci = causal_impact(&[(0.8, 0.9), (0.5, 0.3)]);
        assert!((ci[0] - 0.40).abs() < 1e-12);
        assert!((ci[1] - 0.50).abs() < 1e-12);
        assert_eq!(causal_impact(&[(0.8, 0.8), (0.2, 0.2)]), vec![0.0, 0.0]);
        // negative baseline skill passes through
        assert_eq!(causal_impact(&[(-0.3, 0.1)]), vec![-0.3]);
    }

    #[test]
    fn circular_shift_offsets_in_range() {
        let sc = SurrogateConfig::new(SurrogateMethod::CircularShift, 50, 9);
        for i in 0..50 {
            let map = surrogate_index_map(100, &sc, i);
            let shift = (100 - map[0]) % 100;
            assert!((25..=75).contains(&shift), "shift {shift}");
            assert!(map.iter().enumerate().all(|(t, &j)| j == (t + 100 - shift) % 100));
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let sc = SurrogateConfig::new(SurrogateMethod::FullPermutation, 1, 2);
        let mut map = surrogate_index_map(64, &sc, 0);
        map.sort_unstable();
        assert_eq!(map, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn csv_round_trip() {
        let report = MetricsReport {
            rows: vec![MetricRow {
                pair: "x->y".into(),
                band: "beta".into(),
                method: "dbn_informed".into(),
                pc_norm: 0.1,
                ci: 0.2,
                rho_pre: 0.3,
                rho_post: -0.4,
                rho_shuffled_mean: 0.05,
                rho_shuffled_std: 0.01,
            }],
        };
        let text = report.to_csv().unwrap();
        assert_eq!(MetricsReport::from_csv(&text).unwrap(), report);
        assert!(MetricsReport::from_csv("a,b\n1,2\n").is_err());
    }
}
