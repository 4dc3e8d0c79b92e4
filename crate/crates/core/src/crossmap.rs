//! Cross mapping: predict a target series from the shadow manifold of a
//! source series with kernel-weighted E+1 nearest neighbors, optionally
//! reweighted by DBN conditional densities of the target.
//!
//! For each manifold row `t` with neighbors `i`:
//!
//! ```text
//! u_i = exp(-d_i^2 / (2 sigma^2))
//! w_i = u_i p_i / sum_j u_j p_j
//! y_hat[t] = sum_i w_i y[time(i)]
//! ```
//!
//! and the skill is the Pearson correlation of `y` and `y_hat` over all rows.
//! `p_i = 1` in standard mode. Densities are rescaled by their neighborhood
//! maximum before use; the rescaling cancels in `w` and keeps a constant `p`
//! bitwise identical to standard mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, EmbeddingParams, ShadowManifold};
use crate::error::{Error, Result};
use crate::neighbors::{knn_with, NeighborSet, SearchOptions};
use crate::rng::{derive_seed, CounterRng};
use crate::series::TimeSeries;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    #[default]
    PerQueryMean,
    PerQueryNearest,
    GlobalFixed,
}

/// How the kernel bandwidth `sigma` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelConfig {
    pub bandwidth_mode: BandwidthMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fixed_sigma: Option<f64>,
}

impl KernelConfig {
    pub fn per_query_mean() -> Self {
        Self::default()
    }

    pub fn per_query_nearest() -> Self {
        Self {
            bandwidth_mode: BandwidthMode::PerQueryNearest,
            fixed_sigma: None,
        }
    }

    pub fn global_fixed(sigma: f64) -> Result<Self> {
        let cfg = Self {
            bandwidth_mode: BandwidthMode::GlobalFixed,
            fixed_sigma: Some(sigma),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.bandwidth_mode, self.fixed_sigma) {
            (BandwidthMode::GlobalFixed, Some(s)) if s > 0.0 && s.is_finite() => Ok(()),
            (BandwidthMode::GlobalFixed, _) => Err(Error::InvalidParameter(
                "global_fixed bandwidth needs a positive fixed_sigma".into(),
            )),
            (_, None) => Ok(()),
            (_, Some(_)) => Err(Error::InvalidParameter(
                "fixed_sigma is only valid with global_fixed bandwidth".into(),
            )),
        }
    }
}

/// Gaussian kernel weights for a neighbor set.
///
/// A neighborhood of exact duplicates (all distances 0) gets uniform weights.
pub fn kernel_weights(ns: &NeighborSet, cfg: &KernelConfig) -> Result<Vec<f64>> {
    let d = &ns.distances;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(vec![1.0; d.len()]);
    }
    let sigma = match cfg.bandwidth_mode {
        BandwidthMode::PerQueryMean => d.iter().sum::<f64>() / d.len() as f64,
        BandwidthMode::PerQueryNearest => d[0],
        BandwidthMode::GlobalFixed => cfg.fixed_sigma.ok_or_else(|| {
            Error::InvalidParameter("global_fixed bandwidth needs fixed_sigma".into())
        })?,
    };
    if !(sigma > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let two_s2 = 2.0 * sigma * sigma;
    Ok(d.iter().map(|&x| (-(x * x) / two_s2).exp()).collect())
}

/// Normalized hybrid weights `u_i p_i / sum_j u_j p_j`; `p = None` means all 1.
pub fn hybrid_weights(u: &[f64], p: Option<&[f64]>) -> Result<Vec<f64>> {
    let products: Vec<f64> = match p {
        None => u.to_vec(),
        Some(p) => {
            if p.len() != u.len() {
                return Err(Error::LengthMismatch {
                    left: u.len(),
                    right: p.len(),
                });
            }
            let pmax = p.iter().copied().fold(0.0, f64::max);
            if !(pmax > 0.0 && pmax.is_finite()) {
                return Err(Error::InvalidParameter(
                    "neighbor densities must be positive and finite".into(),
                ));
            }
            u.iter().zip(p).map(|(a, b)| a * (b / pmax)).collect()
        }
    };
    let total: f64 = products.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateNeighborhood);
    }
    Ok(products.into_iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcmMode {
    Standard,
    DbnInformed,
}

impl CcmMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CcmMode::Standard => "standard",
            CcmMode::DbnInformed => "dbn_informed",
        }
    }
}

/// Labeling of a cross-map result as a causal claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConvention {
    /// `rho(X -> Y)` is reported as "X -> Y": M_X predicts Y.
    #[default]
    Paper,
    /// Classical reading: M_X predicting Y is evidence that Y drives X.
    Sugihara,
}

impl DirectionConvention {
    /// `(cause, effect)` labels for a run that used `source`'s manifold to
    /// predict `target`.
    pub fn label<'a>(&self, source: &'a str, target: &'a str) -> (&'a str, &'a str) {
        match self {
            DirectionConvention::Paper => (source, target),
            DirectionConvention::Sugihara => (target, source),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossMapConfig {
    pub embedding: EmbeddingParams,
    pub kernel: KernelConfig,
    /// Theiler window; `None` uses `(E-1)*tau`.
    pub exclusion_radius: Option<usize>,
    pub allow_self_neighbor: bool,
}

impl CrossMapConfig {
    pub fn new(embedding: EmbeddingParams) -> Self {
        Self {
            embedding,
            kernel: KernelConfig::default(),
            exclusion_radius: None,
            allow_self_neighbor: false,
        }
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            exclusion_radius: self
                .exclusion_radius
                .unwrap_or_else(|| self.embedding.offset()),
            allow_self: self.allow_self_neighbor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmResult {
    pub rho: f64,
    /// One prediction per manifold row; row `k` is time index `k + offset`.
    pub predictions: Vec<f64>,
    pub offset: usize,
    /// `(source, target)`: the source manifold predicts the target.
    pub direction: (String, String),
    pub library_size: usize,
    pub mode: CcmMode,
    /// Set when either `y` or `y_hat` is constant (`rho` is then 0).
    pub degenerate: bool,
}

/// Per-row neighbor sets with their hybrid weights.
#[derive(Debug, Clone)]
pub struct RowWeights {
    pub neighbors: NeighborSet,
    pub weights: Vec<f64>,
}

/// Source manifold plus the admissible library, reusable across targets.
#[derive(Debug, Clone)]
pub struct CrossMapper {
    manifold: ShadowManifold,
    library: Vec<usize>,
    cfg: CrossMapConfig,
    neighbors: Vec<NeighborSet>,
    kernels: Vec<Vec<f64>>,
}

impl CrossMapper {
    /// Embed `source` and find every row's neighbors among `library` rows
    /// (all rows if `None`) that pass `candidate`. `candidate` is indexed by
    /// time index.
    pub fn new(
        source: &TimeSeries,
        cfg: &CrossMapConfig,
        library: Option<&[usize]>,
        candidate: Option<&dyn Fn(usize) -> bool>,
    ) -> Result<Self> {
        cfg.kernel.validate()?;
        let manifold = embed(source, cfg.embedding)?;
        let mut lib: Vec<usize> = match library {
            Some(rows) => {
                if let Some(&bad) = rows.iter().find(|&&r| r >= manifold.len()) {
                    return Err(Error::IndexOutOfRange {
                        index: bad,
                        detail: format!("library row beyond {} manifold rows", manifold.len()),
                    });
                }
                let mut v = rows.to_vec();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => (0..manifold.len()).collect(),
        };
        if let Some(ok) = candidate {
            lib.retain(|&k| ok(manifold.time_index(k)));
        }
        let opts = cfg.search_options();
        let (neighbors, kernels): (Vec<_>, Vec<_>) = (0..manifold.len())
            .into_par_iter()
            .map(|k| {
                let ns = knn_with(&manifold, Some(&lib), k, opts)?;
                let u = kernel_weights(&ns, &cfg.kernel)?;
                Ok((ns, u))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self {
            manifold,
            library: lib,
            cfg: *cfg,
            neighbors,
            kernels,
        })
    }

    pub fn manifold(&self) -> &ShadowManifold {
        &self.manifold
    }

    pub fn library_size(&self) -> usize {
        self.library.len()
    }

    pub fn config(&self) -> &CrossMapConfig {
        &self.cfg
    }

    pub fn neighbor_sets(&self) -> &[NeighborSet] {
        &self.neighbors
    }

    /// Hybrid weights for every row given per-time densities of the target.
    pub fn row_weights(&self, densities: Option<&[Option<f64>]>) -> Result<Vec<RowWeights>> {
        self.neighbors
            .iter()
            .zip(&self.kernels)
            .map(|(ns, u)| {
                let p = self.neighbor_densities(ns, densities)?;
                Ok(RowWeights {
                    neighbors: ns.clone(),
                    weights: hybrid_weights(u, p.as_deref())?,
                })
            })
            .collect()
    }

    fn neighbor_densities(
        &self,
        ns: &NeighborSet,
        densities: Option<&[Option<f64>]>,
    ) -> Result<Option<Vec<f64>>> {
        let Some(dens) = densities else {
            return Ok(None);
        };
        ns.indices
            .iter()
            .map(|&i| {
                let t = self.manifold.time_index(i);
                dens.get(t).copied().flatten().ok_or_else(|| {
                    Error::InvalidParameter(format!("no target density at time index {t}"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Predict `target` from the source manifold and score it.
    pub fn predict(
        &self,
        target: &[f64],
        densities: Option<&[Option<f64>]>,
    ) -> Result<(Vec<f64>, stats::Correlation)> {
        let offset = self.manifold.source_index_offset();
        if target.len() != self.manifold.len() + offset {
            return Err(Error::ChannelMismatch(format!(
                "target has {} samples, source has {}",
                target.len(),
                self.manifold.len() + offset
            )));
        }
        if let Some(d) = densities {
            if d.len() != target.len() {
                return Err(Error::ChannelMismatch(format!(
                    "{} densities for {} target samples",
                    d.len(),
                    target.len()
                )));
            }
        }
        let predictions = self
            .neighbors
            .par_iter()
            .zip(&self.kernels)
            .map(|(ns, u)| {
                let p = self.neighbor_densities(ns, densities)?;
                let w = hybrid_weights(u, p.as_deref())?;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut acc = 0.0;
                for (&i, wi) in ns.indices.iter().zip(&w) {
                    let y = target[self.manifold.time_index(i)];
                    lo = lo.min(y);
                    hi = hi.max(y);
                    acc += wi * y;
                }
                // rounding can push a convex combination a hair outside the hull
                Ok(acc.clamp(lo, hi))
            })
            .collect::<Result<Vec<f64>>>()?;
        let corr = stats::pearson(&target[offset..], &predictions)?;
        Ok((predictions, corr))
    }
}

/// Cross-map `target` from the shadow manifold of `source`.
///
/// With `densities` (DBN-informed mode), rows whose target density is `None`
/// are dropped from the neighbor library.
pub fn cross_map(
    source: &TimeSeries,
    target: &TimeSeries,
    cfg: &CrossMapConfig,
    densities: Option<&[Option<f64>]>,
    library: Option<&[usize]>,
) -> Result<CcmResult> {
    if source.len() != target.len() {
        return Err(Error::ChannelMismatch(format!(
            "source '{}' has {} samples, target '{}' has {}",
            source.label(),
            source.len(),
            target.label(),
            target.len()
        )));
    }
    let has_density = |t: usize| densities.is_none_or(|d| d.get(t).is_some_and(Option::is_some));
    let mapper = CrossMapper::new(source, cfg, library, Some(&has_density))?;
    let (predictions, corr) = mapper.predict(target.values(), densities)?;
    Ok(CcmResult {
        rho: corr.rho,
        predictions,
        offset: mapper.manifold.source_index_offset(),
        direction: (source.label().to_string(), target.label().to_string()),
        library_size: mapper.library_size(),
        mode: if densities.is_some() {
            CcmMode::DbnInformed
        } else {
            CcmMode::Standard
        },
        degenerate: corr.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LibrarySampling {
    /// Rows drawn uniformly without replacement.
    #[default]
    Uniform,
    /// A contiguous block of admissible rows at a random start.
    Contiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub library_sizes: Vec<usize>,
    pub rhos: Vec<f64>,
    pub rho_std: Vec<f64>,
    pub n_draws: usize,
}

impl ConvergenceCurve {
    /// `size,rho_mean,rho_std` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,rho_mean,rho_std\n");
        for ((s, m), d) in self.library_sizes.iter().zip(&self.rhos).zip(&self.rho_std) {
            out.push_str(&format!("{s},{m},{d}\n"));
        }
        out
    }
}

/// Mean and standard deviation of cross-map skill over random libraries of
/// each size. Deterministic given `seed`.
#[allow(clippy::too_many_arguments)]
pub fn convergence(
    source: &TimeSeries,
    target: &TimeSeries,
    cfg: &CrossMapConfig,
    densities: Option<&[Option<f64>]>,
    sizes: &[usize],
    n_draws: usize,
    seed: u64,
    sampling: LibrarySampling,
) -> Result<ConvergenceCurve> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("n_draws must be >= 1".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "library sizes must be nonempty and strictly increasing".into(),
        ));
    }
    let n_rows = cfg
        .embedding
        .n_points(source.len())
        .ok_or(Error::SeriesTooShort {
            required: cfg.embedding.offset(),
            actual: source.len(),
        })?;
    let offset = cfg.embedding.offset();
    let admissible: Vec<usize> = (0..n_rows)
        .filter(|&k| densities.is_none_or(|d| d.get(k + offset).is_some_and(Option::is_some)))
        .collect();
    let largest = *sizes.last().expect("nonempty");
    if largest > admissible.len() {
        return Err(Error::NotEnoughPoints {
            required: largest,
            available: admissible.len(),
        });
    }
    let mut rhos = Vec::with_capacity(sizes.len());
    let mut rho_std = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let draws = (0..n_draws)
            .into_par_iter()
            .map(|draw| {
                let mut rng = CounterRng::new(derive_seed(seed, &format!("library:{size}:{draw}")));
                let library: Vec<usize> = match sampling {
                    LibrarySampling::Uniform => rng
                        .sample_without_replacement(admissible.len(), size)
                        .into_iter()
                        .map(|i| admissible[i])
                        .collect(),
                    LibrarySampling::Contiguous => {
                        let start = rng.below((admissible.len() - size + 1) as u64) as usize;
                        admissible[start..start + size].to_vec()
                    }
                };
                cross_map(source, target, cfg, densities, Some(&library)).map(|r| r.rho)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (m, s) = stats::mean_std(&draws);
        rhos.push(m);
        rho_std.push(s);
    }
    Ok(ConvergenceCurve {
        library_sizes: sizes.to_vec(),
        rhos,
        rho_std,
        n_draws,
    })
}

/// Fraction of rows whose neighbor index sets differ between two equally
/// long manifolds (e.g. an unperturbed and a perturbed trajectory over the
/// same time span).
pub fn neighbor_turnover(
    before: &ShadowManifold,
    after: &ShadowManifold,
    opts: SearchOptions,
) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            left: before.len(),
            right: after.len(),
        });
    }
    let changed: usize = (0..before.len())
        .into_par_iter()
        .map(|k| {
            let mut a = knn_with(before, None, k, opts)?.indices;
            let mut b = knn_with(after, None, k, opts)?.indices;
            a.sort_unstable();
            b.sort_unstable();
            Ok(usize::from(a != b))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(changed as f64 / before.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns(distances: Vec<f64>) -> NeighborSet {
        NeighborSet {
            query_index: 0,
            indices: (1..=distances.len()).collect(),
            distances,
        }
    }

    #[test]
    fn kernel_closed_forms() {
        let cfg = KernelConfig::global_fixed(1.5).unwrap();
        let u = kernel_weights(&ns(vec![0.0, 1.5]), &cfg).unwrap();
        assert_eq!(u[0], 1.0);
        assert!((u[1] - (-0.5f64).exp()).abs() < 1e-15);
        let u = kernel_weights(&ns(vec![1.0, 2.0, 3.0]), &KernelConfig::default()).unwrap();
        let expected = [(-1.0f64 / 8.0).exp(), (-0.5f64).exp(), (-9.0f64 / 8.0).exp()];
        for (a, b) in u.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_degenerate_cases() {
        let u = kernel_weights(&ns(vec![0.0, 0.0, 0.0]), &KernelConfig::default()).unwrap();
        assert_eq!(u, vec![1.0; 3]);
        assert!(matches!(
            kernel_weights(&ns(vec![0.0, 1.0]), &KernelConfig::per_query_nearest()),
            Err(Error::DegenerateNeighborhood)
        ));
    }

    #[test]
    fn kernel_config_validation() {
        assert!(KernelConfig::global_fixed(0.0).is_err());
        let bad = KernelConfig {
            bandwidth_mode: BandwidthMode::PerQueryMean,
            fixed_sigma: Some(1.0),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hybrid_weights_ignore_constant_density() {
        let u = [0.9, 0.5, 0.1];
        let std = hybrid_weights(&u, None).unwrap();
        let dbn = hybrid_weights(&u, Some(&[0.3, 0.3, 0.3])).unwrap();
        assert_eq!(std, dbn);
        assert!((std.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn direction_labels() {
        assert_eq!(DirectionConvention::Paper.label("x", "y"), ("x", "y"));
        assert_eq!(DirectionConvention::Sugihara.label("x", "y"), ("y", "x"));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = TimeSeries::new("a", (0..50).map(|i| (i as f64).sin()).collect(), 1.0).unwrap();
        let b = TimeSeries::new("b", (0..40).map(|i| (i as f64).cos()).collect(), 1.0).unwrap();
        let cfg = CrossMapConfig::new(EmbeddingParams::new(2, 1).unwrap());
        assert!(matches!(
            cross_map(&a, &b, &cfg, None, None),
            Err(Error::ChannelMismatch(_))
        ));
    }
}
