//! Sparse linear-Gaussian dynamic Bayesian network.
//!
//! Each channel is regressed on every channel's past `max_lag` samples with a
//! weighted l1 penalty, solved by proximal gradient. The fitted model supplies
//! the conditional densities `P(y_t | Pa(y_t))` used to weight cross-map
//! neighbors, and optional CCM-derived priors lower the penalty on edges with
//! strong manifold coupling.

mod persist;
mod solver;

pub use persist::{ModelDocument, WeightEntry};
pub use solver::{soft_threshold, GramProblem, SolverOptions, SolverOutput};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Recording;

/// Lower bound on conditional densities.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Lower bound on fitted noise variances.
pub const NOISE_VAR_FLOOR: f64 = 1e-12;

/// Normalized CCM coupling strengths, `strengths[to][from]` in `[0, 1]`,
/// zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePriorMatrix {
    strengths: Vec<Vec<f64>>,
}

impl EdgePriorMatrix {
    pub fn new(strengths: Vec<Vec<f64>>) -> Result<Self> {
        check_square(&strengths)?;
        for (i, row) in strengths.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParameter(format!(
                        "prior strength [{i}][{j}] = {v} outside [0, 1]"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "prior diagonal [{i}][{i}] must be 0"
                    )));
                }
            }
        }
        Ok(Self { strengths })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            strengths: vec![vec![0.0; n]; n],
        }
    }

    pub fn strength(&self, to: usize, from: usize) -> f64 {
        self.strengths[to][from]
    }

    pub fn n_channels(&self) -> usize {
        self.strengths.len()
    }

    pub fn as_rows(&self) -> &[Vec<f64>] {
        &self.strengths
    }
}

fn check_square(m: &[Vec<f64>]) -> Result<()> {
    let rows = m.len();
    match m.iter().position(|r| r.len() != rows) {
        Some(row) => Err(Error::NonSquare {
            rows,
            row,
            cols: m[row].len(),
        }),
        None => Ok(()),
    }
}

/// Turn raw cross-map skills into edge priors: negatives clamp to 0, the
/// diagonal is zeroed, then everything is divided by the largest entry. An
/// all-zero result stays all zero.
pub fn normalize_ccm_priors(raw_rho: &[Vec<f64>]) -> Result<EdgePriorMatrix> {
    check_square(raw_rho)?;
    let mut m: Vec<Vec<f64>> = raw_rho
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if i == j || !(v > 0.0) {
                        0.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let max = m.iter().flatten().copied().fold(0.0, f64::max);
    if max > 0.0 {
        m.iter_mut().flatten().for_each(|v| *v = (*v / max).min(1.0));
    }
    EdgePriorMatrix::new(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub max_lag: usize,
    pub lambda: f64,
    pub priors: Option<EdgePriorMatrix>,
    pub solver: SolverOptions,
}

impl LearnConfig {
    pub fn new(max_lag: usize, lambda: f64) -> Self {
        Self {
            max_lag,
            lambda,
            priors: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_priors(mut self, priors: EdgePriorMatrix) -> Self {
        self.priors = Some(priors);
        self
    }

    /// Penalty on edge `to <- from`: `lambda * (1 - strength)`.
    pub fn edge_penalty(&self, to: usize, from: usize) -> f64 {
        match &self.priors {
            Some(p) => self.lambda * (1.0 - p.strength(to, from)),
            None => self.lambda,
        }
    }
}

/// Per-channel solver diagnostics.
#[derive(Debug, Clone)]
pub struct ChannelFit {
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lagged linear-Gaussian network. `weight(to, from, lag)` is the coefficient
/// of `from` at `t - lag` in the mean of `to` at `t`, for `lag` in
/// `1..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    labels: Vec<String>,
    max_lag: usize,
    lambda: f64,
    weights: Vec<f64>,
    intercepts: Vec<f64>,
    noise_vars: Vec<f64>,
}

impl DbnModel {
    pub fn from_parts(
        labels: Vec<String>,
        max_lag: usize,
        lambda: f64,
        weights: Vec<f64>,
        intercepts: Vec<f64>,
        noise_vars: Vec<f64>,
    ) -> Result<Self> {
        let c = labels.len();
        if c == 0 || max_lag == 0 {
            return Err(Error::InvalidParameter(
                "model needs at least one channel and max_lag >= 1".into(),
            ));
        }
        if weights.len() != c * c * max_lag || intercepts.len() != c || noise_vars.len() != c {
            return Err(Error::InvalidParameter(format!(
                "model arrays do not match {c} channels and max_lag {max_lag}"
            )));
        }
        if weights.iter().chain(&intercepts).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("model parameters".into()));
        }
        if noise_vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("noise variances must be positive".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} < 0")));
        }
        Ok(Self {
            labels,
            max_lag,
            lambda,
            weights,
            intercepts,
            noise_vars,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn intercept(&self, channel: usize) -> f64 {
        self.intercepts[channel]
    }

    pub fn noise_var(&self, channel: usize) -> f64 {
        self.noise_vars[channel]
    }

    fn flat(&self, to: usize, from: usize, lag: usize) -> usize {
        debug_assert!((1..=self.max_lag).contains(&lag));
        (to * self.n_channels() + from) * self.max_lag + (lag - 1)
    }

    pub fn weight(&self, to: usize, from: usize, lag: usize) -> f64 {
        self.weights[self.flat(to, from, lag)]
    }

    /// Coefficients of channel `to`, ordered by `(from, lag)`.
    pub fn channel_weights(&self, to: usize) -> &[f64] {
        let w = self.n_channels() * self.max_lag;
        &self.weights[to * w..(to + 1) * w]
    }

    /// Lagged parents `(from, lag)` with nonzero weight.
    pub fn parents(&self, to: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for from in 0..self.n_channels() {
            for lag in 1..=self.max_lag {
                if self.weight(to, from, lag) != 0.0 {
                    out.push((from, lag));
                }
            }
        }
        out
    }

    /// `adjacency[to][from]` is true when any lag of `from` is a parent of `to`.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let c = self.n_channels();
        (0..c)
            .map(|to| {
                (0..c)
                    .map(|from| (1..=self.max_lag).any(|l| self.weight(to, from, l) != 0.0))
                    .collect()
            })
            .collect()
    }

    /// Sum of absolute weights over lags for edge `to <- from`.
    pub fn edge_strength(&self, to: usize, from: usize) -> f64 {
        (1..=self.max_lag)
            .map(|l| self.weight(to, from, l).abs())
            .sum()
    }

    fn check_recording(&self, rec: &Recording) -> Result<()> {
        if rec.n_channels() != self.n_channels() {
            return Err(Error::ChannelMismatch(format!(
                "model has {} channels, recording has {}",
                self.n_channels(),
                rec.n_channels()
            )));
        }
        Ok(())
    }

    fn check_index(&self, rec: &Recording, channel: usize, time_index: usize) -> Result<()> {
        self.check_recording(rec)?;
        if channel >= self.n_channels() {
            return Err(Error::IndexOutOfRange {
                index: channel,
                detail: format!("model has {} channels", self.n_channels()),
            });
        }
        if time_index < self.max_lag || time_index >= rec.n_samples() {
            return Err(Error::IndexOutOfRange {
                index: time_index,
                detail: format!(
                    "time index must lie in {}..{} so every parent is observed",
                    self.max_lag,
                    rec.n_samples()
                ),
            });
        }
        Ok(())
    }

    /// Conditional mean of `channel` at `time_index` given its lagged parents.
    pub fn predict(&self, rec: &Recording, channel: usize, time_index: usize) -> Result<f64> {
        self.check_index(rec, channel, time_index)?;
        Ok(self.predict_unchecked(rec, channel, time_index))
    }

    fn predict_unchecked(&self, rec: &Recording, channel: usize, t: usize) -> f64 {
        let mut y = self.intercepts[channel];
        for (from, ch) in rec.channels().iter().enumerate() {
            let v = ch.values();
            for lag in 1..=self.max_lag {
                y += self.weight(channel, from, lag) * v[t - lag];
            }
        }
        y
    }

    fn density_unchecked(&self, rec: &Recording, channel: usize, t: usize) -> f64 {
        let var = self.noise_vars[channel];
        let r = rec.channels()[channel].values()[t] - self.predict_unchecked(rec, channel, t);
        let d = (-0.5 * r * r / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        d.max(DENSITY_FLOOR)
    }

    /// Gaussian density of the observed value given its parents, floored at
    /// [`DENSITY_FLOOR`].
    pub fn conditional_probability(
        &self,
        rec: &Recording,
        channel: usize,
        time_index: usize,
    ) -> Result<f64> {
        self.check_index(rec, channel, time_index)?;
        Ok(self.density_unchecked(rec, channel, time_index))
    }

    /// Conditional density at every time index of `channel`; `None` where some
    /// parent lag falls before the start of the recording.
    pub fn target_densities(&self, rec: &Recording, channel: usize) -> Result<Vec<Option<f64>>> {
        self.check_recording(rec)?;
        if channel >= self.n_channels() {
            return Err(Error::ChannelMismatch(format!(
                "channel {channel} not in model with {} channels",
                self.n_channels()
            )));
        }
        Ok((0..rec.n_samples())
            .map(|t| (t >= self.max_lag).then(|| self.density_unchecked(rec, channel, t)))
            .collect())
    }

    pub fn to_document(&self) -> ModelDocument {
        persist::to_document(self)
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        persist::from_document(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// Centered lagged design for one target channel.
struct Design {
    /// Column-major, `p` columns of length `rows`.
    columns: Vec<Vec<f64>>,
    column_means: Vec<f64>,
    target: Vec<f64>,
    target_mean: f64,
}

fn design(rec: &Recording, to: usize, max_lag: usize) -> Design {
    let n = rec.n_samples();
    let rows = n - max_lag;
    let mut columns = Vec::with_capacity(rec.n_channels() * max_lag);
    for ch in rec.channels() {
        let v = ch.values();
        for lag in 1..=max_lag {
            columns.push(v[max_lag - lag..n - lag].to_vec());
        }
    }
    let target = rec.channels()[to].values()[max_lag..].to_vec();
    let center = |col: &mut Vec<f64>| {
        let m = col.iter().sum::<f64>() / rows as f64;
        col.iter_mut().for_each(|x| *x -= m);
        m
    };
    let column_means = columns.iter_mut().map(center).collect();
    let mut target = target;
    let target_mean = center(&mut target);
    Design {
        columns,
        column_means,
        target,
        target_mean,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct GramSystem {
    gram: Vec<f64>,
    cross: Vec<f64>,
    half_yy: f64,
}

fn gram_system(d: &Design) -> GramSystem {
    let p = d.columns.len();
    let t = d.target.len() as f64;
    let mut gram = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let g = dot(&d.columns[i], &d.columns[j]) / t;
            gram[i * p + j] = g;
            gram[j * p + i] = g;
        }
    }
    let cross = d.columns.iter().map(|c| dot(c, &d.target) / t).collect();
    let half_yy = dot(&d.target, &d.target) / (2.0 * t);
    GramSystem {
        gram,
        cross,
        half_yy,
    }
}

fn validate_learn(rec: &Recording, cfg: &LearnConfig) -> Result<()> {
    if cfg.max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be >= 1".into()));
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {}",
            cfg.lambda
        )));
    }
    let c = rec.n_channels();
    let required = cfg.max_lag + c * cfg.max_lag;
    if rec.n_samples() <= required {
        return Err(Error::SeriesTooShort {
            required,
            actual: rec.n_samples(),
        });
    }
    if let Some(p) = &cfg.priors {
        if p.n_channels() != c {
            return Err(Error::ChannelMismatch(format!(
                "priors cover {} channels, recording has {c}",
                p.n_channels()
            )));
        }
    }
    Ok(())
}

/// Smallest uniform `lambda` at which every weight is zero (no priors).
pub fn lambda_max(rec: &Recording, max_lag: usize) -> Result<f64> {
    validate_learn(rec, &LearnConfig::new(max_lag, 0.0))?;
    Ok((0..rec.n_channels())
        .map(|to| {
            let sys = gram_system(&design(rec, to, max_lag));
            sys.cross.iter().fold(0.0f64, |m, c| m.max(c.abs()))
        })
        .fold(0.0, f64::max))
}

/// Fit the network. See [`learn_with`] for solver diagnostics.
pub fn learn(
    rec: &Recording,
    max_lag: usize,
    lambda: f64,
    priors: Option<&EdgePriorMatrix>,
) -> Result<DbnModel> {
    let mut cfg = LearnConfig::new(max_lag, lambda);
    cfg.priors = priors.cloned();
    learn_with(rec, &cfg).map(|(m, _)| m)
}

/// Fit every channel independently (in parallel) by weighted-lasso proximal
/// gradient with backtracking. Intercepts are unpenalized.
pub fn learn_with(rec: &Recording, cfg: &LearnConfig) -> Result<(DbnModel, Vec<ChannelFit>)> {
    validate_learn(rec, cfg)?;
    let c = rec.n_channels();
    let lag = cfg.max_lag;
    let fits: Vec<(Vec<f64>, f64, f64, ChannelFit)> = (0..c)
        .into_par_iter()
        .map(|to| {
            let d = design(rec, to, lag);
            let sys = gram_system(&d);
            let penalties: Vec<f64> = (0..c)
                .flat_map(|from| std::iter::repeat_n(cfg.edge_penalty(to, from), lag))
                .collect();
            let out = GramProblem {
                gram: &sys.gram,
                cross: &sys.cross,
                half_yy: sys.half_yy,
                penalties: &penalties,
            }
            .solve(&cfg.solver);
            let intercept = d.target_mean - dot(&out.weights, &d.column_means);
            let rows = d.target.len();
            let rss: f64 = (0..rows)
                .map(|r| {
                    let fit: f64 = d
                        .columns
                        .iter()
                        .zip(&out.weights)
                        .map(|(col, w)| col[r] * w)
                        .sum();
                    (d.target[r] - fit).powi(2)
                })
                .sum();
            let noise_var = (rss / rows as f64).max(NOISE_VAR_FLOOR);
            let fit = ChannelFit {
                objective_trace: out.objective_trace,
                iterations: out.iterations,
                converged: out.converged,
            };
            (out.weights, intercept, noise_var, fit)
        })
        .collect();

    let mut weights = Vec::with_capacity(c * c * lag);
    let mut intercepts = Vec::with_capacity(c);
    let mut noise_vars = Vec::with_capacity(c);
    let mut diagnostics = Vec::with_capacity(c);
    for (w, b, v, f) in fits {
        weights.extend(w);
        intercepts.push(b);
        noise_vars.push(v);
        diagnostics.push(f);
    }
    let model = DbnModel::from_parts(rec.labels(), lag, cfg.lambda, weights, intercepts, noise_vars)?;
    Ok((model, diagnostics))
}
