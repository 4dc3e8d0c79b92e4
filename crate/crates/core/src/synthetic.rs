//! Ground-truth generators: coupled logistic maps and sparse VAR processes,
//! with optional regime switches, do-interventions and observation noise.
//!
//! Random streams come from [`crate::rng::CounterRng`] keyed by
//! `derive_seed(seed, "initial" | "dynamics" | "observation")`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};
use crate::series::{Recording, TimeSeries};
use crate::stats;

/// Dynamics of a synthetic system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemKind {
    /// `x_{t+1} = x_t (r - r x_t - sum_j coupling[x][j] x_{j,t})`, diagonal
    /// of `coupling` ignored.
    CoupledLogistic {
        r: Vec<f64>,
        coupling: Vec<Vec<f64>>,
        /// Initial state; drawn uniformly from [0.2, 0.8) when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
    /// `x_t = sum_l lags[l-1] x_{t-l} + e_t`, `e_t ~ N(0, noise_std^2 I)`;
    /// `lags[l][to][from]`.
    SparseVar {
        lags: Vec<Vec<Vec<f64>>>,
        noise_std: f64,
    },
}

impl SystemKind {
    pub fn n_channels(&self) -> usize {
        match self {
            SystemKind::CoupledLogistic { r, .. } => r.len(),
            SystemKind::SparseVar { lags, .. } => lags.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self) -> Result<()> {
        let c = self.n_channels();
        if c == 0 {
            return Err(Error::InvalidSpec("system has no channels".into()));
        }
        let square = |m: &Vec<Vec<f64>>| m.len() == c && m.iter().all(|r| r.len() == c);
        match self {
            SystemKind::CoupledLogistic {
                r,
                coupling,
                initial,
            } => {
                if !square(coupling) {
                    return Err(Error::InvalidSpec(format!("coupling must be {c}x{c}")));
                }
                if r.iter().chain(coupling.iter().flatten()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("non-finite logistic parameter".into()));
                }
                if let Some(x0) = initial {
                    if x0.len() != c || x0.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::InvalidSpec(
                            "initial state must have one value in [0, 1] per channel".into(),
                        ));
                    }
                }
            }
            SystemKind::SparseVar { lags, noise_std } => {
                if lags.is_empty() || !lags.iter().all(square) {
                    return Err(Error::InvalidSpec(format!(
                        "VAR needs at least one {c}x{c} lag matrix"
                    )));
                }
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(Error::InvalidSpec("noise_std must be >= 0".into()));
                }
                let radius = spectral_radius(lags);
                if !(radius < 1.0) {
                    return Err(Error::Unstable(format!(
                        "VAR companion spectral radius {radius} >= 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Spectral radius of the VAR companion matrix.
pub fn spectral_radius(lags: &[Vec<Vec<f64>>]) -> f64 {
    let c = lags[0].len();
    let p = lags.len();
    let n = c * p;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (l, a) in lags.iter().enumerate() {
        for i in 0..c {
            for j in 0..c {
                m[(i, l * c + j)] = a[i][j];
            }
        }
    }
    for i in c..n {
        m[(i, i - c)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoMode {
    /// Overwrite the channel with the value.
    Clamp,
    /// Add the value to the channel.
    Shift,
}

/// A do-operation applied to one channel from `onset_sample` (emitted index)
/// onward. Downstream dynamics read the intervened values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoIntervention {
    pub channel: usize,
    pub mode: DoMode,
    pub value: f64,
    pub onset_sample: usize,
}

/// Switch to different dynamics at emitted index `at_sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeChange {
    pub at_sample: usize,
    pub kind: SystemKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationNoise {
    /// Fixed standard deviation.
    Absolute(f64),
    /// Standard deviation as a fraction of each clean channel's std.
    Relative(f64),
    /// Signal-to-noise ratio in decibels (power ratio).
    SnrDb(f64),
}

impl ObservationNoise {
    fn std_for(&self, clean: &[f64]) -> f64 {
        match *self {
            ObservationNoise::Absolute(s) => s,
            ObservationNoise::Relative(f) => f * stats::mean_std(clean).1,
            ObservationNoise::SnrDb(db) => stats::mean_std(clean).1 * 10f64.powf(-db / 20.0),
        }
    }
}

fn default_burn_in() -> usize {
    300
}

fn default_sample_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SystemKind,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_noise: Option<ObservationNoise>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_change: Option<RegimeChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<DoIntervention>,
    /// Event time (seconds) attached to the generated recording.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_onset: Option<f64>,
}

impl SyntheticSpec {
    pub fn new(kind: SystemKind, n_samples: usize, seed: u64) -> Self {
        Self {
            kind,
            n_samples,
            seed,
            burn_in: default_burn_in(),
            sample_rate: default_sample_rate(),
            labels: None,
            observation_noise: None,
            regime_change: None,
            intervention: None,
            event_onset: None,
        }
    }

    /// Canonical unidirectional pair: x (r=3.8) drives y (r=3.5) with
    /// strength `beta`.
    pub fn logistic_pair(beta_y_from_x: f64, beta_x_from_y: f64, n_samples: usize, seed: u64) -> Self {
        let mut spec = Self::new(
            SystemKind::CoupledLogistic {
                r: vec![3.8, 3.5],
                coupling: vec![vec![0.0, beta_x_from_y], vec![beta_y_from_x, 0.0]],
                initial: None,
            },
            n_samples,
            seed,
        );
        spec.labels = Some(vec!["x".into(), "y".into()]);
        spec
    }

    pub fn n_channels(&self) -> usize {
        self.kind.n_channels()
    }

    pub fn channel_labels(&self) -> Vec<String> {
        self.labels
            .clone()
            .unwrap_or_else(|| (0..self.n_channels()).map(|i| format!("x{i}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidSpec("n_samples must be >= 1".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidSpec("sample_rate must be positive".into()));
        }
        self.kind.validate()?;
        let c = self.n_channels();
        if let Some(labels) = &self.labels {
            if labels.len() != c {
                return Err(Error::InvalidSpec(format!("{} labels for {c} channels", labels.len())));
            }
        }
        if let Some(rc) = &self.regime_change {
            rc.kind.validate()?;
            if std::mem::discriminant(&rc.kind) != std::mem::discriminant(&self.kind)
                || rc.kind.n_channels() != c
            {
                return Err(Error::InvalidSpec(
                    "regime change must keep the system type and channel count".into(),
                ));
            }
            if rc.at_sample >= self.n_samples {
                return Err(Error::InvalidSpec("regime change after the last sample".into()));
            }
        }
        if let Some(iv) = &self.intervention {
            if iv.channel >= c || iv.onset_sample >= self.n_samples || !iv.value.is_finite() {
                return Err(Error::InvalidSpec(format!("invalid intervention {iv:?}")));
            }
        }
        if let Some(noise) = self.observation_noise {
            let v = match noise {
                ObservationNoise::Absolute(v) | ObservationNoise::Relative(v) => v >= 0.0,
                ObservationNoise::SnrDb(v) => v.is_finite(),
            };
            if !v {
                return Err(Error::InvalidSpec("invalid observation noise".into()));
            }
        }
        Ok(())
    }
}

/// Run the system and return the emitted samples, one vector per channel.
fn simulate(spec: &SyntheticSpec) -> Result<Vec<Vec<f64>>> {
    let c = spec.n_channels();
    let total = spec.burn_in + spec.n_samples;
    let mut init_rng = CounterRng::new(derive_seed(spec.seed, "initial"));
    let mut dyn_rng = CounterRng::new(derive_seed(spec.seed, "dynamics"));
    // state history, one row per step
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(total);

    let kind_at = |step: usize| -> &SystemKind {
        match &spec.regime_change {
            Some(rc) if step >= spec.burn_in + rc.at_sample => &rc.kind,
            _ => &spec.kind,
        }
    };
    let intervene = |step: usize, state: &mut [f64]| {
        if let Some(iv) = &spec.intervention {
            if step >= spec.burn_in + iv.onset_sample {
                match iv.mode {
                    DoMode::Clamp => state[iv.channel] = iv.value,
                    DoMode::Shift => state[iv.channel] += iv.value,
                }
            }
        }
    };

    for step in 0..total {
        let mut next = match (kind_at(step), step) {
            (SystemKind::CoupledLogistic { initial, .. }, 0) => match initial {
                Some(x0) => x0.clone(),
                None => (0..c).map(|_| init_rng.uniform(0.2, 0.8)).collect(),
            },
            (SystemKind::CoupledLogistic { r, coupling, .. }, _) => {
                let prev = &hist[step - 1];
                (0..c)
                    .map(|i| {
                        let drive: f64 = (0..c)
                            .filter(|&j| j != i)
                            .map(|j| coupling[i][j] * prev[j])
                            .sum();
                        prev[i] * (r[i] - r[i] * prev[i] - drive)
                    })
                    .collect()
            }
            (SystemKind::SparseVar { lags, noise_std }, _) => (0..c)
                .map(|i| {
                    let mut v = 0.0;
                    for (l, a) in lags.iter().enumerate() {
                        if let Some(past) = step.checked_sub(l + 1).map(|s| &hist[s]) {
                            v += a[i].iter().zip(past).map(|(w, x)| w * x).sum::<f64>();
                        }
                    }
                    v + noise_std * dyn_rng.normal()
                })
                .collect(),
        };
        intervene(step, &mut next);
        if let SystemKind::CoupledLogistic { .. } = kind_at(step) {
            if let Some((i, v)) = next
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::Unstable(format!(
                    "logistic channel {i} left [0, 1] at step {step} (value {v})"
                )));
            }
        } else if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unstable(format!("non-finite state at step {step}")));
        }
        hist.push(next);
    }

    Ok((0..c)
        .map(|i| hist[spec.burn_in..].iter().map(|s| s[i]).collect())
        .collect())
}

/// Generate a recording. Deterministic given the spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Recording> {
    spec.validate()?;
    let mut columns = simulate(spec)?;
    if let Some(noise) = spec.observation_noise {
        let mut rng = CounterRng::new(derive_seed(spec.seed, "observation"));
        for col in columns.iter_mut() {
            let sd = noise.std_for(col);
            col.iter_mut().for_each(|v| *v += sd * rng.normal());
        }
    }
    let channels = spec
        .channel_labels()
        .into_iter()
        .zip(columns)
        .map(|(label, values)| TimeSeries::new(label, values, spec.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    Recording::new(channels, spec.event_onset)
}

/// `adjacency[to][from]`: planted coupling is nonzero (any lag, either
/// regime). Logistic diagonals are never edges.
pub fn ground_truth(spec: &SyntheticSpec) -> Vec<Vec<bool>> {
    let c = spec.n_channels();
    let mut adj = vec![vec![false; c]; c];
    let mut mark = |kind: &SystemKind| match kind {
        SystemKind::CoupledLogistic { coupling, .. } => {
            for i in 0..c {
                for j in 0..c {
                    adj[i][j] |= i != j && coupling[i][j] != 0.0;
                }
            }
        }
        SystemKind::SparseVar { lags, .. } => {
            for a in lags {
                for i in 0..c {
                    for j in 0..c {
                        adj[i][j] |= a[i][j] != 0.0;
                    }
                }
            }
        }
    };
    mark(&spec.kind);
    if let Some(rc) = &spec.regime_change {
        mark(&rc.kind);
    }
    adj
}

/// Named specs used by the CLI.
pub fn preset(name: &str, seed: u64) -> Result<SyntheticSpec> {
    let spec = match name {
        "unidirectional" => SyntheticSpec::logistic_pair(0.32, 0.0, 1000, seed),
        "bidirectional" => SyntheticSpec::logistic_pair(0.1, 0.02, 1000, seed),
        "independent" => SyntheticSpec::logistic_pair(0.0, 0.0, 1000, seed),
        "switch-off" => {
            let mut s = SyntheticSpec::logistic_pair(0.32, 0.0, 1000, seed);
            let after = SyntheticSpec::logistic_pair(0.0, 0.0, 1000, seed).kind;
            s.regime_change = Some(RegimeChange {
                at_sample: 500,
                kind: after,
            });
            s.event_onset = Some(500.0);
            s
        }
        "sparse-var" => {
            let mut s = SyntheticSpec::new(sparse_var3_kind(), 2000, seed);
            s.observation_noise = Some(ObservationNoise::SnrDb(10.0));
            s
        }
        other => {
            return Err(Error::InvalidSpec(format!(
                "unknown preset '{other}' (unidirectional, bidirectional, independent, \
                 switch-off, sparse-var)"
            )))
        }
    };
    Ok(spec)
}

/// Three-channel VAR(2) with self-dynamics and four cross edges:
/// 0->1 (lag 1), 1->2 (lag 2), 2->0 (lag 1), 0->2 (lag 2).
pub fn sparse_var3_kind() -> SystemKind {
    SystemKind::SparseVar {
        lags: vec![
            vec![
                vec![0.4, 0.0, 0.35],
                vec![0.45, 0.3, 0.0],
                vec![0.0, 0.0, 0.4],
            ],
            vec![
                vec![-0.2, 0.0, 0.0],
                vec![0.0, -0.2, 0.0],
                vec![0.4, -0.4, -0.2],
            ],
        ],
        noise_std: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_logistic_step() {
        let mut spec = SyntheticSpec::new(
            SystemKind::CoupledLogistic {
                r: vec![3.8],
                coupling: vec![vec![0.0]],
                initial: Some(vec![0.4]),
            },
            3,
            0,
        );
        spec.burn_in = 0;
        let rec = generate(&spec).unwrap();
        let v = rec.channels()[0].values();
        assert_eq!(v[0], 0.4);
        assert!((v[1] - 0.912).abs() < 1e-15);
    }

    #[test]
    fn escape_is_unstable() {
        let mut spec = SyntheticSpec::new(
            SystemKind::CoupledLogistic {
                r: vec![4.5],
                coupling: vec![vec![0.0]],
                initial: Some(vec![0.5]),
            },
            10,
            0,
        );
        spec.burn_in = 0;
        assert!(matches!(generate(&spec), Err(Error::Unstable(_))));
    }

    #[test]
    fn explosive_var_is_rejected() {
        let spec = SyntheticSpec::new(
            SystemKind::SparseVar {
                lags: vec![vec![vec![1.1]]],
                noise_std: 1.0,
            },
            10,
            0,
        );
        assert!(matches!(generate(&spec), Err(Error::Unstable(_))));
    }

    #[test]
    fn preset_var_is_stationary() {
        if let SystemKind::SparseVar { lags, .. } = sparse_var3_kind() {
            assert!(spectral_radius(&lags) < 0.95);
        }
    }

    #[test]
    fn ground_truth_examples() {
        let uni = SyntheticSpec::logistic_pair(0.32, 0.0, 10, 0);
        assert_eq!(ground_truth(&uni), vec![vec![false, false], vec![true, false]]);
        let none = SyntheticSpec::logistic_pair(0.0, 0.0, 10, 0);
        assert_eq!(ground_truth(&none), vec![vec![false; 2]; 2]);
        let bi = SyntheticSpec::logistic_pair(0.1, 0.02, 10, 0);
        assert_eq!(ground_truth(&bi), vec![vec![false, true], vec![true, false]]);
        let var = SyntheticSpec::new(sparse_var3_kind(), 10, 0);
        let adj = ground_truth(&var);
        let off: usize = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && adj[i][j])
            .count();
        assert_eq!(off, 4);
    }

    #[test]
    fn invalid_specs() {
        let mut s = SyntheticSpec::logistic_pair(0.32, 0.0, 10, 0);
        s.intervention = Some(DoIntervention {
            channel: 5,
            mode: DoMode::Clamp,
            value: 0.5,
            onset_sample: 2,
        });
        assert!(matches!(generate(&s), Err(Error::InvalidSpec(_))));
        let s = SyntheticSpec::new(
            SystemKind::CoupledLogistic {
                r: vec![3.8, 3.5],
                coupling: vec![vec![0.0]],
                initial: None,
            },
            10,
            0,
        );
        assert!(generate(&s).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = preset("switch-off", 3).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: SyntheticSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
