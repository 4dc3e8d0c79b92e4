use serde::{Deserialize, Serialize};

use super::DbnModel;
use crate::error::{Error, Result};

/// Nonzero weight as `[to, from, lag, value]`, lag starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry(pub usize, pub usize, pub usize, pub f64);

/// On-disk form of a [`DbnModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub max_lag: usize,
    pub lambda: f64,
    pub channels: Vec<String>,
    pub weights: Vec<WeightEntry>,
    pub intercepts: Vec<f64>,
    pub noise_vars: Vec<f64>,
}

pub(super) fn to_document(m: &DbnModel) -> ModelDocument {
    let c = m.n_channels();
    let mut weights = Vec::new();
    for to in 0..c {
        for from in 0..c {
            for lag in 1..=m.max_lag() {
                let w = m.weight(to, from, lag);
                if w != 0.0 {
                    weights.push(WeightEntry(to, from, lag, w));
                }
            }
        }
    }
    ModelDocument {
        max_lag: m.max_lag(),
        lambda: m.lambda(),
        channels: m.labels().to_vec(),
        weights,
        intercepts: m.intercepts.clone(),
        noise_vars: m.noise_vars.clone(),
    }
}

pub(super) fn from_document(doc: &ModelDocument) -> Result<DbnModel> {
    let c = doc.channels.len();
    let lag = doc.max_lag;
    let mut dense = vec![0.0; c * c * lag];
    for &WeightEntry(to, from, l, v) in &doc.weights {
        if to >= c || from >= c || l == 0 || l > lag {
            return Err(Error::Parse(format!(
                "weight entry [{to}, {from}, {l}] outside {c} channels / max_lag {lag}"
            )));
        }
        dense[(to * c + from) * lag + (l - 1)] = v;
    }
    DbnModel::from_parts(
        doc.channels.clone(),
        lag,
        doc.lambda,
        dense,
        doc.intercepts.clone(),
        doc.noise_vars.clone(),
    )
}
