//! Intervention effects: `delta_rho = rho_post - rho_pre`, from an event-split
//! recording or from a simulated do-operation on a synthetic system.

use serde::{Deserialize, Serialize};

use crate::crossmap::{cross_map, CcmMode, CrossMapConfig};
use crate::dbn::{learn_with, DbnModel, LearnConfig};
use crate::embedding::embed;
use crate::error::{Error, Result};
use crate::crossmap::neighbor_turnover;
use crate::series::{segment_samples, Recording};
use crate::synthetic::{generate, DoIntervention, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionScheme {
    Segmented,
    Simulated,
}

/// Half-open sample ranges `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub pre: (usize, usize),
    pub post: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    /// `(source, target)`: the source manifold predicts the target.
    pub direction: (String, String),
    pub scheme: InterventionScheme,
    pub mode: CcmMode,
    pub rho_pre: f64,
    pub rho_post: f64,
    pub delta_rho: f64,
    pub windows: Windows,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Fraction of post-window source-manifold rows whose neighbor sets differ
    /// from the unperturbed trajectory (simulated scheme only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub neighbor_turnover: Option<f64>,
}

/// Where the DBN weighting comes from, if anywhere.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DbnPolicy {
    /// Standard CCM.
    #[default]
    None,
    /// Use a model fitted elsewhere for both windows.
    Provided(DbnModel),
    /// Fit once on the pre-window, evaluate its conditionals on both windows.
    TrainPre(LearnConfig),
    /// Fit separately on each window.
    RetrainPost(LearnConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionConfig {
    pub crossmap: CrossMapConfig,
    pub dbn: DbnPolicy,
}

impl InterventionConfig {
    pub fn standard(crossmap: CrossMapConfig) -> Self {
        Self {
            crossmap,
            dbn: DbnPolicy::None,
        }
    }

    /// Samples skipped after the onset by the default post window.
    pub fn guard_band(&self) -> usize {
        self.crossmap.embedding.offset()
    }
}

/// Default windows: `[0, onset)` and `[onset + (E-1)tau, end)`.
pub fn default_windows(rec: &Recording, cfg: &InterventionConfig) -> Result<Windows> {
    let onset = rec.onset_index().ok_or(Error::MissingOnset)?;
    let post_start = onset + cfg.guard_band();
    if post_start >= rec.n_samples() {
        return Err(Error::SeriesTooShort {
            required: post_start,
            actual: rec.n_samples(),
        });
    }
    Ok(Windows {
        pre: (0, onset),
        post: (post_start, rec.n_samples()),
    })
}

fn window_rho(
    rec: &Recording,
    window: (usize, usize),
    source: usize,
    target: usize,
    cfg: &CrossMapConfig,
    model: Option<&DbnModel>,
) -> Result<f64> {
    let seg = segment_samples(rec, window.0, window.1)?;
    let densities = model
        .map(|m| m.target_densities(&seg, target))
        .transpose()?;
    cross_map(
        &seg.channels()[source],
        &seg.channels()[target],
        cfg,
        densities.as_deref(),
        None,
    )
    .map(|r| r.rho)
}

/// Cross-map skill before and after an event in a recording.
pub fn segmented_intervention(
    rec: &Recording,
    source: usize,
    target: usize,
    cfg: &InterventionConfig,
    windows: Option<Windows>,
) -> Result<InterventionResult> {
    for ch in [source, target] {
        if ch >= rec.n_channels() {
            return Err(Error::ChannelMismatch(format!(
                "channel {ch} not in recording with {} channels",
                rec.n_channels()
            )));
        }
    }
    let windows = match windows {
        Some(w) => w,
        None => default_windows(rec, cfg)?,
    };
    let pre_rec = segment_samples(rec, windows.pre.0, windows.pre.1)?;
    let (pre_model, post_model) = match &cfg.dbn {
        DbnPolicy::None => (None, None),
        DbnPolicy::Provided(m) => (Some(m.clone()), Some(m.clone())),
        DbnPolicy::TrainPre(lc) => {
            let m = learn_with(&pre_rec, lc)?.0;
            (Some(m.clone()), Some(m))
        }
        DbnPolicy::RetrainPost(lc) => {
            let post_rec = segment_samples(rec, windows.post.0, windows.post.1)?;
            (
                Some(learn_with(&pre_rec, lc)?.0),
                Some(learn_with(&post_rec, lc)?.0),
            )
        }
    };
    let rho_pre = window_rho(rec, windows.pre, source, target, &cfg.crossmap, pre_model.as_ref())?;
    let rho_post = window_rho(
        rec,
        windows.post,
        source,
        target,
        &cfg.crossmap,
        post_model.as_ref(),
    )?;
    Ok(InterventionResult {
        direction: (
            rec.channels()[source].label().to_string(),
            rec.channels()[target].label().to_string(),
        ),
        scheme: InterventionScheme::Segmented,
        mode: if pre_model.is_some() {
            CcmMode::DbnInformed
        } else {
            CcmMode::Standard
        },
        rho_pre,
        rho_post,
        delta_rho: rho_post - rho_pre,
        windows,
        seed: None,
        neighbor_turnover: None,
    })
}

/// Generate `spec` with `action` applied from `onset_fraction * n_samples`
/// onward, then split around the onset as in [`segmented_intervention`].
pub fn simulated_intervention(
    spec: &SyntheticSpec,
    action: DoIntervention,
    onset_fraction: f64,
    source: usize,
    target: usize,
    cfg: &InterventionConfig,
) -> Result<InterventionResult> {
    if !(onset_fraction > 0.0 && onset_fraction < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "onset fraction {onset_fraction} outside (0, 1)"
        )));
    }
    let onset = (onset_fraction * spec.n_samples as f64).round() as usize;
    if onset == 0 || onset >= spec.n_samples {
        return Err(Error::InvalidSpec("onset falls outside the series".into()));
    }
    let mut perturbed = spec.clone();
    perturbed.intervention = Some(DoIntervention {
        onset_sample: onset,
        ..action
    });
    perturbed.event_onset = Some(onset as f64 / spec.sample_rate);
    let rec = generate(&perturbed)?;
    let mut result = segmented_intervention(&rec, source, target, cfg, None)?;
    result.scheme = InterventionScheme::Simulated;
    result.seed = Some(spec.seed);

    let mut baseline = spec.clone();
    baseline.intervention = None;
    baseline.event_onset = None;
    let base = generate(&baseline)?;
    let (a, b) = result.windows.post;
    let before = embed(&segment_samples(&base, a, b)?.channels()[source], cfg.crossmap.embedding)?;
    let after = embed(&segment_samples(&rec, a, b)?.channels()[source], cfg.crossmap.embedding)?;
    result.neighbor_turnover = neighbor_turnover(&before, &after, cfg.crossmap.search_options()).ok();
    Ok(result)
}
