//! Pipeline configuration and its flat `[section] key = value` text format.

use std::path::PathBuf;

use crate::crossmap::{BandwidthMode, DirectionConvention, KernelConfig};
use crate::error::{Error, Result};
use crate::metrics::SurrogateMethod;
use crate::series::{default_bands, BandSpec};
use crate::synthetic::SyntheticSpec;

/// Reference text for the config file, printed by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG FILE
  Flat key = value lines grouped under [section] headers. '#' starts a
  comment. Every key can be overridden by the command-line flag in brackets.

  [input]
  path = data.csv            CSV, header row of channel labels   [--input]
  sample_rate = 250          Hz                                  [--sample-rate]
  event_onset = 2.0          seconds; enables the pre/post split [--event-onset]
  synthetic = spec.json      synthetic spec instead of a CSV     [--spec]

  [bands]
  bands = auto               auto | default | broadband | name:lo-hi,...  [--bands]

  [embedding]
  dim = 3                    embedding dimension E               [--embed-dim]
  tau = 1                    delay in samples                    [--embed-tau]
  auto = false               pick tau and E per source channel   [--auto-embed]

  [kernel]
  bandwidth = mean           mean | nearest | fixed              [--bandwidth]
  sigma = 1.0                used when bandwidth = fixed         [--sigma]

  [crossmap]
  mode = both                standard | dbn | both               [--mode]
  convention = paper         paper | sugihara                    [--convention]
  exclusion_radius = auto    auto ((E-1)*tau) or samples         [--exclusion-radius]
  allow_self_neighbor = false                                    [--allow-self-neighbor]
  convergence_sizes = auto   auto or comma-separated sizes       [--convergence-sizes]

  [dbn]
  max_lag = 2                                                    [--max-lag]
  lambda = 0.05                                                  [--lambda]
  use_ccm_priors = false                                         [--ccm-priors]
  retrain_post = false                                           [--retrain-post]

  [surrogates]
  method = circular_shift    circular_shift | permutation        [--surrogate-method]
  count = 100                                                    [--surrogates]

  [intervention]
  pre = 0-500                samples [start-end); default [0, onset)    [--pre-window]
  post = 520-1000            default [onset + (E-1)*tau, end)           [--post-window]

  [output]
  dir = ccm-output                                               [--out]

  [run]
  seed = 0                   master seed                         [--seed]
  workers = 0                0 = all cores                       [--workers]
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSelection {
    Standard,
    Dbn,
    Both,
}

impl MethodSelection {
    pub fn standard(&self) -> bool {
        matches!(self, Self::Standard | Self::Both)
    }

    pub fn dbn(&self) -> bool {
        matches!(self, Self::Dbn | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandSelection {
    /// Conventional bands below Nyquist; broadband if none fit.
    Auto,
    /// Conventional bands, all of which must fit.
    Default,
    Broadband,
    Custom(Vec<BandSpec>),
}

impl BandSelection {
    /// `None` in the result stands for the unfiltered signal.
    pub fn resolve(&self, sample_rate: f64) -> Result<Vec<Option<BandSpec>>> {
        match self {
            Self::Auto => {
                let fit: Vec<_> = default_bands()
                    .into_iter()
                    .filter(|b| b.validate(sample_rate).is_ok())
                    .map(Some)
                    .collect();
                Ok(if fit.is_empty() { vec![None] } else { fit })
            }
            Self::Default => default_bands()
                .into_iter()
                .map(|b| b.validate(sample_rate).map(|_| Some(b)))
                .collect(),
            Self::Broadband => Ok(vec![None]),
            Self::Custom(bands) => bands
                .iter()
                .map(|b| b.validate(sample_rate).map(|_| Some(b.clone())))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Csv(PathBuf),
    Synthetic(Box<SyntheticSpec>),
    /// Already in memory (e.g. CSV read from stdin).
    Recording(Box<crate::series::Recording>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<InputSource>,
    pub sample_rate: f64,
    pub event_onset: Option<f64>,
    pub bands: BandSelection,
    pub embed_dim: usize,
    pub embed_tau: usize,
    pub auto_embed: bool,
    pub kernel: KernelConfig,
    pub mode: MethodSelection,
    pub convention: DirectionConvention,
    pub exclusion_radius: Option<usize>,
    pub allow_self_neighbor: bool,
    pub convergence_sizes: Option<Vec<usize>>,
    pub max_lag: usize,
    pub lambda: f64,
    pub use_ccm_priors: bool,
    pub retrain_post: bool,
    pub surrogate_method: SurrogateMethod,
    pub n_surrogates: usize,
    pub pre_window: Option<(usize, usize)>,
    pub post_window: Option<(usize, usize)>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            sample_rate: 1.0,
            event_onset: None,
            bands: BandSelection::Auto,
            embed_dim: 3,
            embed_tau: 1,
            auto_embed: false,
            kernel: KernelConfig::default(),
            mode: MethodSelection::Both,
            convention: DirectionConvention::Paper,
            exclusion_radius: None,
            allow_self_neighbor: false,
            convergence_sizes: None,
            max_lag: 2,
            lambda: 0.05,
            use_ccm_priors: false,
            retrain_post: false,
            surrogate_method: SurrogateMethod::CircularShift,
            n_surrogates: 100,
            pre_window: None,
            post_window: None,
            out_dir: PathBuf::from("ccm-output"),
            seed: 0,
            workers: 0,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
}

fn parse_range(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once('-')
        .ok_or_else(|| Error::Parse(format!("{key} expects start-end, got '{v}'")))?;
    let range = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
    if range.0 >= range.1 {
        return Err(Error::Parse(format!("{key}: empty window '{v}'")));
    }
    Ok(range)
}

/// `name:lo-hi,name:lo-hi` or one of the keywords.
pub fn parse_bands(v: &str) -> Result<BandSelection> {
    match v {
        "auto" => return Ok(BandSelection::Auto),
        "default" => return Ok(BandSelection::Default),
        "broadband" | "none" => return Ok(BandSelection::Broadband),
        _ => {}
    }
    let bands = v
        .split(',')
        .map(|item| {
            let (name, range) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("band '{item}' is not name:lo-hi")))?;
            let (lo, hi) = range
                .split_once('-')
                .ok_or_else(|| Error::Parse(format!("band '{item}' is not name:lo-hi")))?;
            Ok(BandSpec::new(
                name.trim(),
                parse_num("bands", lo.trim())?,
                parse_num("bands", hi.trim())?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandSelection::Custom(bands))
}

impl PipelineConfig {
    /// Apply one `section.key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input.path" => self.input = Some(InputSource::Csv(PathBuf::from(v))),
            "input.synthetic" => {
                let text = std::fs::read_to_string(v)?;
                self.input = Some(InputSource::Synthetic(Box::new(serde_json::from_str(&text)?)));
            }
            "input.sample_rate" => self.sample_rate = parse_num(key, v)?,
            "input.event_onset" => self.event_onset = Some(parse_num(key, v)?),
            "bands.bands" => self.bands = parse_bands(v)?,
            "embedding.dim" => self.embed_dim = parse_num(key, v)?,
            "embedding.tau" => self.embed_tau = parse_num(key, v)?,
            "embedding.auto" => self.auto_embed = parse_bool(v)?,
            "kernel.bandwidth" => {
                self.kernel.bandwidth_mode = match v {
                    "mean" => BandwidthMode::PerQueryMean,
                    "nearest" => BandwidthMode::PerQueryNearest,
                    "fixed" => BandwidthMode::GlobalFixed,
                    _ => return Err(Error::Parse(format!("unknown bandwidth '{v}'"))),
                }
            }
            "kernel.sigma" => self.kernel.fixed_sigma = Some(parse_num(key, v)?),
            "crossmap.mode" => {
                self.mode = match v {
                    "standard" => MethodSelection::Standard,
                    "dbn" => MethodSelection::Dbn,
                    "both" => MethodSelection::Both,
                    _ => return Err(Error::Parse(format!("unknown mode '{v}'"))),
                }
            }
            "crossmap.convention" => {
                self.convention = match v {
                    "paper" => DirectionConvention::Paper,
                    "sugihara" => DirectionConvention::Sugihara,
                    _ => return Err(Error::Parse(format!("unknown convention '{v}'"))),
                }
            }
            "crossmap.exclusion_radius" => {
                self.exclusion_radius = match v {
                    "auto" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "crossmap.allow_self_neighbor" => self.allow_self_neighbor = parse_bool(v)?,
            "crossmap.convergence_sizes" => {
                self.convergence_sizes = match v {
                    "auto" => None,
                    _ => Some(
                        v.split(',')
                            .map(|s| parse_num(key, s.trim()))
                            .collect::<Result<_>>()?,
                    ),
                }
            }
            "dbn.max_lag" => self.max_lag = parse_num(key, v)?,
            "dbn.lambda" => self.lambda = parse_num(key, v)?,
            "dbn.use_ccm_priors" => self.use_ccm_priors = parse_bool(v)?,
            "dbn.retrain_post" => self.retrain_post = parse_bool(v)?,
            "surrogates.method" => {
                self.surrogate_method = match v {
                    "circular_shift" => SurrogateMethod::CircularShift,
                    "permutation" => SurrogateMethod::FullPermutation,
                    _ => return Err(Error::Parse(format!("unknown surrogate method '{v}'"))),
                }
            }
            "surrogates.count" => self.n_surrogates = parse_num(key, v)?,
            "intervention.pre" => self.pre_window = Some(parse_range(key, v)?),
            "intervention.post" => self.post_window = Some(parse_range(key, v)?),
            "output.dir" => self.out_dir = PathBuf::from(v),
            "run.seed" => self.seed = parse_num(key, v)?,
            "run.workers" => self.workers = parse_num(key, v)?,
            _ => return Err(Error::Parse(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parse config text, applying each setting over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            if section.is_empty() {
                return Err(Error::Parse(format!(
                    "line {}: key outside of a [section]",
                    lineno + 1
                )));
            }
            self.set(&format!("{section}.{}", k.trim()), v)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn surrogate_seed_label(pair: &str, band: &str, stage: &str) -> String {
        format!("({pair},{band},{stage})")
    }
}
