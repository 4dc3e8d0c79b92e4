//! Batch analysis over every ordered channel pair and band.
//!
//! Each (band, pair) task writes its own result file under `tasks/` and is
//! recorded in `manifest.json`; a rerun skips tasks whose file is already
//! present. Finished tasks are merged into `report.csv` / `report.json`, and
//! the plots are rendered from the merged report.

pub mod config;
pub mod plot;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossmap::{convergence, cross_map, CcmMode, CrossMapConfig, LibrarySampling};
use crate::dbn::{learn_with, normalize_ccm_priors, DbnModel, LearnConfig};
use crate::embedding::{select_dimension, select_tau, EmbeddingParams};
use crate::error::{Error, Result};
use crate::intervention::{default_windows, segmented_intervention, DbnPolicy, InterventionConfig, Windows};
use crate::metrics::{causal_impact, pc_norm, shuffled_rho, MetricRow, MetricsReport, SurrogateConfig};
use crate::rng::derive_seed;
use crate::series::{bandpass, read_csv, segment_samples, standardize, BandSpec, Recording};
use crate::synthetic::generate;

pub use config::{BandSelection, InputSource, MethodSelection, PipelineConfig, CONFIG_HELP};

/// Largest lag scanned when picking tau automatically.
const AUTO_TAU_MAX_LAG: usize = 50;
/// Largest dimension tried when picking E automatically.
const AUTO_MAX_DIM: usize = 10;
const CONVERGENCE_DRAWS: usize = 10;

/// A failure tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl StageError {
    /// 2 for usage and I/O problems, 1 for analysis failures.
    pub fn exit_code(&self) -> i32 {
        match (&self.stage, &self.error) {
            (&"config" | &"ingest" | &"output", _) => 2,
            (_, Error::Io(_)) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "stage": self.stage,
            "error": self.error.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait AtStage<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            error: e.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub pair: String,
    pub band: String,
    pub library_sizes: Vec<usize>,
    pub rhos: Vec<f64>,
    pub rho_std: Vec<f64>,
}

/// What one (band, pair) task leaves on disk. `ci` in `rows` is filled in
/// only after merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub band: String,
    pub source: String,
    pub target: String,
    pub embedding: EmbeddingParams,
    pub windows: Option<Windows>,
    pub rows: Vec<MetricRow>,
    pub convergence: Option<ConvergenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineReport {
    pub rows: Vec<MetricRow>,
    #[serde(default)]
    pub convergence: Vec<ConvergenceRecord>,
}

impl PipelineReport {
    pub fn metrics(&self) -> MetricsReport {
        MetricsReport {
            rows: self.rows.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub total_tasks: usize,
    pub completed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_tasks: usize,
    pub n_pairs: usize,
    pub n_bands: usize,
    pub resumed: usize,
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub plots: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
struct Task {
    id: String,
    band_index: usize,
    source: usize,
    target: usize,
}

impl Task {
    fn file_name(&self) -> String {
        format!("{}.json", self.id)
    }
}

fn band_name(band: &Option<BandSpec>) -> String {
    band.as_ref()
        .map_or_else(|| "broadband".to_string(), |b| b.name.clone())
}

/// Write via a temporary file and rename, so readers never see a partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_recording(cfg: &PipelineConfig) -> Result<Recording> {
    let rec = match &cfg.input {
        None => return Err(Error::InvalidParameter("no input given".into())),
        Some(InputSource::Csv(path)) => read_csv(fs::File::open(path)?, cfg.sample_rate)?,
        Some(InputSource::Synthetic(spec)) => generate(spec)?,
        Some(InputSource::Recording(rec)) => (**rec).clone(),
    };
    match cfg.event_onset {
        Some(onset) => rec.with_event_onset(Some(onset)),
        None => Ok(rec),
    }
}

/// Bandpass (if a band is given) and standardize every channel.
pub fn preprocess(rec: &Recording, band: &Option<BandSpec>) -> Result<Recording> {
    rec.map_channels(|ch| match band {
        Some(b) => standardize(&bandpass(ch, b)?),
        None => standardize(ch),
    })
}

fn resolve_windows(cfg: &PipelineConfig, rec: &Recording, icfg: &InterventionConfig) -> Result<Option<Windows>> {
    match (cfg.pre_window, cfg.post_window) {
        (Some(pre), Some(post)) => {
            for w in [pre, post] {
                if w.1 > rec.n_samples() {
                    return Err(Error::OutOfRange(format!(
                        "window {}-{} beyond {} samples",
                        w.0,
                        w.1,
                        rec.n_samples()
                    )));
                }
            }
            Ok(Some(Windows { pre, post }))
        }
        (None, None) => match rec.onset_index() {
            Some(_) => default_windows(rec, icfg).map(Some),
            None => Ok(None),
        },
        _ => Err(Error::InvalidParameter(
            "pre and post windows must be given together".into(),
        )),
    }
}

fn embedding_for(cfg: &PipelineConfig, rec: &Recording, source: usize) -> Result<EmbeddingParams> {
    if cfg.auto_embed {
        let series = &rec.channels()[source];
        let max_lag = AUTO_TAU_MAX_LAG.min(series.len() / 4).max(1);
        let tau = select_tau(series, max_lag)?;
        let dim = select_dimension(series, tau, AUTO_MAX_DIM)?;
        EmbeddingParams::new(dim, tau)
    } else {
        EmbeddingParams::new(cfg.embed_dim, cfg.embed_tau)
    }
}

fn crossmap_config(cfg: &PipelineConfig, embedding: EmbeddingParams) -> CrossMapConfig {
    CrossMapConfig {
        embedding,
        kernel: cfg.kernel,
        exclusion_radius: cfg.exclusion_radius,
        allow_self_neighbor: cfg.allow_self_neighbor,
    }
}

fn learn_config(cfg: &PipelineConfig) -> LearnConfig {
    LearnConfig::new(cfg.max_lag, cfg.lambda)
}

/// Fit the band's DBN on the training span (the pre window when there is
/// one). With CCM priors, a standard cross-map pass over every ordered pair
/// sets the edge strengths first: the edge `from -> to` gets the skill of the
/// `to` manifold predicting `from`.
fn fit_band_model(cfg: &PipelineConfig, rec: &Recording) -> Result<(DbnModel, LearnConfig)> {
    let probe = InterventionConfig::standard(crossmap_config(
        cfg,
        EmbeddingParams::new(cfg.embed_dim, cfg.embed_tau)?,
    ));
    let train = match resolve_windows(cfg, rec, &probe)? {
        Some(w) => segment_samples(rec, w.pre.0, w.pre.1)?,
        None => rec.clone(),
    };
    let mut lc = learn_config(cfg);
    if cfg.use_ccm_priors {
        let c = train.n_channels();
        let raw = (0..c)
            .map(|to| {
                (0..c)
                    .map(|from| {
                        if to == from {
                            return Ok(0.0);
                        }
                        let emb = embedding_for(cfg, &train, to)?;
                        let chans = train.channels();
                        cross_map(&chans[to], &chans[from], &crossmap_config(cfg, emb), None, None)
                            .map(|r| r.rho)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        lc = lc.with_priors(normalize_ccm_priors(&raw)?);
    }
    let model = learn_with(&train, &lc)?.0;
    Ok((model, lc))
}

struct BandContext {
    name: String,
    rec: Recording,
    model: Option<(DbnModel, LearnConfig)>,
}

fn run_task(cfg: &PipelineConfig, task: &Task, ctx: &BandContext) -> std::result::Result<TaskResult, StageError> {
    let rec = &ctx.rec;
    let (s, t) = (task.source, task.target);
    let embedding = embedding_for(cfg, rec, s).at("embedding")?;
    let cm = crossmap_config(cfg, embedding);
    let labels = rec.labels();
    let (a, b) = cfg.convention.label(&labels[s], &labels[t]);
    let pair = format!("{a}->{b}");
    let raw_pair = format!("{}->{}", labels[s], labels[t]);
    let windows = resolve_windows(cfg, rec, &InterventionConfig::standard(cm)).at("intervention")?;
    let pre_rec = match windows {
        Some(w) => segment_samples(rec, w.pre.0, w.pre.1).at("intervention")?,
        None => rec.clone(),
    };
    let sc = SurrogateConfig::new(
        cfg.surrogate_method,
        cfg.n_surrogates,
        derive_seed(
            cfg.seed,
            &PipelineConfig::surrogate_seed_label(&raw_pair, &ctx.name, "surrogates"),
        ),
    );

    let mut methods: Vec<(CcmMode, DbnPolicy)> = Vec::new();
    if cfg.mode.standard() {
        methods.push((CcmMode::Standard, DbnPolicy::None));
    }
    if cfg.mode.dbn() {
        let (model, lc) = ctx.model.clone().expect("band model fitted for dbn mode");
        methods.push((
            CcmMode::DbnInformed,
            if cfg.retrain_post {
                DbnPolicy::RetrainPost(lc)
            } else {
                DbnPolicy::Provided(model)
            },
        ));
    }

    let mut rows = Vec::new();
    for (mode, policy) in methods {
        let pre_model = match &policy {
            DbnPolicy::None => None,
            DbnPolicy::Provided(m) => Some(m.clone()),
            DbnPolicy::TrainPre(lc) | DbnPolicy::RetrainPost(lc) => {
                Some(learn_with(&pre_rec, lc).at("dbn")?.0)
            }
        };
        let (rho_pre, rho_post) = match windows {
            Some(w) => {
                let icfg = InterventionConfig {
                    crossmap: cm,
                    dbn: policy,
                };
                let r = segmented_intervention(rec, s, t, &icfg, Some(w)).at("intervention")?;
                (r.rho_pre, r.rho_post)
            }
            None => {
                let d = pre_model
                    .as_ref()
                    .map(|m| m.target_densities(rec, t))
                    .transpose()
                    .at("dbn")?;
                let rho = cross_map(&rec.channels()[s], &rec.channels()[t], &cm, d.as_deref(), None)
                    .at("ccm")?
                    .rho;
                (rho, rho)
            }
        };
        let densities = pre_model
            .as_ref()
            .map(|m| m.target_densities(&pre_rec, t))
            .transpose()
            .at("dbn")?;
        let shuffled = shuffled_rho(
            &pre_rec.channels()[s],
            &pre_rec.channels()[t],
            &cm,
            densities.as_deref(),
            &sc,
        )
        .at("metrics")?;
        rows.push(MetricRow {
            pair: pair.clone(),
            band: ctx.name.clone(),
            method: mode.as_str().to_string(),
            pc_norm: pc_norm(rho_pre, shuffled.mean).at("metrics")?,
            ci: 0.0,
            rho_pre,
            rho_post,
            rho_shuffled_mean: shuffled.mean,
            rho_shuffled_std: shuffled.std,
        });
    }

    let convergence = if cfg.mode.standard() {
        let n_rows = embedding.n_points(pre_rec.n_samples()).unwrap_or(0);
        let sizes: Vec<usize> = match &cfg.convergence_sizes {
            Some(s) => s.clone(),
            None => [8, 4, 2, 1].iter().map(|d| n_rows / d).collect(),
        };
        let sizes: Vec<usize> = sizes
            .into_iter()
            .filter(|&l| l > embedding.dimension + 1 && l <= n_rows)
            .collect();
        if sizes.is_empty() {
            None
        } else {
            let curve = convergence(
                &pre_rec.channels()[s],
                &pre_rec.channels()[t],
                &cm,
                None,
                &sizes,
                CONVERGENCE_DRAWS,
                derive_seed(
                    cfg.seed,
                    &PipelineConfig::surrogate_seed_label(&raw_pair, &ctx.name, "convergence"),
                ),
                LibrarySampling::Uniform,
            )
            .at("ccm")?;
            Some(ConvergenceRecord {
                pair: pair.clone(),
                band: ctx.name.clone(),
                library_sizes: curve.library_sizes,
                rhos: curve.rhos,
                rho_std: curve.rho_std,
            })
        }
    } else {
        None
    };

    Ok(TaskResult {
        task: task.id.clone(),
        band: ctx.name.clone(),
        source: labels[s].clone(),
        target: labels[t].clone(),
        embedding,
        windows,
        rows,
        convergence,
    })
}

fn read_task(path: &Path) -> Option<TaskResult> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Fill in CI within each (band, method) group, in task order.
pub fn merge(results: &[TaskResult]) -> PipelineReport {
    let mut rows: Vec<MetricRow> = results.iter().flat_map(|r| r.rows.clone()).collect();
    let groups: BTreeSet<(String, String)> = rows
        .iter()
        .map(|r| (r.band.clone(), r.method.clone()))
        .collect();
    for (band, method) in groups {
        let idx: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].band == band && rows[i].method == method)
            .collect();
        let pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (rows[i].rho_pre, rows[i].rho_post)).collect();
        for (&i, ci) in idx.iter().zip(causal_impact(&pairs)) {
            rows[i].ci = ci;
        }
    }
    PipelineReport {
        rows,
        convergence: results.iter().filter_map(|r| r.convergence.clone()).collect(),
    }
}

/// Run every (band, ordered pair) task, resuming from any task files already
/// in the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<RunSummary, StageError> {
    let rec = load_recording(cfg).at("ingest")?;
    if rec.n_channels() < 2 {
        return Err(StageError {
            stage: "config",
            error: Error::InvalidParameter("need at least two channels to form a pair".into()),
        });
    }
    let bands = cfg.bands.resolve(rec.sample_rate()).at("config")?;
    let task_dir = cfg.out_dir.join("tasks");
    fs::create_dir_all(&task_dir).at("output")?;

    let c = rec.n_channels();
    let tasks: Vec<Task> = bands
        .iter()
        .enumerate()
        .flat_map(|(bi, _)| {
            (0..c).flat_map(move |s| {
                (0..c).filter(move |&t| t != s).map(move |t| Task {
                    id: format!("b{bi:02}_s{s:03}_t{t:03}"),
                    band_index: bi,
                    source: s,
                    target: t,
                })
            })
        })
        .collect();
    let done: BTreeSet<String> = tasks
        .iter()
        .filter(|t| read_task(&task_dir.join(t.file_name())).is_some())
        .map(|t| t.id.clone())
        .collect();
    let resumed = done.len();
    let manifest = Mutex::new(Manifest {
        total_tasks: tasks.len(),
        completed: done.iter().cloned().collect(),
    });
    let manifest_path = cfg.out_dir.join("manifest.json");
    let pending: Vec<&Task> = tasks.iter().filter(|t| !done.contains(&t.id)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| StageError {
            stage: "config",
            error: Error::InvalidParameter(e.to_string()),
        })?;

    pool.install(|| -> std::result::Result<(), StageError> {
        let mut contexts: Vec<Option<BandContext>> = Vec::with_capacity(bands.len());
        for (bi, band) in bands.iter().enumerate() {
            if !pending.iter().any(|t| t.band_index == bi) {
                contexts.push(None);
                continue;
            }
            let brec = preprocess(&rec, band).at("preprocess")?;
            let model = if cfg.mode.dbn() {
                let fitted = fit_band_model(cfg, &brec).at("dbn")?;
                let path = cfg.out_dir.join(format!("dbn_b{bi:02}.json"));
                write_atomic(&path, &fitted.0.to_json().at("output")?).at("output")?;
                Some(fitted)
            } else {
                None
            };
            contexts.push(Some(BandContext {
                name: band_name(band),
                rec: brec,
                model,
            }));
        }
        pending.par_iter().try_for_each(|task| {
            let ctx = contexts[task.band_index].as_ref().expect("context for pending band");
            let result = run_task(cfg, task, ctx)?;
            let text = serde_json::to_string_pretty(&result).at("output")?;
            write_atomic(&task_dir.join(task.file_name()), &text).at("output")?;
            let mut m = manifest.lock().expect("manifest lock");
            m.completed.push(task.id.clone());
            m.completed.sort();
            let text = serde_json::to_string_pretty(&*m).at("output")?;
            write_atomic(&manifest_path, &text).at("output")
        })
    })?;
    {
        let m = manifest.lock().expect("manifest lock");
        let text = serde_json::to_string_pretty(&*m).at("output")?;
        write_atomic(&manifest_path, &text).at("output")?;
    }

    let results = tasks
        .iter()
        .map(|t| {
            read_task(&task_dir.join(t.file_name())).ok_or_else(|| StageError {
                stage: "merge",
                error: Error::MalformedReport(format!("task file {} unreadable", t.file_name())),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = merge(&results);
    let report_csv = cfg.out_dir.join("report.csv");
    let report_json = cfg.out_dir.join("report.json");
    write_atomic(&report_csv, &report.metrics().to_csv().at("merge")?).at("output")?;
    write_atomic(
        &report_json,
        &serde_json::to_string_pretty(&report).at("merge")?,
    )
    .at("output")?;
    let plots = plot::write_plots(&report, &cfg.out_dir).at("plot")?;

    let pairs: BTreeSet<&str> = report.rows.iter().map(|r| r.pair.as_str()).collect();
    Ok(RunSummary {
        out_dir: cfg.out_dir.clone(),
        n_tasks: tasks.len(),
        n_pairs: pairs.len(),
        n_bands: bands.len(),
        resumed,
        report_csv,
        report_json,
        plots,
    })
}

/// Read a merged report from `.json` or `.csv`.
pub fn read_report(path: &Path) -> Result<PipelineReport> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(PipelineReport {
            rows: MetricsReport::from_csv(&text)?.rows,
            convergence: Vec::new(),
        })
    } else {
        serde_json::from_str(&text).map_err(|e| Error::MalformedReport(e.to_string()))
    }
}
