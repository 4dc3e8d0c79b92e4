//! ccmtool: convergent cross mapping with DBN-informed neighbor weights.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dbn_ccm::crossmap::{cross_map, CrossMapConfig, DirectionConvention, KernelConfig};
use dbn_ccm::dbn::{learn_with, DbnModel, EdgePriorMatrix, LearnConfig};
use dbn_ccm::embedding::{embed, select_dimension, select_tau, EmbeddingParams};
use dbn_ccm::intervention::{
    segmented_intervention, simulated_intervention, DbnPolicy, InterventionConfig, Windows,
};
use dbn_ccm::metrics::{pc_norm, shuffled_rho, SurrogateConfig, SurrogateMethod};
use dbn_ccm::pipeline::{
    self, plot, InputSource, PipelineConfig, StageError, CONFIG_HELP,
};
use dbn_ccm::series::{read_csv, write_csv, Recording};
use dbn_ccm::synthetic::{generate, preset, DoIntervention, DoMode, SyntheticSpec};
use dbn_ccm::Error;

#[derive(Parser)]
#[command(name = "ccmtool", version)]
#[command(about = "Causal analysis of multichannel time series by convergent cross mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a CSV recording and print a summary
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Re-write the validated recording here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic recording (CSV) or its spec (JSON)
    Synth {
        /// unidirectional, bidirectional, independent, switch-off, sparse-var
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// JSON spec file
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_samples: Option<usize>,
        /// Print the spec instead of the generated data
        #[arg(long)]
        emit_spec: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delay-embed one channel
    Embed {
        #[command(flatten)]
        data: DataArgs,
        /// Channel label or zero-based index
        #[arg(long)]
        channel: String,
        #[command(flatten)]
        embedding: EmbedArgs,
        /// Write the manifold rows as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the lagged linear-Gaussian network
    LearnDbn {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        dbn: DbnArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-map one directed pair
    Ccm {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pair: PairArgs,
        #[command(flatten)]
        crossmap: CrossMapArgs,
        #[command(flatten)]
        dbn: DbnArgs,
        /// Include the per-row predictions
        #[arg(long)]
        predictions: bool,
    },
    /// Pre/post cross-map skill around an event or a simulated do-operation
    Intervene {
        /// CSV recording (segmented scheme)
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        sample_rate: f64,
        #[arg(long)]
        event_onset: Option<f64>,
        /// Simulate this preset instead (simulated scheme)
        #[arg(long, conflicts_with = "input")]
        preset: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        pair: PairArgs,
        /// Channel the do-operation acts on
        #[arg(long)]
        do_channel: Option<String>,
        #[arg(long, value_enum, default_value_t = DoModeArg::Clamp)]
        do_mode: DoModeArg,
        #[arg(long, default_value_t = 0.0)]
        do_value: f64,
        #[arg(long, default_value_t = 0.5)]
        onset_fraction: f64,
        /// Pre window in samples, start-end
        #[arg(long, requires = "post_window")]
        pre_window: Option<String>,
        /// Post window in samples, start-end
        #[arg(long, requires = "pre_window")]
        post_window: Option<String>,
        /// Fit a separate network on the post window
        #[arg(long)]
        retrain_post: bool,
        #[command(flatten)]
        crossmap: CrossMapArgs,
        #[command(flatten)]
        dbn: DbnArgs,
    },
    /// Predictive consistency of one directed pair against shuffled surrogates
    Metrics {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pair: PairArgs,
        #[command(flatten)]
        crossmap: CrossMapArgs,
        #[command(flatten)]
        dbn: DbnArgs,
        #[arg(long, default_value_t = 100)]
        surrogates: usize,
        #[arg(long, value_enum, default_value_t = SurrogateArg::CircularShift)]
        surrogate_method: SurrogateArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full analysis over every ordered pair and band
    #[command(after_long_help = CONFIG_HELP)]
    Run(Box<RunArgs>),
    /// Render SVG charts from a merged report (.json or .csv)
    Plot {
        report: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV file: header row of channel labels, one row per sample
    input: PathBuf,
    /// Sampling rate in Hz
    #[arg(long, default_value_t = 1.0)]
    sample_rate: f64,
    /// Event time in seconds
    #[arg(long)]
    event_onset: Option<f64>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long, default_value_t = 3)]
    embed_dim: usize,
    #[arg(long, default_value_t = 1)]
    embed_tau: usize,
    /// Pick tau by mutual information and E by false nearest neighbors
    #[arg(long)]
    auto_embed: bool,
}

#[derive(Args)]
struct PairArgs {
    /// Channel whose manifold makes the predictions (label or index)
    #[arg(long)]
    source: String,
    /// Channel being predicted (label or index)
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct CrossMapArgs {
    #[command(flatten)]
    embedding: EmbedArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Standard)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ConventionArg::Paper)]
    convention: ConventionArg,
    /// Theiler window in samples (default (E-1)*tau)
    #[arg(long)]
    exclusion_radius: Option<usize>,
    #[arg(long)]
    allow_self_neighbor: bool,
    #[arg(long, value_enum, default_value_t = BandwidthArg::Mean)]
    bandwidth: BandwidthArg,
    /// Kernel width for --bandwidth fixed
    #[arg(long)]
    sigma: Option<f64>,
    /// Fitted network (JSON) to use in dbn mode instead of fitting one
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct DbnArgs {
    #[arg(long, default_value_t = 2)]
    max_lag: usize,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// Edge prior strengths, JSON matrix indexed [to][from]
    #[arg(long)]
    priors: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (see below)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Read a JSON synthetic spec or a CSV recording from stdin
    #[arg(long, conflicts_with_all = ["input", "spec"])]
    stdin_spec: bool,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    sample_rate: Option<f64>,
    #[arg(long)]
    event_onset: Option<f64>,
    /// auto | default | broadband | name:lo-hi,...
    #[arg(long)]
    bands: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    embed_tau: Option<usize>,
    #[arg(long)]
    auto_embed: bool,
    #[arg(long, value_enum)]
    bandwidth: Option<BandwidthArg>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<RunModeArg>,
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    #[arg(long)]
    exclusion_radius: Option<usize>,
    #[arg(long)]
    allow_self_neighbor: bool,
    /// Comma-separated library sizes for convergence curves
    #[arg(long)]
    convergence_sizes: Option<String>,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Seed DBN edge priors from a standard cross-map pass
    #[arg(long)]
    ccm_priors: bool,
    #[arg(long)]
    retrain_post: bool,
    #[arg(long, value_enum)]
    surrogate_method: Option<SurrogateArg>,
    #[arg(long)]
    surrogates: Option<usize>,
    #[arg(long)]
    pre_window: Option<String>,
    #[arg(long)]
    post_window: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    Dbn,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunModeArg {
    Standard,
    Dbn,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Paper,
    Sugihara,
}

#[derive(Clone, Copy, ValueEnum)]
enum BandwidthArg {
    Mean,
    Nearest,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurrogateArg {
    CircularShift,
    Permutation,
}

#[derive(Clone, Copy, ValueEnum)]
enum DoModeArg {
    Clamp,
    Shift,
}

impl From<ConventionArg> for DirectionConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => DirectionConvention::Paper,
            ConventionArg::Sugihara => DirectionConvention::Sugihara,
        }
    }
}

impl From<SurrogateArg> for SurrogateMethod {
    fn from(s: SurrogateArg) -> Self {
        match s {
            SurrogateArg::CircularShift => SurrogateMethod::CircularShift,
            SurrogateArg::Permutation => SurrogateMethod::FullPermutation,
        }
    }
}

type CmdResult = Result<(), StageError>;

fn at(stage: &'static str) -> impl FnOnce(Error) -> StageError {
    move |error| StageError { stage, error }
}

fn usage(msg: impl Into<String>) -> StageError {
    StageError {
        stage: "config",
        error: Error::InvalidParameter(msg.into()),
    }
}

fn emit(text: &str, out: Option<&Path>) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| at("output")(e.into())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| at("output")(e.into()))
        }
    }
}

fn emit_json(value: &serde_json::Value) -> CmdResult {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("json value")), None)
}

fn load(data: &DataArgs) -> Result<Recording, StageError> {
    let file = fs::File::open(&data.input).map_err(|e| at("ingest")(e.into()))?;
    let rec = read_csv(file, data.sample_rate).map_err(at("ingest"))?;
    match data.event_onset {
        Some(t) => rec.with_event_onset(Some(t)).map_err(at("ingest")),
        None => Ok(rec),
    }
}

fn channel(rec: &Recording, name: &str) -> Result<usize, StageError> {
    rec.channel_index(name)
        .or_else(|| name.parse::<usize>().ok().filter(|&i| i < rec.n_channels()))
        .ok_or_else(|| usage(format!("no channel '{name}' (have {:?})", rec.labels())))
}

fn embedding_params(args: &EmbedArgs, rec: &Recording, ch: usize) -> Result<EmbeddingParams, StageError> {
    let series = &rec.channels()[ch];
    if args.auto_embed {
        let tau = select_tau(series, (series.len() / 4).clamp(1, 50)).map_err(at("embedding"))?;
        let dim = select_dimension(series, tau, 10).map_err(at("embedding"))?;
        EmbeddingParams::new(dim, tau).map_err(at("embedding"))
    } else {
        EmbeddingParams::new(args.embed_dim, args.embed_tau).map_err(|e| StageError {
            stage: "config",
            error: e,
        })
    }
}

fn crossmap_config(args: &CrossMapArgs, embedding: EmbeddingParams) -> Result<CrossMapConfig, StageError> {
    let kernel = match args.bandwidth {
        BandwidthArg::Mean => KernelConfig::per_query_mean(),
        BandwidthArg::Nearest => KernelConfig::per_query_nearest(),
        BandwidthArg::Fixed => KernelConfig::global_fixed(
            args.sigma
                .ok_or_else(|| usage("--bandwidth fixed needs --sigma"))?,
        )
        .map_err(|e| StageError {
            stage: "config",
            error: e,
        })?,
    };
    Ok(CrossMapConfig {
        embedding,
        kernel,
        exclusion_radius: args.exclusion_radius,
        allow_self_neighbor: args.allow_self_neighbor,
    })
}

fn learn_config(args: &DbnArgs) -> Result<LearnConfig, StageError> {
    let mut lc = LearnConfig::new(args.max_lag, args.lambda);
    if let Some(path) = &args.priors {
        let text = fs::read_to_string(path).map_err(|e| at("ingest")(e.into()))?;
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(&text).map_err(|e| at("ingest")(e.into()))?;
        lc = lc.with_priors(EdgePriorMatrix::new(rows).map_err(at("dbn"))?);
    }
    Ok(lc)
}

fn check_model_mode(cm: &CrossMapArgs) -> Result<(), StageError> {
    match (&cm.model, cm.mode) {
        (Some(_), ModeArg::Standard) => Err(usage("--model only applies with --mode dbn")),
        _ => Ok(()),
    }
}

/// The network used in dbn mode: loaded from `--model`, else fitted on `rec`.
fn dbn_model(cm: &CrossMapArgs, dbn: &DbnArgs, rec: &Recording) -> Result<Option<DbnModel>, StageError> {
    check_model_mode(cm)?;
    if !matches!(cm.mode, ModeArg::Dbn) {
        return Ok(None);
    }
    if let Some(path) = &cm.model {
        let text = fs::read_to_string(path).map_err(|e| at("ingest")(e.into()))?;
        return DbnModel::from_json(&text).map(Some).map_err(at("ingest"));
    }
    let lc = learn_config(dbn)?;
    Ok(Some(learn_with(rec, &lc).map_err(at("dbn"))?.0))
}

fn direction_json(conv: ConventionArg, source: &str, target: &str) -> serde_json::Value {
    let (a, b) = DirectionConvention::from(conv).label(source, target);
    json!({ "source": source, "target": target, "label": format!("{a}->{b}") })
}

fn parse_window(s: &str) -> Result<(usize, usize), StageError> {
    let bad = || usage(format!("window '{s}' is not start-end"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn cmd_ingest(data: &DataArgs, out: Option<&Path>) -> CmdResult {
    let rec = load(data)?;
    if let Some(path) = out {
        let file = fs::File::create(path).map_err(|e| at("output")(e.into()))?;
        write_csv(&rec, file).map_err(at("output"))?;
    }
    emit_json(&json!({
        "channels": rec.labels(),
        "n_samples": rec.n_samples(),
        "sample_rate": rec.sample_rate(),
        "duration": rec.duration(),
        "event_onset": rec.event_onset(),
    }))
}

fn cmd_synth(
    preset_name: Option<&str>,
    spec_path: Option<&Path>,
    seed: u64,
    n_samples: Option<usize>,
    emit_spec: bool,
    out: Option<&Path>,
) -> CmdResult {
    let mut spec = match (preset_name, spec_path) {
        (Some(name), _) => preset(name, seed).map_err(|e| StageError {
            stage: "config",
            error: e,
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| at("ingest")(e.into()))?;
            serde_json::from_str::<SyntheticSpec>(&text).map_err(|e| at("ingest")(e.into()))?
        }
        (None, None) => return Err(usage("synth needs --preset or --spec")),
    };
    if let Some(n) = n_samples {
        spec.n_samples = n;
    }
    if emit_spec {
        let text = serde_json::to_string_pretty(&spec).map_err(|e| at("output")(e.into()))?;
        return emit(&format!("{text}\n"), out);
    }
    let rec = generate(&spec).map_err(at("synthetic"))?;
    let mut buf = Vec::new();
    write_csv(&rec, &mut buf).map_err(at("output"))?;
    emit(&String::from_utf8(buf).expect("csv is utf-8"), out)
}

fn cmd_embed(data: &DataArgs, name: &str, args: &EmbedArgs, out: Option<&Path>) -> CmdResult {
    let rec = load(data)?;
    let ch = channel(&rec, name)?;
    let params = embedding_params(args, &rec, ch)?;
    let m = embed(&rec.channels()[ch], params).map_err(at("embedding"))?;
    if let Some(path) = out {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| at("output")(e.into()))?;
        let header: Vec<String> = (0..params.dimension).map(|j| format!("lag{}", j * params.tau)).collect();
        wtr.write_record(std::iter::once("time_index".to_string()).chain(header))
            .map_err(|e| at("output")(e.into()))?;
        for k in 0..m.len() {
            let row = std::iter::once(m.time_index(k).to_string()).chain(m.row(k).iter().map(f64::to_string));
            wtr.write_record(row).map_err(|e| at("output")(e.into()))?;
        }
        wtr.flush().map_err(|e| at("output")(e.into()))?;
    }
    emit_json(&json!({
        "channel": rec.labels()[ch],
        "E": params.dimension,
        "tau": params.tau,
        "n_points": m.len(),
        "source_index_offset": m.source_index_offset(),
    }))
}

fn cmd_learn(data: &DataArgs, args: &DbnArgs, out: Option<&Path>) -> CmdResult {
    let rec = load(data)?;
    let lc = learn_config(args)?;
    let (model, fits) = learn_with(&rec, &lc).map_err(at("dbn"))?;
    if fits.iter().any(|f| !f.converged) {
        eprintln!("warning: solver hit the iteration cap on at least one channel");
    }
    let text = model.to_json().map_err(at("output"))?;
    emit(&format!("{text}\n"), out)
}

fn cmd_ccm(data: &DataArgs, pair: &PairArgs, cm: &CrossMapArgs, dbn: &DbnArgs, predictions: bool) -> CmdResult {
    let rec = load(data)?;
    let (s, t) = (channel(&rec, &pair.source)?, channel(&rec, &pair.target)?);
    let cfg = crossmap_config(cm, embedding_params(&cm.embedding, &rec, s)?)?;
    let model = dbn_model(cm, dbn, &rec)?;
    let densities = model
        .as_ref()
        .map(|m| m.target_densities(&rec, t))
        .transpose()
        .map_err(at("dbn"))?;
    let r = cross_map(&rec.channels()[s], &rec.channels()[t], &cfg, densities.as_deref(), None)
        .map_err(at("ccm"))?;
    let labels = rec.labels();
    let mut value = json!({
        "direction": direction_json(cm.convention, &labels[s], &labels[t]),
        "mode": r.mode.as_str(),
        "rho": r.rho,
        "degenerate": r.degenerate,
        "library_size": r.library_size,
        "E": cfg.embedding.dimension,
        "tau": cfg.embedding.tau,
    });
    if predictions {
        value["offset"] = json!(r.offset);
        value["predictions"] = json!(r.predictions);
    }
    emit_json(&value)
}

#[allow(clippy::too_many_arguments)]
fn cmd_intervene(
    input: Option<&Path>,
    sample_rate: f64,
    event_onset: Option<f64>,
    preset_name: Option<&str>,
    seed: u64,
    pair: &PairArgs,
    do_channel: Option<&str>,
    do_mode: DoModeArg,
    do_value: f64,
    onset_fraction: f64,
    windows: Option<(&str, &str)>,
    retrain_post: bool,
    cm: &CrossMapArgs,
    dbn: &DbnArgs,
) -> CmdResult {
    let (rec, spec) = match (input, preset_name) {
        (Some(path), None) => (
            load(&DataArgs {
                input: path.to_path_buf(),
                sample_rate,
                event_onset,
            })?,
            None,
        ),
        (None, Some(name)) => {
            let spec = preset(name, seed).map_err(|e| StageError {
                stage: "config",
                error: e,
            })?;
            (generate(&spec).map_err(at("synthetic"))?, Some(spec))
        }
        _ => return Err(usage("intervene needs an input CSV or --preset")),
    };
    let (s, t) = (channel(&rec, &pair.source)?, channel(&rec, &pair.target)?);
    let cfg = crossmap_config(cm, embedding_params(&cm.embedding, &rec, s)?)?;
    check_model_mode(cm)?;
    let policy = match cm.mode {
        ModeArg::Standard => DbnPolicy::None,
        ModeArg::Dbn => match &cm.model {
            Some(_) => DbnPolicy::Provided(dbn_model(cm, dbn, &rec)?.expect("dbn mode")),
            None if retrain_post => DbnPolicy::RetrainPost(learn_config(dbn)?),
            None => DbnPolicy::TrainPre(learn_config(dbn)?),
        },
    };
    let icfg = InterventionConfig {
        crossmap: cfg,
        dbn: policy,
    };
    let result = match (spec, do_channel) {
        (Some(spec), Some(name)) => {
            let action = DoIntervention {
                channel: channel(&rec, name)?,
                mode: match do_mode {
                    DoModeArg::Clamp => DoMode::Clamp,
                    DoModeArg::Shift => DoMode::Shift,
                },
                value: do_value,
                onset_sample: 0,
            };
            simulated_intervention(&spec, action, onset_fraction, s, t, &icfg)
                .map_err(at("intervention"))?
        }
        _ => {
            let w = match windows {
                Some((pre, post)) => Some(Windows {
                    pre: parse_window(pre)?,
                    post: parse_window(post)?,
                }),
                None => None,
            };
            segmented_intervention(&rec, s, t, &icfg, w).map_err(at("intervention"))?
        }
    };
    let labels = rec.labels();
    let mut value = serde_json::to_value(&result).map_err(|e| at("output")(e.into()))?;
    value["direction"] = direction_json(cm.convention, &labels[s], &labels[t]);
    emit_json(&value)
}

fn cmd_metrics(
    data: &DataArgs,
    pair: &PairArgs,
    cm: &CrossMapArgs,
    dbn: &DbnArgs,
    sc: SurrogateConfig,
) -> CmdResult {
    let rec = load(data)?;
    let (s, t) = (channel(&rec, &pair.source)?, channel(&rec, &pair.target)?);
    let cfg = crossmap_config(cm, embedding_params(&cm.embedding, &rec, s)?)?;
    let model = dbn_model(cm, dbn, &rec)?;
    let densities = model
        .as_ref()
        .map(|m| m.target_densities(&rec, t))
        .transpose()
        .map_err(at("dbn"))?;
    let (src, tgt) = (&rec.channels()[s], &rec.channels()[t]);
    let rho = cross_map(src, tgt, &cfg, densities.as_deref(), None)
        .map_err(at("ccm"))?
        .rho;
    let shuffled = shuffled_rho(src, tgt, &cfg, densities.as_deref(), &sc).map_err(at("metrics"))?;
    let pc = pc_norm(rho, shuffled.mean).map_err(at("metrics"))?;
    let labels = rec.labels();
    emit_json(&json!({
        "direction": direction_json(cm.convention, &labels[s], &labels[t]),
        "rho": rho,
        "rho_shuffled_mean": shuffled.mean,
        "rho_shuffled_std": shuffled.std,
        "pc_norm": pc,
        "n_surrogates": sc.n_surrogates,
    }))
}

fn run_config(args: &RunArgs) -> Result<PipelineConfig, StageError> {
    let cfg_err = |e: Error| StageError {
        stage: "config",
        error: e,
    };
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| cfg_err(e.into()))?;
        cfg.apply_text(&text).map_err(cfg_err)?;
    }
    let flag = |v: bool| v.then(|| "true".to_string());
    let overrides: Vec<(&str, Option<String>)> = vec![
        ("input.sample_rate", args.sample_rate.map(|v| v.to_string())),
        ("input.event_onset", args.event_onset.map(|v| v.to_string())),
        ("bands.bands", args.bands.clone()),
        ("embedding.dim", args.embed_dim.map(|v| v.to_string())),
        ("embedding.tau", args.embed_tau.map(|v| v.to_string())),
        ("embedding.auto", flag(args.auto_embed)),
        (
            "kernel.bandwidth",
            args.bandwidth.map(|b| {
                match b {
                    BandwidthArg::Mean => "mean",
                    BandwidthArg::Nearest => "nearest",
                    BandwidthArg::Fixed => "fixed",
                }
                .to_string()
            }),
        ),
        ("kernel.sigma", args.sigma.map(|v| v.to_string())),
        (
            "crossmap.mode",
            args.mode.map(|m| {
                match m {
                    RunModeArg::Standard => "standard",
                    RunModeArg::Dbn => "dbn",
                    RunModeArg::Both => "both",
                }
                .to_string()
            }),
        ),
        (
            "crossmap.convention",
            args.convention.map(|c| {
                match c {
                    ConventionArg::Paper => "paper",
                    ConventionArg::Sugihara => "sugihara",
                }
                .to_string()
            }),
        ),
        ("crossmap.exclusion_radius", args.exclusion_radius.map(|v| v.to_string())),
        ("crossmap.allow_self_neighbor", flag(args.allow_self_neighbor)),
        ("crossmap.convergence_sizes", args.convergence_sizes.clone()),
        ("dbn.max_lag", args.max_lag.map(|v| v.to_string())),
        ("dbn.lambda", args.lambda.map(|v| v.to_string())),
        ("dbn.use_ccm_priors", flag(args.ccm_priors)),
        ("dbn.retrain_post", flag(args.retrain_post)),
        (
            "surrogates.method",
            args.surrogate_method.map(|m| {
                match m {
                    SurrogateArg::CircularShift => "circular_shift",
                    SurrogateArg::Permutation => "permutation",
                }
                .to_string()
            }),
        ),
        ("surrogates.count", args.surrogates.map(|v| v.to_string())),
        ("intervention.pre", args.pre_window.clone()),
        ("intervention.post", args.post_window.clone()),
        ("output.dir", args.out.as_ref().map(|p| p.display().to_string())),
        ("run.seed", args.seed.map(|v| v.to_string())),
        ("run.workers", args.workers.map(|v| v.to_string())),
        ("input.path", args.input.as_ref().map(|p| p.display().to_string())),
        ("input.synthetic", args.spec.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v).map_err(|e| match e {
                Error::Io(_) => StageError {
                    stage: "ingest",
                    error: e,
                },
                e => cfg_err(e),
            })?;
        }
    }
    if args.stdin_spec {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| at("ingest")(e.into()))?;
        cfg.input = Some(if text.trim_start().starts_with('{') {
            let spec: SyntheticSpec =
                serde_json::from_str(&text).map_err(|e| at("ingest")(e.into()))?;
            InputSource::Synthetic(Box::new(spec))
        } else {
            let rec = read_csv(text.as_bytes(), cfg.sample_rate).map_err(at("ingest"))?;
            InputSource::Recording(Box::new(rec))
        });
    }
    if cfg.input.is_none() {
        return Err(usage("run needs --input, --spec, --stdin-spec or [input] in --config"));
    }
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let cfg = run_config(args)?;
    let summary = pipeline::run_pipeline(&cfg)?;
    emit_json(&serde_json::to_value(&summary).expect("summary serializes"))
}

fn cmd_plot(report: &Path, out: &Path) -> CmdResult {
    let r = pipeline::read_report(report).map_err(|e| match e {
        Error::Io(_) => at("ingest")(e),
        e => at("plot")(e),
    })?;
    let paths = plot::write_plots(&r, out).map_err(at("output"))?;
    emit_json(&json!({ "plots": paths }))
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Ingest { data, out } => cmd_ingest(&data, out.as_deref()),
        Command::Synth {
            preset,
            spec,
            seed,
            n_samples,
            emit_spec,
            out,
        } => cmd_synth(
            preset.as_deref(),
            spec.as_deref(),
            seed,
            n_samples,
            emit_spec,
            out.as_deref(),
        ),
        Command::Embed {
            data,
            channel,
            embedding,
            out,
        } => cmd_embed(&data, &channel, &embedding, out.as_deref()),
        Command::LearnDbn { data, dbn, out } => cmd_learn(&data, &dbn, out.as_deref()),
        Command::Ccm {
            data,
            pair,
            crossmap,
            dbn,
            predictions,
        } => cmd_ccm(&data, &pair, &crossmap, &dbn, predictions),
        Command::Intervene {
            input,
            sample_rate,
            event_onset,
            preset,
            seed,
            pair,
            do_channel,
            do_mode,
            do_value,
            onset_fraction,
            pre_window,
            post_window,
            retrain_post,
            crossmap,
            dbn,
        } => cmd_intervene(
            input.as_deref(),
            sample_rate,
            event_onset,
            preset.as_deref(),
            seed,
            &pair,
            do_channel.as_deref(),
            do_mode,
            do_value,
            onset_fraction,
            pre_window.as_deref().zip(post_window.as_deref()),
            retrain_post,
            &crossmap,
            &dbn,
        ),
        Command::Metrics {
            data,
            pair,
            crossmap,
            dbn,
            surrogates,
            surrogate_method,
            seed,
        } => cmd_metrics(
            &data,
            &pair,
            &crossmap,
            &dbn,
            SurrogateConfig::new(surrogate_method.into(), surrogates, seed),
        ),
        Command::Run(args) => cmd_run(&args),
        Command::Plot { report, out } => cmd_plot(&report, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
