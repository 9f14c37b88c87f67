//! `anyclass` command line: data tooling, training, evaluation, the lambda
//! ablation and likelihood-surface export, each run leaving a manifest that
//! reproduces it.

pub mod commands;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyclass::data::DatasetFormat;
use anyclass::losses::{LossFamily, SurfaceCase};
use anyclass::trainer::{Activation, ClassBalanceSpec, TrainConfig, ValidationMetric};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use commands::*;
use error::{CliError, Result};
use manifest::{RunManifest, RunStatus, MANIFEST_FORMAT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "anyclass", version, about = "Any-class presence losses: data tools, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON configuration, or a manifest whose `config` is reused; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a synthetic multi-label dataset with features.
    GenData(GenDataArgs),
    /// Split a dataset into train/val/test.
    Split(SplitArgs),
    /// Remove classes from a dataset.
    Filter(FilterArgs),
    /// Pairwise label co-occurrence counts.
    Cooc(CoocArgs),
    /// Train an MLP.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Sweep lambda over several seeds against the alpha = 0 baseline.
    Ablate(AblateArgs),
    /// Export a two-class likelihood surface.
    Surface(SurfaceArgs),
    /// Re-execute the run described by a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub negative_fraction: Option<f64>,
    #[arg(long)]
    pub cardinality_mean: Option<f64>,
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<DatasetFormat>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, num_args = 3, value_names = ["TRAIN", "VAL", "TEST"])]
    pub fractions: Option<Vec<f64>>,
    /// Column with group keys (e.g. patient); groups never cross splits.
    #[arg(long)]
    pub group_key: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Classes to drop.
    #[arg(long, value_delimiter = ',')]
    pub remove: Option<Vec<String>>,
    /// Classes to retain; all others are dropped.
    #[arg(long, value_delimiter = ',')]
    pub keep: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub preset: Option<FilterPreset>,
}

#[derive(Debug, Args)]
pub struct CoocArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV `class,category` to merge classes into categories.
    #[arg(long)]
    pub grouping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Hidden layer widths, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "linear")]
    pub hidden: Option<Vec<usize>>,
    /// No hidden layer.
    #[arg(long)]
    pub linear: bool,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, value_parser = parse_family)]
    pub loss: Option<LossFamily>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Enable class balancing with this beta.
    #[arg(long, conflicts_with = "no_cb")]
    pub cb_beta: Option<f64>,
    /// Leave the negative category out of class balancing.
    #[arg(long)]
    pub cb_no_negative: bool,
    /// Disable class balancing.
    #[arg(long)]
    pub no_cb: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Step schedule `epoch:factor,...`, or `none`.
    #[arg(long, value_parser = parse_decay)]
    pub lr_decay: Option<Decay>,
    #[arg(long, value_parser = parse_metric)]
    pub val_metric: Option<ValidationMetric>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// CSV `class,weight` adding F2-CIW to the report.
    #[arg(long)]
    pub ciw_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Lambda values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Runs per grid value; seeds are `seed, seed + 1, ...`.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_case)]
    pub case: Option<SurfaceCase>,
    /// Two 0/1 targets, e.g. `1,0`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub targets: Option<Vec<u8>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct Decay(pub Vec<(usize, f64)>);

fn parse_decay(s: &str) -> std::result::Result<Decay, String> {
    if s.is_empty() || s == "none" {
        return Ok(Decay(Vec::new()));
    }
    s.split(',')
        .map(|part| {
            let (e, f) = part.split_once(':').ok_or_else(|| format!("'{part}' is not epoch:factor"))?;
            let e = e.trim().parse().map_err(|_| format!("bad epoch '{e}'"))?;
            let f = f.trim().parse().map_err(|_| format!("bad factor '{f}'"))?;
            Ok((e, f))
        })
        .collect::<std::result::Result<Vec<_>, String>>()
        .map(Decay)
}

fn parse_family(s: &str) -> std::result::Result<LossFamily, String> {
    s.parse().map_err(|e: anyclass::Error| e.to_string())
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    s.parse().map_err(|e: anyclass::Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<ValidationMetric, String> {
    s.parse().map_err(|e: anyclass::Error| e.to_string())
}

fn parse_case(s: &str) -> std::result::Result<SurfaceCase, String> {
    s.parse().map_err(|e: anyclass::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<DatasetFormat, String> {
    match s {
        "csv" => Ok(DatasetFormat::Csv),
        "jsonl" => Ok(DatasetFormat::Jsonl),
        other => Err(format!("unknown format '{other}' (csv or jsonl)")),
    }
}

/// Start from defaults, or from a JSON config file (a bare config or a
/// manifest of the same command).
fn base_config<C: Command + Default>(path: Option<&Path>) -> Result<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    if let (Some(cmd), Some(_)) = (value.get("command"), value.get("config")) {
        if cmd.as_str() != Some(C::NAME) {
            return Err(CliError::Config(format!(
                "{} is a manifest for '{}', not '{}'",
                path.display(),
                cmd.as_str().unwrap_or("?"),
                C::NAME
            )));
        }
        value = value["config"].take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Absolute form of an input path so a manifest works from any directory.
fn absolute(p: PathBuf) -> PathBuf {
    std::fs::canonicalize(&p).unwrap_or(p)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_model(m: &ModelArgs, hidden: &mut Vec<usize>, activation: &mut Activation) {
    if m.linear {
        hidden.clear();
    }
    set(hidden, m.hidden.clone());
    set(activation, m.activation);
}

fn apply_training(t: &TrainingArgs, cfg: &mut TrainConfig) {
    set(&mut cfg.loss.family, t.loss);
    set(&mut cfg.loss.alpha, t.alpha);
    set(&mut cfg.loss.lambda, t.lambda);
    set(&mut cfg.loss.gamma, t.gamma);
    if let Some(beta) = t.cb_beta {
        cfg.class_balance = Some(ClassBalanceSpec { beta, include_negative: true });
    }
    if t.cb_no_negative {
        if let Some(cb) = cfg.class_balance.as_mut() {
            cb.include_negative = false;
        }
    }
    if t.no_cb {
        cfg.class_balance = None;
    }
    set(&mut cfg.epochs, t.epochs);
    set(&mut cfg.batch_size, t.batch_size);
    set(&mut cfg.learning_rate, t.lr);
    set(&mut cfg.momentum, t.momentum);
    set(&mut cfg.weight_decay, t.weight_decay);
    set(&mut cfg.lr_decay, t.lr_decay.clone().map(|d| d.0));
    set(&mut cfg.validation_metric, t.val_metric);
    set(&mut cfg.seed, t.seed);
}

/// Result of a completed command.
#[derive(Debug)]
pub struct Completed {
    pub manifest: RunManifest,
    pub summary: Vec<String>,
}

/// Validate, record the manifest as incomplete, run inside a pool of
/// `threads` workers and finalize the manifest.
pub fn execute<C: Command>(cfg: &C, out: &Path, threads: usize) -> Result<Completed> {
    if threads == 0 {
        return Err(CliError::Config("--threads must be >= 1".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let (seed, sub_seeds) = cfg.seeds();
    let mut manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        command: C::NAME.into(),
        status: RunStatus::Incomplete,
        config: serde_json::to_value(cfg)?,
        seed,
        sub_seeds,
        threads,
        inputs: input_digests(&cfg.inputs())?,
        outputs: Vec::new(),
        started_at: manifest::now(),
        finished_at: None,
        error: None,
    };
    manifest.write(out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut summary = Vec::new();
    let result = pool.install(|| cfg.run(out, &mut |line| summary.push(line)));
    manifest.finished_at = Some(manifest::now());
    match result {
        Ok(files) => {
            manifest.outputs =
                files.iter().map(|f| manifest::digest(&out.join(f), f.clone())).collect::<Result<_>>()?;
            manifest.status = RunStatus::Complete;
            manifest.write(out)?;
            Ok(Completed { manifest, summary })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(format!("error[{}]: {e}", e.code()));
            // the original error matters more than a failure to record it
            let _ = manifest.write(out);
            Err(e)
        }
    }
}

/// Re-run a manifest's command and configuration into `out`, refusing if an
/// input file has changed since.
pub fn rerun(manifest_path: &Path, out: &Path, threads: usize) -> Result<Completed> {
    let m = RunManifest::load(manifest_path)?;
    if m.format_version != MANIFEST_FORMAT_VERSION {
        return Err(CliError::Config(format!("manifest format version {} is not supported", m.format_version)));
    }
    for input in &m.inputs {
        let actual = manifest::sha256_file(Path::new(&input.path))?;
        if actual != input.sha256 {
            return Err(CliError::InputChanged {
                path: input.path.clone().into(),
                expected: input.sha256.clone(),
                actual,
            });
        }
    }
    fn go<C: Command>(config: serde_json::Value, out: &Path, threads: usize) -> Result<Completed> {
        let cfg: C = serde_json::from_value(config)?;
        execute(&cfg, out, threads)
    }
    let config = m.config.clone();
    match m.command.as_str() {
        GenDataConfig::NAME => go::<GenDataConfig>(config, out, threads),
        SplitConfig::NAME => go::<SplitConfig>(config, out, threads),
        FilterConfig::NAME => go::<FilterConfig>(config, out, threads),
        CoocConfig::NAME => go::<CoocConfig>(config, out, threads),
        TrainCommandConfig::NAME => go::<TrainCommandConfig>(config, out, threads),
        EvalConfig::NAME => go::<EvalConfig>(config, out, threads),
        AblateConfig::NAME => go::<AblateConfig>(config, out, threads),
        SurfaceConfig::NAME => go::<SurfaceConfig>(config, out, threads),
        other => Err(CliError::Config(format!("manifest names unknown command '{other}'"))),
    }
}

fn resolve_and_run<C, F>(common: &Common, apply: F) -> Result<Completed>
where
    C: Command + Default + DeserializeOwned,
    F: FnOnce(&mut C),
{
    let mut cfg: C = base_config(common.config.as_deref())?;
    apply(&mut cfg);
    execute(&cfg, &common.out, common.threads)
}

pub fn run(cli: Cli) -> Result<Completed> {
    match cli.command {
        Cmd::GenData(a) => resolve_and_run(&a.common, |c: &mut GenDataConfig| {
            let s = &mut c.synthetic;
            set(&mut s.n_instances, a.instances);
            set(&mut s.n_classes, a.classes);
            set(&mut s.n_features, a.features);
            set(&mut s.negative_fraction, a.negative_fraction);
            set(&mut s.label_cardinality_mean, a.cardinality_mean);
            set(&mut s.class_skew, a.skew);
            set(&mut s.noise_sigma, a.noise);
            set(&mut s.seed, a.seed);
            set(&mut c.format, a.format);
        }),
        Cmd::Split(a) => resolve_and_run(&a.common, |c: &mut SplitConfig| {
            set(&mut c.data, a.data.map(absolute));
            if let Some(f) = a.fractions {
                c.fractions = [f[0], f[1], f[2]];
            }
            if a.group_key.is_some() {
                c.group_key = a.group_key;
            }
            set(&mut c.seed, a.seed);
        }),
        Cmd::Filter(a) => resolve_and_run(&a.common, |c: &mut FilterConfig| {
            set(&mut c.data, a.data.map(absolute));
            set(&mut c.remove, a.remove);
            set(&mut c.keep, a.keep);
            if a.preset.is_some() {
                c.preset = a.preset;
            }
        }),
        Cmd::Cooc(a) => resolve_and_run(&a.common, |c: &mut CoocConfig| {
            set(&mut c.data, a.data.map(absolute));
            if a.grouping.is_some() {
                c.grouping = a.grouping.map(absolute);
            }
        }),
        Cmd::Train(a) => resolve_and_run(&a.common, |c: &mut TrainCommandConfig| {
            set(&mut c.train_data, a.train.map(absolute));
            set(&mut c.val_data, a.val.map(absolute));
            apply_model(&a.model, &mut c.hidden_dims, &mut c.activation);
            apply_training(&a.training, &mut c.train);
        }),
        Cmd::Eval(a) => resolve_and_run(&a.common, |c: &mut EvalConfig| {
            set(&mut c.model, a.model.map(absolute));
            set(&mut c.data, a.data.map(absolute));
            set(&mut c.tau, a.tau);
            if a.ciw_file.is_some() {
                c.ciw_file = a.ciw_file.map(absolute);
            }
        }),
        Cmd::Ablate(a) => resolve_and_run(&a.common, |c: &mut AblateConfig| {
            set(&mut c.train_data, a.train.map(absolute));
            set(&mut c.val_data, a.val.map(absolute));
            set(&mut c.test_data, a.test.map(absolute));
            set(&mut c.grid, a.grid);
            set(&mut c.seeds, a.seeds);
            set(&mut c.experiment.threshold, a.tau);
            let e = &mut c.experiment;
            apply_model(&a.model, &mut e.hidden_dims, &mut e.activation);
            apply_training(&a.training, &mut e.train);
        }),
        Cmd::Surface(a) => {
            let targets = match a.targets.as_deref() {
                None => None,
                Some(&[y1, y2]) => Some([y1, y2]),
                Some(other) => {
                    return Err(CliError::Config(format!("--targets needs two values, got {}", other.len())))
                }
            };
            resolve_and_run(&a.common, |c: &mut SurfaceConfig| {
                set(&mut c.case, a.case);
                set(&mut c.targets, targets);
                set(&mut c.lambda, a.lambda);
                set(&mut c.alpha, a.alpha);
                set(&mut c.resolution, a.resolution);
            })
        }
        Cmd::Rerun(a) => rerun(&a.manifest, &a.out, a.threads),
    }
}
