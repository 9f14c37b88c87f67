//! Resolved per-command configurations and the code that executes them.
//!
//! Each configuration is the complete description of a run: it is what gets
//! echoed into the manifest, and deserializing it back reproduces the run.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyclass::data::{
    co_occurrence, filter_classes, load_dataset, removal_list_for, save_dataset, split_dataset, synthesize,
    DatasetFormat, LoadOptions, COCO_RETAINED_CLASSES,
};
use anyclass::losses::{likelihood_surface_grid, SurfaceCase};
use anyclass::metrics::DEFAULT_THRESHOLD;
use anyclass::seed::derive_seed;
use anyclass::trainer::{
    ablate_lambda, evaluate, init_model, resolve_loss, train_with_observer, ExperimentConfig, Mlp, MlpConfig,
    TrainConfig, DEFAULT_LAMBDA_GRID,
};
use anyclass::{ClassImportanceWeights, LabelDataset, SplitSpec, SyntheticConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, FileDigest};

pub const JSON_FORMAT_VERSION: u32 = 1;

/// A runnable, serializable command configuration.
pub trait Command: Serialize + DeserializeOwned + Sync {
    const NAME: &'static str;

    fn validate(&self) -> Result<()>;

    /// Files read by the run (label files; feature sidecars are added
    /// automatically).
    fn inputs(&self) -> Vec<PathBuf>;

    /// Master seed and named sub-seeds, recorded in the manifest.
    fn seeds(&self) -> (Option<u64>, BTreeMap<String, u64>) {
        (None, BTreeMap::new())
    }

    /// Run, writing into `out`; returns the written file names. `report`
    /// receives a human-readable summary line.
    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>>;
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(CliError::Config(format!("{what} path is required")));
    }
    Ok(())
}

fn load(path: &Path, group_column: Option<&str>) -> Result<LabelDataset> {
    let options = match group_column {
        Some(g) => LoadOptions { group_column: g.to_string() },
        None => LoadOptions::default(),
    };
    Ok(load_dataset(path, DatasetFormat::from_path(path), &options)?)
}

fn extension(format: DatasetFormat) -> &'static str {
    match format {
        DatasetFormat::Csv => "csv",
        DatasetFormat::Jsonl => "jsonl",
    }
}

/// Save under `out/<stem>.<ext>`; returns the written file names (including a
/// features sidecar when one was produced).
fn save(ds: &LabelDataset, out: &Path, stem: &str, format: DatasetFormat) -> Result<Vec<String>> {
    let name = format!("{stem}.{}", extension(format));
    let path = out.join(&name);
    save_dataset(ds, &path, format)?;
    let mut files = vec![name];
    let sidecar = anyclass::data::features_sidecar_path(&path);
    if format == DatasetFormat::Csv && ds.features().is_some() && sidecar.exists() {
        files.push(sidecar.file_name().unwrap().to_string_lossy().into_owned());
    }
    Ok(files)
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(&out.join(name), text.as_bytes())?;
    Ok(name.to_string())
}

fn csv_writer(out: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let path = out.join(name);
    let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn flush(w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.into_inner().map_err(|e| CliError::Config(format!("flushing CSV: {e}")))?;
    Ok(())
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    format_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn versioned<T: Serialize>(body: &T) -> Versioned<'_, T> {
    Versioned { format_version: JSON_FORMAT_VERSION, body }
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub synthetic: SyntheticConfig,
    pub format: DatasetFormat,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig { synthetic: SyntheticConfig::default(), format: DatasetFormat::Csv }
    }
}

impl Command for GenDataConfig {
    const NAME: &'static str = "gen-data";

    fn validate(&self) -> Result<()> {
        Ok(self.synthetic.validate()?)
    }

    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }

    fn seeds(&self) -> (Option<u64>, BTreeMap<String, u64>) {
        let s = self.synthetic.seed;
        (Some(s), BTreeMap::from([("synthesize".into(), derive_seed(s, "synthesize"))]))
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let ds = synthesize(&self.synthetic)?;
        let stats = anyclass::data::dataset_stats(&ds)?;
        report(format!(
            "{} instances, {} classes, negative fraction {:.4}",
            stats.n_instances, stats.n_classes, stats.negative_fraction
        ));
        save(&ds, out, "dataset", self.format)
    }
}

// ---------------------------------------------------------------- split

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub data: PathBuf,
    pub fractions: [f64; 3],
    pub seed: u64,
    /// Column holding group keys; when set, no group crosses partitions.
    pub group_key: Option<String>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { data: PathBuf::new(), fractions: SplitSpec::default().fractions, seed: 0, group_key: None }
    }
}

impl Command for SplitConfig {
    const NAME: &'static str = "split";

    fn validate(&self) -> Result<()> {
        require(&self.data, "data")?;
        Ok(self.spec().validate()?)
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.data.clone()]
    }

    fn seeds(&self) -> (Option<u64>, BTreeMap<String, u64>) {
        (Some(self.seed), BTreeMap::from([("split".into(), derive_seed(self.seed, "split"))]))
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let ds = load(&self.data, self.group_key.as_deref())?;
        let parts = split_dataset(&ds, &self.spec())?;
        let format = DatasetFormat::from_path(&self.data);
        let mut files = Vec::new();
        for (part, stem) in parts.iter().zip(["train", "val", "test"]) {
            files.extend(save(part, out, stem, format)?);
        }
        report(format!("split sizes {} / {} / {}", parts[0].len(), parts[1].len(), parts[2].len()));
        Ok(files)
    }
}

impl SplitConfig {
    fn spec(&self) -> SplitSpec {
        SplitSpec { fractions: self.fractions, seed: self.seed, group_aware: self.group_key.is_some() }
    }
}

// ---------------------------------------------------------------- filter

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FilterPreset {
    /// Keep the 41 COCO classes retained by the class-removal strategy.
    Coco41,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub data: PathBuf,
    pub remove: Vec<String>,
    pub keep: Vec<String>,
    pub preset: Option<FilterPreset>,
}

impl Command for FilterConfig {
    const NAME: &'static str = "filter";

    fn validate(&self) -> Result<()> {
        require(&self.data, "data")?;
        let modes = usize::from(!self.remove.is_empty())
            + usize::from(!self.keep.is_empty())
            + usize::from(self.preset.is_some());
        if modes > 1 {
            return Err(CliError::Config("use only one of remove, keep and preset".into()));
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.data.clone()]
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let ds = load(&self.data, None)?;
        let remove = if let Some(FilterPreset::Coco41) = self.preset {
            removal_list_for(&ds, &COCO_RETAINED_CLASSES)?
        } else if !self.keep.is_empty() {
            let keep: Vec<&str> = self.keep.iter().map(String::as_str).collect();
            removal_list_for(&ds, &keep)?
        } else {
            self.remove.clone()
        };
        let (filtered, stats) = filter_classes(&ds, &remove)?;
        report(format!(
            "{} classes remain, negatives {} -> {} ({:.4})",
            stats.remaining_classes, stats.negative_before, stats.negative_after, stats.negative_fraction
        ));
        let mut files = save(&filtered, out, "filtered", DatasetFormat::from_path(&self.data))?;
        files.push(write_json(out, "filter_report.json", &versioned(&stats))?);
        Ok(files)
    }
}

// ---------------------------------------------------------------- cooc

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoocConfig {
    pub data: PathBuf,
    /// CSV `class,category` mapping every class to a category.
    pub grouping: Option<PathBuf>,
}

fn read_pairs(path: &Path, header: [&str; 2]) -> Result<Vec<(String, String)>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    if r.headers()?.iter().ne(header) {
        return Err(CliError::Core(anyclass::Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("header must be '{}'", header.join(",")),
        }));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            let line = rec.position().map_or(0, |p| p.line() as usize);
            return Err(CliError::Core(anyclass::Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected two fields".into(),
            }));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

impl Command for CoocConfig {
    const NAME: &'static str = "cooc";

    fn validate(&self) -> Result<()> {
        require(&self.data, "data")
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.data.clone()];
        v.extend(self.grouping.clone());
        v
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let ds = load(&self.data, None)?;
        let grouping = match &self.grouping {
            Some(p) => Some(read_pairs(p, ["class", "category"])?.into_iter().collect::<BTreeMap<_, _>>()),
            None => None,
        };
        let c = co_occurrence(&ds, grouping.as_ref())?;
        let name = "cooccurrence.csv";
        let mut w = csv_writer(out, name)?;
        let mut header = vec![if grouping.is_some() { "category" } else { "class" }.to_string()];
        header.extend(c.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in c.labels.iter().zip(c.counts.rows()) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        flush(w)?;
        report(format!("{0}x{0} co-occurrence matrix", c.labels.len()));
        Ok(vec![name.into()])
    }
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub train_data: PathBuf,
    pub val_data: PathBuf,
    pub hidden_dims: Vec<usize>,
    pub activation: anyclass::trainer::Activation,
    pub train: TrainConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        TrainCommandConfig {
            train_data: PathBuf::new(),
            val_data: PathBuf::new(),
            hidden_dims: e.hidden_dims,
            activation: e.activation,
            train: e.train,
        }
    }
}

pub const MODEL_FILE: &str = "model.json";
pub const FINAL_MODEL_FILE: &str = "model_final.json";
pub const LOG_JSON_FILE: &str = "training_log.json";
pub const LOG_CSV_FILE: &str = "training_log.csv";

impl Command for TrainCommandConfig {
    const NAME: &'static str = "train";

    fn validate(&self) -> Result<()> {
        require(&self.train_data, "train data")?;
        require(&self.val_data, "validation data")?;
        Ok(self.train.validate()?)
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.train_data.clone(), self.val_data.clone()]
    }

    fn seeds(&self) -> (Option<u64>, BTreeMap<String, u64>) {
        let s = self.train.seed;
        (
            Some(s),
            BTreeMap::from([("init".into(), derive_seed(s, "init")), ("shuffle".into(), derive_seed(s, "shuffle"))]),
        )
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let tr = load(&self.train_data, None)?;
        let va = load(&self.val_data, None)?;
        let input_dim = tr
            .features()
            .ok_or_else(|| {
                anyclass::Error::InvalidInput(format!(
                    "{} has no features (expected a sidecar {})",
                    self.train_data.display(),
                    anyclass::data::features_sidecar_path(&self.train_data).display()
                ))
            })?
            .ncols();
        let model = init_model(&MlpConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            output_dim: tr.n_classes(),
            activation: self.activation,
            init_seed: derive_seed(self.train.seed, "init"),
        })?;
        if let Some(w) = resolve_loss(&tr, &self.train)?.balance {
            log::info!("class balance weights {:?}, negative {:?}", w.per_class, w.negative);
        }
        let outcome = train_with_observer(model, &tr, &va, &self.train, |log, _| {
            // progress is flushed every epoch so an interrupted run leaves a usable log
            let mut csv = Vec::new();
            log.write_csv(&mut csv)?;
            for (name, bytes) in [(LOG_JSON_FILE, log.to_json()?.into_bytes()), (LOG_CSV_FILE, csv)] {
                write_atomic(&out.join(name), &bytes).map_err(|e| match e {
                    CliError::Io { path, source } => anyclass::Error::Io { path, source },
                    other => anyclass::Error::InvalidInput(other.to_string()),
                })?;
            }
            Ok(())
        })
        .map_err(CliError::from)?;
        outcome.best_model.save(&out.join(MODEL_FILE))?;
        outcome.final_model.save(&out.join(FINAL_MODEL_FILE))?;

        let mut log = outcome.log;
        log.checkpoint = Some(MODEL_FILE.into());
        write_atomic(&out.join(LOG_JSON_FILE), log.to_json()?.as_bytes())?;
        let best = log.best_epoch.map(|b| &log.epochs[b]);
        if let Some(b) = best {
            report(format!(
                "best epoch {}: val mAP {:.4}, macro-F2 {:.4}, F1-Neg {:.4}",
                b.epoch, b.validation.mean_ap, b.validation.macro_f2, b.validation.f1_neg
            ));
        }
        Ok(vec![MODEL_FILE.into(), FINAL_MODEL_FILE.into(), LOG_JSON_FILE.into(), LOG_CSV_FILE.into()])
    }
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub tau: f64,
    /// CSV `class,weight` of class-importance weights for F2-CIW.
    pub ciw_file: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { model: PathBuf::new(), data: PathBuf::new(), tau: DEFAULT_THRESHOLD, ciw_file: None }
    }
}

/// Class-importance weights from a `class,weight` CSV, in `classes` order.
pub fn read_ciw(path: &Path, classes: &[String]) -> Result<ClassImportanceWeights> {
    let mut by_name: HashMap<String, f64> = HashMap::new();
    for (class, weight) in read_pairs(path, ["class", "weight"])? {
        let w: f64 = weight.trim().parse().map_err(|_| {
            CliError::Config(format!("{}: weight '{weight}' for '{class}' is not a number", path.display()))
        })?;
        if by_name.insert(class.clone(), w).is_some() {
            return Err(CliError::Config(format!("{}: class '{class}' listed twice", path.display())));
        }
    }
    if let Some(extra) = by_name.keys().find(|k| !classes.contains(k)) {
        return Err(CliError::Config(format!("{}: unknown class '{extra}'", path.display())));
    }
    let weights = classes
        .iter()
        .map(|c| {
            by_name
                .get(c)
                .copied()
                .ok_or_else(|| CliError::Config(format!("{}: no weight for class '{c}'", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassImportanceWeights::new(weights)?)
}

impl Command for EvalConfig {
    const NAME: &'static str = "eval";

    fn validate(&self) -> Result<()> {
        require(&self.model, "model")?;
        require(&self.data, "data")?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(CliError::Config(format!("threshold {} outside (0, 1)", self.tau)));
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.model.clone(), self.data.clone()];
        v.extend(self.ciw_file.clone());
        v
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let model = Mlp::load(&self.model)?;
        let ds = load(&self.data, None)?;
        if model.output_dim() != ds.n_classes() {
            return Err(anyclass::Error::InvalidInput(format!(
                "model predicts {} classes but {} has {}",
                model.output_dim(),
                self.data.display(),
                ds.n_classes()
            ))
            .into());
        }
        let ciw = self.ciw_file.as_deref().map(|p| read_ciw(p, ds.class_names())).transpose()?;
        let r = evaluate(&model, &ds, self.tau, ciw.as_ref())?;

        let mut line = format!(
            "macro-F1 {:.4}  macro-F2 {:.4}  mAP {:.4}  F1-Neg {:.4}",
            r.macro_f1, r.macro_f2, r.mean_ap, r.f1_neg
        );
        if let Some(c) = r.f2_ciw {
            line.push_str(&format!("  F2-CIW {c:.4}"));
        }
        report(line);

        let mut files = vec![write_json(out, "report.json", &versioned(&r))?];
        let mut w = csv_writer(out, "report.csv")?;
        w.write_record(anyclass::MetricsReport::CSV_HEADER)?;
        w.write_record(r.csv_row())?;
        flush(w)?;
        files.push("report.csv".into());
        let mut w = csv_writer(out, "report_classes.csv")?;
        w.write_record(anyclass::MetricsReport::CLASS_CSV_HEADER)?;
        for row in r.class_csv_rows(ds.class_names()) {
            w.write_record(row)?;
        }
        flush(w)?;
        files.push("report_classes.csv".into());
        Ok(files)
    }
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub train_data: PathBuf,
    pub val_data: PathBuf,
    pub test_data: PathBuf,
    pub experiment: ExperimentConfig,
    pub grid: Vec<f64>,
    pub seeds: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            train_data: PathBuf::new(),
            val_data: PathBuf::new(),
            test_data: PathBuf::new(),
            experiment: ExperimentConfig::default(),
            grid: DEFAULT_LAMBDA_GRID.to_vec(),
            seeds: 5,
        }
    }
}

impl Command for AblateConfig {
    const NAME: &'static str = "ablate";

    fn validate(&self) -> Result<()> {
        require(&self.train_data, "train data")?;
        require(&self.val_data, "validation data")?;
        require(&self.test_data, "test data")?;
        if self.seeds == 0 {
            return Err(CliError::Config("at least one seed is needed".into()));
        }
        if self.grid.is_empty() {
            return Err(CliError::Config("the lambda grid is empty".into()));
        }
        Ok(self.experiment.train.validate()?)
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.train_data.clone(), self.val_data.clone(), self.test_data.clone()]
    }

    fn seeds(&self) -> (Option<u64>, BTreeMap<String, u64>) {
        let base = self.experiment.train.seed;
        let runs = (0..self.seeds as u64).map(|i| (format!("run{i}"), base.wrapping_add(i))).collect();
        (Some(base), runs)
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let tr = load(&self.train_data, None)?;
        let va = load(&self.val_data, None)?;
        let te = load(&self.test_data, None)?;
        let table = ablate_lambda(&tr, &va, &te, &self.experiment, &self.grid, self.seeds)?;
        let path = out.join("ablation.csv");
        table.write_csv(BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?))?;
        let path = out.join("ablation_medians.csv");
        table.write_medians_csv(BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?))?;
        for m in table.medians() {
            let lambda = m.lambda.map_or("-".to_string(), |l| l.to_string());
            report(format!(
                "{:8} lambda {:>5}: F1 {:.4}  F2 {:.4}  mAP {:.4}  F1-Neg {:.4}",
                m.variant, lambda, m.f1, m.f2, m.map, m.f1_neg
            ));
        }
        Ok(vec!["ablation.csv".into(), "ablation_medians.csv".into()])
    }
}

// ---------------------------------------------------------------- surface

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub case: SurfaceCase,
    pub targets: [u8; 2],
    pub lambda: f64,
    pub alpha: f64,
    pub resolution: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { case: SurfaceCase::Any, targets: [1, 1], lambda: 0.02, alpha: 1.0, resolution: 101 }
    }
}

impl Command for SurfaceConfig {
    const NAME: &'static str = "surface";

    fn validate(&self) -> Result<()> {
        if self.targets.iter().any(|&t| t > 1) {
            return Err(CliError::Config(format!("targets {:?} must be 0 or 1", self.targets)));
        }
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }

    fn run(&self, out: &Path, report: &mut dyn FnMut(String)) -> Result<Vec<String>> {
        let grid = likelihood_surface_grid(self.case, self.targets, self.lambda, self.alpha, self.resolution)?;
        let mut w = csv_writer(out, "surface.csv")?;
        w.write_record(["p1", "p2", "value"])?;
        for p in &grid {
            w.write_record([p.p1.to_string(), p.p2.to_string(), p.value.to_string()])?;
        }
        flush(w)?;
        report(format!("{} grid points", grid.len()));
        Ok(vec!["surface.csv".into()])
    }
}

/// Digests of the inputs plus any CSV feature sidecars next to them.
pub fn input_digests(inputs: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for p in inputs {
        out.push(crate::manifest::digest(p, p.display().to_string())?);
        if DatasetFormat::from_path(p) == DatasetFormat::Csv {
            let sidecar = anyclass::data::features_sidecar_path(p);
            if sidecar.exists() && sidecar != *p {
                out.push(crate::manifest::digest(&sidecar, sidecar.display().to_string())?);
            }
        }
    }
    Ok(out)
}
