//! CSV and JSONL label files.
//!
//! CSV: header `id[,group],<class>...`, one 0/1 column per class. Features, if
//! any, live in a sidecar `<stem>.features.csv` with header `id,f0,f1,...`.
//!
//! JSONL: an optional first line `{"classes": [...]}` fixing the class list and
//! order, then one object per instance:
//! `{"id": str, "group": str?, "labels": [class names]?, "features": [f64]?}`.
//! A missing or empty `labels` list is a negative instance. Without the header
//! line, classes are taken in order of first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::LabelDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    /// Guess from the file extension (`.jsonl` / `.json` -> JSONL, else CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DatasetFormat::Jsonl,
            _ => DatasetFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    /// Name of the CSV column holding group keys.
    pub group_column: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { group_column: "group".into() }
    }
}

/// `dir/name.csv` -> `dir/name.features.csv`.
pub fn features_sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    path.with_file_name(format!("{stem}.features.csv"))
}

pub fn load_dataset(path: &Path, format: DatasetFormat, options: &LoadOptions) -> Result<LabelDataset> {
    match format {
        DatasetFormat::Csv => load_csv(path, options),
        DatasetFormat::Jsonl => load_jsonl(path),
    }
}

pub fn save_dataset(dataset: &LabelDataset, path: &Path, format: DatasetFormat) -> Result<()> {
    match format {
        DatasetFormat::Csv => save_csv(dataset, path),
        DatasetFormat::Jsonl => save_jsonl(dataset, path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_line(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, err.to_string())
}

fn load_csv(path: &Path, options: &LoadOptions) -> Result<LabelDataset> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_line(path, e))?.clone();
    if header.get(0) != Some("id") {
        return Err(parse_err(path, 1, "first column must be 'id'"));
    }
    let has_group = header.get(1) == Some(options.group_column.as_str());
    let first_class = if has_group { 2 } else { 1 };
    let class_names: Vec<String> = header.iter().skip(first_class).map(str::to_string).collect();
    if class_names.is_empty() {
        return Err(parse_err(path, 1, "no class columns"));
    }

    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut flat = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_line(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        ids.push(record[0].to_string());
        if has_group {
            groups.push(record[1].to_string());
        }
        for (k, field) in record.iter().skip(first_class).enumerate() {
            let v = match field.trim() {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(parse_err(
                        path,
                        line,
                        format!("label '{other}' for class '{}' is not 0 or 1", class_names[k]),
                    ))
                }
            };
            flat.push(v);
        }
    }
    let labels =
        Array2::from_shape_vec((ids.len(), class_names.len()), flat).map_err(|e| parse_err(path, 0, e.to_string()))?;

    let sidecar = features_sidecar_path(path);
    let features = if sidecar.exists() { Some(load_features_csv(&sidecar, &ids)?) } else { None };
    LabelDataset::new(ids, has_group.then_some(groups), labels, class_names, features)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

fn load_features_csv(path: &Path, ids: &[String]) -> Result<Array2<f64>> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_line(path, e))?.clone();
    if header.get(0) != Some("id") {
        return Err(parse_err(path, 1, "first column must be 'id'"));
    }
    let dim = header.len() - 1;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut out = Array2::<f64>::zeros((ids.len(), dim));
    let mut seen = vec![false; ids.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_line(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row =
            *index.get(&record[0]).ok_or_else(|| parse_err(path, line, format!("unknown id '{}'", &record[0])))?;
        if std::mem::replace(&mut seen[row], true) {
            return Err(parse_err(path, line, format!("duplicate id '{}'", &record[0])));
        }
        for (k, field) in record.iter().skip(1).enumerate() {
            out[[row, k]] = field
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("feature '{field}' is not a number")))?;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(parse_err(path, 0, format!("no features for id '{}'", ids[i])));
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn save_csv(dataset: &LabelDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["id".to_string()];
    if dataset.group_keys().is_some() {
        header.push("group".into());
    }
    header.extend(dataset.class_names().iter().cloned());
    w.write_record(&header)?;
    for (i, id) in dataset.instance_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        if let Some(g) = dataset.group_keys() {
            rec.push(g[i].clone());
        }
        rec.extend(dataset.labels().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    if let Some(f) = dataset.features() {
        let sidecar = features_sidecar_path(path);
        let mut w = csv::Writer::from_writer(create(&sidecar)?);
        let mut header = vec!["id".to_string()];
        header.extend((0..f.ncols()).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for (id, row) in dataset.instance_ids().iter().zip(f.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlHeader {
    classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
}

fn load_jsonl(path: &Path) -> Result<LabelDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut classes: Vec<String> = Vec::new();
    let mut fixed_classes = false;
    let mut records = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if records.is_empty() && !fixed_classes {
            if let Ok(h) = serde_json::from_str::<JsonlHeader>(&line) {
                classes = h.classes;
                fixed_classes = true;
                continue;
            }
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        for label in &rec.labels {
            if !classes.contains(label) {
                if fixed_classes {
                    return Err(parse_err(path, lineno, format!("label '{label}' is not a declared class")));
                }
                classes.push(label.clone());
            }
        }
        records.push((lineno, rec));
    }
    if records.is_empty() {
        return Err(parse_err(path, 0, "no instances"));
    }

    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let n = records.len();
    let mut labels = Array2::<u8>::zeros((n, classes.len()));
    let has_group = records[0].1.group.is_some();
    let dim = records[0].1.features.as_ref().map(Vec::len);
    let mut ids = Vec::with_capacity(n);
    let mut groups = Vec::new();
    let mut feats = Vec::new();
    for (i, (lineno, rec)) in records.iter().enumerate() {
        for label in &rec.labels {
            labels[[i, index[label.as_str()]]] = 1;
        }
        match (&rec.group, has_group) {
            (Some(g), true) => groups.push(g.clone()),
            (None, false) => {}
            _ => return Err(parse_err(path, *lineno, "'group' must be present on all rows or none")),
        }
        match (&rec.features, dim) {
            (Some(f), Some(d)) if f.len() == d => feats.extend_from_slice(f),
            (None, None) => {}
            _ => return Err(parse_err(path, *lineno, "inconsistent 'features' across rows")),
        }
        ids.push(rec.id.clone());
    }
    let features = match dim {
        Some(d) => Some(Array2::from_shape_vec((n, d), feats).map_err(|e| parse_err(path, 0, e.to_string()))?),
        None => None,
    };
    LabelDataset::new(ids, has_group.then_some(groups), labels, classes, features)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

fn save_jsonl(dataset: &LabelDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let header = JsonlHeader { classes: dataset.class_names().to_vec() };
    writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io)?;
    for (i, id) in dataset.instance_ids().iter().enumerate() {
        let rec = JsonlRecord {
            id: id.clone(),
            group: dataset.group_keys().map(|g| g[i].clone()),
            labels: dataset
                .labels()
                .row(i)
                .iter()
                .zip(dataset.class_names())
                .filter(|(&y, _)| y == 1)
                .map(|(_, c)| c.clone())
                .collect(),
            features: dataset.features().map(|f| f.row(i).to_vec()),
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?).map_err(io)?;
    }
    w.flush().map_err(io)
}
