//! Label datasets: validation, statistics, co-occurrence, class filtering,
//! splitting and synthetic generation.

mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::TargetBatch;

pub use io::{features_sidecar_path, load_dataset, save_dataset, DatasetFormat, LoadOptions};
pub use split::{split_dataset, SplitSpec};
pub use synth::{synthesize, SyntheticConfig};

/// The 41 COCO classes kept after removing `person` and its most co-occurring
/// categories.
pub const COCO_RETAINED_CLASSES: [&str; 41] = [
    "boat",
    "bird",
    "cat",
    "dog",
    "bottle",
    "fork",
    "knife",
    "spoon",
    "banana",
    "apple",
    "sandwich",
    "orange",
    "broccoli",
    "carrot",
    "hot dog",
    "pizza",
    "donut",
    "cake",
    "chair",
    "couch",
    "bed",
    "dining table",
    "toilet",
    "tv",
    "laptop",
    "mouse",
    "remote",
    "keyboard",
    "cell phone",
    "microwave",
    "oven",
    "toaster",
    "sink",
    "refrigerator",
    "book",
    "clock",
    "vase",
    "scissors",
    "teddy bear",
    "hair drier",
    "toothbrush",
];

/// Instances with binary labels over a fixed class list, plus optional group
/// keys (e.g. patient ids) and feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDataset {
    instance_ids: Vec<String>,
    group_keys: Option<Vec<String>>,
    labels: Array2<u8>,
    class_names: Vec<String>,
    features: Option<Array2<f64>>,
}

impl LabelDataset {
    pub fn new(
        instance_ids: Vec<String>,
        group_keys: Option<Vec<String>>,
        labels: Array2<u8>,
        class_names: Vec<String>,
        features: Option<Array2<f64>>,
    ) -> Result<Self> {
        let n = instance_ids.len();
        if labels.nrows() != n {
            return Err(Error::InvalidInput(format!("{} ids but {} label rows", n, labels.nrows())));
        }
        if labels.ncols() != class_names.len() {
            return Err(Error::InvalidInput(format!(
                "{} class names but {} label columns",
                class_names.len(),
                labels.ncols()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = instance_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate instance id '{dup}'")));
        }
        let mut seen = HashSet::new();
        for name in &class_names {
            if name.is_empty() {
                return Err(Error::InvalidInput("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate class name '{name}'")));
            }
        }
        if let Some(((i, j), v)) = labels.indexed_iter().find(|(_, v)| **v > 1) {
            return Err(Error::InvalidInput(format!("label [{i}, {j}] = {v} is not binary")));
        }
        if let Some(g) = &group_keys {
            if g.len() != n {
                return Err(Error::InvalidInput(format!("{} group keys for {} instances", g.len(), n)));
            }
        }
        if let Some(f) = &features {
            if f.nrows() != n {
                return Err(Error::InvalidInput(format!("{} feature rows for {} instances", f.nrows(), n)));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite feature value".into()));
            }
        }
        Ok(LabelDataset { instance_ids, group_keys, labels, class_names, features })
    }

    pub fn len(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_ids.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn group_keys(&self) -> Option<&[String]> {
        self.group_keys.as_deref()
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn targets(&self) -> Result<TargetBatch> {
        TargetBatch::new(self.labels.clone())
    }

    pub fn with_features(self, features: Option<Array2<f64>>) -> Result<Self> {
        LabelDataset::new(self.instance_ids, self.group_keys, self.labels, self.class_names, features)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabelDataset {
        let pick = |v: &[String]| indices.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        LabelDataset {
            instance_ids: pick(&self.instance_ids),
            group_keys: self.group_keys.as_deref().map(pick),
            labels: self.labels.select(Axis(0), indices),
            class_names: self.class_names.clone(),
            features: self.features.as_ref().map(|f| f.select(Axis(0), indices)),
        }
    }

    fn class_index(&self) -> HashMap<&str, usize> {
        self.class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_instances: usize,
    pub n_classes: usize,
    /// `(class name, positive count)` in class order.
    pub per_class: Vec<(String, u64)>,
    pub any_class: u64,
    pub negative: u64,
    pub negative_fraction: f64,
    /// `cardinality_histogram[k]` = instances with exactly `k` labels.
    pub cardinality_histogram: Vec<u64>,
}

pub fn dataset_stats(dataset: &LabelDataset) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("statistics of an empty dataset".into()));
    }
    let m = dataset.n_classes();
    let mut hist = vec![0u64; m + 1];
    let mut per_class = vec![0u64; m];
    for row in dataset.labels.rows() {
        let mut k = 0;
        for (c, &y) in per_class.iter_mut().zip(row.iter()) {
            if y == 1 {
                *c += 1;
                k += 1;
            }
        }
        hist[k] += 1;
    }
    let negative = hist[0];
    let n = dataset.len() as u64;
    Ok(DatasetStats {
        n_instances: dataset.len(),
        n_classes: m,
        per_class: dataset.class_names.iter().cloned().zip(per_class).collect(),
        any_class: n - negative,
        negative,
        negative_fraction: negative as f64 / n as f64,
        cardinality_histogram: hist,
    })
}

/// Symmetric pairwise co-occurrence counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrence {
    /// Class names, or category names (sorted) when a grouping was applied.
    pub labels: Vec<String>,
    pub counts: Array2<u64>,
}

/// Count instances in which both members of each pair are present. With a
/// `grouping` (class -> category), a category is present when any of its
/// classes is.
pub fn co_occurrence(dataset: &LabelDataset, grouping: Option<&BTreeMap<String, String>>) -> Result<CoOccurrence> {
    let (labels, column_to_label): (Vec<String>, Vec<usize>) = match grouping {
        None => (dataset.class_names.clone(), (0..dataset.n_classes()).collect()),
        Some(map) => {
            let categories: BTreeSet<&String> = dataset
                .class_names
                .iter()
                .map(|c| {
                    map.get(c).ok_or_else(|| Error::InvalidConfig(format!("grouping has no category for class '{c}'")))
                })
                .collect::<Result<_>>()?;
            let labels: Vec<String> = categories.into_iter().cloned().collect();
            let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let mapping = dataset.class_names.iter().map(|c| index[map[c].as_str()]).collect();
            (labels, mapping)
        }
    };
    let k = labels.len();
    let mut counts = Array2::<u64>::zeros((k, k));
    let mut present = vec![false; k];
    for row in dataset.labels.rows() {
        present.iter_mut().for_each(|p| *p = false);
        for (j, &y) in row.iter().enumerate() {
            if y == 1 {
                present[column_to_label[j]] = true;
            }
        }
        for a in 0..k {
            if !present[a] {
                continue;
            }
            for b in (a + 1)..k {
                if present[b] {
                    counts[[a, b]] += 1;
                    counts[[b, a]] += 1;
                }
            }
        }
    }
    Ok(CoOccurrence { labels, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub removed: Vec<String>,
    pub remaining_classes: usize,
    pub negative_before: u64,
    pub negative_after: u64,
    pub negative_fraction: f64,
}

/// Drop the named class columns. Rows are kept; rows left without labels
/// become negatives.
pub fn filter_classes(dataset: &LabelDataset, remove: &[String]) -> Result<(LabelDataset, FilterReport)> {
    let index = dataset.class_index();
    let mut drop = HashSet::new();
    for name in remove {
        let j = index.get(name.as_str()).ok_or_else(|| Error::InvalidInput(format!("unknown class '{name}'")))?;
        drop.insert(*j);
    }
    let keep: Vec<usize> = (0..dataset.n_classes()).filter(|j| !drop.contains(j)).collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput("filter would remove every class".into()));
    }
    let before = dataset_stats(dataset)?;
    let filtered = LabelDataset {
        instance_ids: dataset.instance_ids.clone(),
        group_keys: dataset.group_keys.clone(),
        labels: dataset.labels.select(Axis(1), &keep),
        class_names: keep.iter().map(|&j| dataset.class_names[j].clone()).collect(),
        features: dataset.features.clone(),
    };
    let after = dataset_stats(&filtered)?;
    let report = FilterReport {
        removed: remove.to_vec(),
        remaining_classes: filtered.n_classes(),
        negative_before: before.negative,
        negative_after: after.negative,
        negative_fraction: after.negative_fraction,
    };
    Ok((filtered, report))
}

/// Complement of `keep` within the dataset's classes, for use with
/// [`filter_classes`].
pub fn removal_list_for(dataset: &LabelDataset, keep: &[&str]) -> Result<Vec<String>> {
    let index = dataset.class_index();
    if let Some(missing) = keep.iter().find(|k| !index.contains_key(*k)) {
        return Err(Error::InvalidInput(format!("class '{missing}' to keep is not in the dataset")));
    }
    let keep: HashSet<&str> = keep.iter().copied().collect();
    Ok(dataset.class_names.iter().filter(|c| !keep.contains(c.as_str())).cloned().collect())
}
