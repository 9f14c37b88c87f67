use std::collections::{BTreeMap, HashSet};

use anyclass::data::*;
use ndarray::Array2;
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = LabelDataset> {
    (1usize..30, 1usize..6, any::<bool>(), 0usize..4).prop_flat_map(|(n, m, grouped, d)| {
        (
            prop::collection::vec(0u8..2, n * m),
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(-1e6f64..1e6, n * d),
        )
            .prop_map(move |(labels, groups, feats)| {
                LabelDataset::new(
                    (0..n).map(|i| format!("id-{i}")).collect(),
                    grouped.then(|| groups.iter().map(|g| format!("p{g}")).collect()),
                    Array2::from_shape_vec((n, m), labels).unwrap(),
                    (0..m).map(|j| format!("class {j}")).collect(),
                    (d > 0).then(|| Array2::from_shape_vec((n, d), feats).unwrap()),
                )
                .unwrap()
            })
    })
}

fn negatives(d: &LabelDataset) -> u64 {
    dataset_stats(d).unwrap().negative
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_round_trip(ds in arb_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("d.csv", DatasetFormat::Csv), ("d.jsonl", DatasetFormat::Jsonl)] {
            let path = dir.path().join(name);
            save_dataset(&ds, &path, format).unwrap();
            let back = load_dataset(&path, format, &LoadOptions::default()).unwrap();
            prop_assert_eq!(&back, &ds);
        }
    }

    #[test]
    fn filtering_never_removes_negatives(ds in arb_dataset(), mask in prop::collection::vec(any::<bool>(), 6)) {
        let remove: Vec<String> = ds.class_names().iter().zip(&mask).filter(|(_, &r)| r).map(|(c, _)| c.clone()).collect();
        prop_assume!(remove.len() < ds.n_classes());
        let (filtered, report) = filter_classes(&ds, &remove).unwrap();
        prop_assert!(negatives(&filtered) >= negatives(&ds));
        prop_assert_eq!(report.negative_after, negatives(&filtered));
        prop_assert_eq!(filtered.n_classes(), ds.n_classes() - remove.len());
        prop_assert_eq!(filtered.len(), ds.len());
    }

    #[test]
    fn cooccurrence_matches_pair_count(ds in arb_dataset(), split_at in 0usize..6) {
        let c = co_occurrence(&ds, None).unwrap();
        let m = ds.n_classes();
        for a in 0..m {
            prop_assert_eq!(c.counts[[a, a]], 0);
            for b in 0..m {
                prop_assert_eq!(c.counts[[a, b]], c.counts[[b, a]]);
                if a != b {
                    let brute = ds.labels().rows().into_iter().filter(|r| r[a] == 1 && r[b] == 1).count() as u64;
                    prop_assert_eq!(c.counts[[a, b]], brute);
                }
            }
        }

        // two categories: classes below `split_at` and the rest
        let grouping: BTreeMap<String, String> = ds
            .class_names()
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), if j < split_at { "low" } else { "high" }.to_string()))
            .collect();
        let g = co_occurrence(&ds, Some(&grouping)).unwrap();
        if g.labels.len() == 2 {
            prop_assert_eq!(&g.labels, &vec!["high".to_string(), "low".to_string()]);
            let brute = ds
                .labels()
                .rows()
                .into_iter()
                .filter(|r| r.iter().take(split_at).any(|&y| y == 1) && r.iter().skip(split_at).any(|&y| y == 1))
                .count() as u64;
            prop_assert_eq!(g.counts[[0, 1]], brute);
        } else {
            prop_assert_eq!(g.counts[[0, 0]], 0);
        }
    }

    #[test]
    fn splits_partition(ds in arb_dataset(), seed in any::<u64>()) {
        prop_assume!(ds.group_keys().is_some());
        let spec = SplitSpec { seed, group_aware: true, ..SplitSpec::default() };
        let parts = split_dataset(&ds, &spec).unwrap();
        let mut ids = HashSet::new();
        let mut owner = BTreeMap::new();
        for (k, p) in parts.iter().enumerate() {
            for (id, g) in p.instance_ids().iter().zip(p.group_keys().unwrap()) {
                prop_assert!(ids.insert(id.clone()), "{} appears twice", id);
                let prev = owner.insert(g.clone(), k);
                prop_assert!(prev.is_none() || prev == Some(k), "group {} split", g);
            }
        }
        prop_assert_eq!(ids.len(), ds.len());
    }
}

#[test]
fn cooccurrence_two_rows() {
    let ds = LabelDataset::new(
        vec!["a".into(), "b".into()],
        None,
        ndarray::array![[1u8, 1], [1, 0]],
        vec!["x".into(), "y".into()],
        None,
    )
    .unwrap();
    let c = co_occurrence(&ds, None).unwrap();
    assert_eq!(c.counts, ndarray::array![[0u64, 1], [1, 0]]);
}

#[test]
fn removing_only_label_makes_negative() {
    let ds = LabelDataset::new(
        vec!["a".into(), "b".into()],
        None,
        ndarray::array![[1u8, 0], [1, 1]],
        vec!["x".into(), "y".into()],
        None,
    )
    .unwrap();
    let (f, report) = filter_classes(&ds, &["x".to_string()]).unwrap();
    assert_eq!(f.labels(), &ndarray::array![[0u8], [1]]);
    assert_eq!((report.negative_before, report.negative_after), (0, 1));
    let (same, _) = filter_classes(&ds, &[]).unwrap();
    assert_eq!(same, ds);
}

#[test]
fn coco_keep_list_has_41_classes() {
    assert_eq!(COCO_RETAINED_CLASSES.len(), 41);
    let unique: HashSet<&str> = COCO_RETAINED_CLASSES.iter().copied().collect();
    assert_eq!(unique.len(), 41);
}
