use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn anyclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anyclass")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = anyclass(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    anyclass(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn generated(dir: &Path, instances: &str) -> std::path::PathBuf {
    let out = dir.join("gen");
    ok(&["gen-data", "--instances", instances, "--classes", "4", "--features", "5", "--seed", "1", "--out", s(&out)]);
    out.join("dataset.csv")
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&["gen-data", "--bogus", "--out", s(&out)]), 2);
    assert_eq!(code(&["gen-data", "--negative-fraction", "1.5", "--out", s(&out)]), 3);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,a,b\nx,1,7\n").unwrap();
    assert_eq!(code(&["cooc", "--data", s(&bad), "--out", s(&out)]), 4);
    assert_eq!(code(&["cooc", "--data", s(&dir.path().join("missing.csv")), "--out", s(&out)]), 5);

    // class `b` is never present, so its balancing weight is undefined
    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "id,a,b\nx0,1,0\nx1,0,0\nx2,1,0\nx3,0,0\n").unwrap();
    fs::write(dir.path().join("zero.features.csv"), "id,f0\nx0,1\nx1,0\nx2,1\nx3,0\n").unwrap();
    let args = ["train", "--train", s(&zero), "--val", s(&zero), "--lr-decay", "none"];
    assert_eq!(code(&[&args[..], &["--epochs", "1", "--cb-beta", "0.99", "--out", s(&out)]].concat()), 7);

    let err = anyclass(&[&args[..], &["--linear", "--lr", "1e300", "--epochs", "3", "--out", s(&out)]].concat());
    assert_eq!(err.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&err.stderr).starts_with("error[non-finite-loss]"));
}

#[test]
fn manifest_records_success_and_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), "200");
    let m = manifest(&dir.path().join("gen"));
    assert_eq!(m["status"], "complete");
    assert_eq!(m["command"], "gen-data");
    assert!(m["sub_seeds"]["synthesize"].is_u64());
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);

    // diverging run: the manifest is kept, marked failed, with the error
    let split = dir.path().join("split");
    ok(&["split", "--data", s(&data), "--out", s(&split)]);
    let out = dir.path().join("diverge");
    let train = split.join("train.csv");
    let val = split.join("val.csv");
    let args = ["train", "--train", s(&train), "--val", s(&val), "--linear", "--lr", "1e300", "--lr-decay", "none"];
    assert_eq!(code(&[&args[..], &["--epochs", "2", "--out", s(&out)]].concat()), 6);
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("non-finite-loss"));
    assert!(m["finished_at"].is_string());
}

#[test]
fn rerun_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), "100");
    let first = dir.path().join("cooc");
    ok(&["cooc", "--data", s(&data), "--out", s(&first)]);
    let again = dir.path().join("again");
    ok(&["rerun", s(&first.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(fs::read(first.join("cooccurrence.csv")).unwrap(), fs::read(again.join("cooccurrence.csv")).unwrap());

    let mut text = fs::read_to_string(&data).unwrap();
    text.push_str(&text.lines().nth(1).unwrap().replacen('s', "t", 1));
    text.push('\n');
    fs::write(&data, text).unwrap();
    let out = anyclass(&["rerun", s(&first.join("manifest.json")), "--out", s(&dir.path().join("third"))]);
    assert_eq!(out.status.code(), Some(8));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.csv"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"synthetic": {"n_instances": 30, "n_classes": 4, "seed": 9}}"#).unwrap();
    let out = dir.path().join("a");
    ok(&["gen-data", "--config", s(&cfg), "--classes", "3", "--out", s(&out)]);
    let synth = &manifest(&out)["config"]["synthetic"];
    assert_eq!((synth["n_instances"].as_u64(), synth["n_classes"].as_u64()), (Some(30), Some(3)));
    assert_eq!(synth["seed"], 9);
    assert_eq!(synth["n_features"], 16);

    // a manifest is accepted as a config too
    let from_manifest = dir.path().join("b");
    ok(&["gen-data", "--config", s(&out.join("manifest.json")), "--out", s(&from_manifest)]);
    assert_eq!(fs::read(out.join("dataset.csv")).unwrap(), fs::read(from_manifest.join("dataset.csv")).unwrap());

    fs::write(&cfg, r#"{"synthetic": {"n_instance": 30}}"#).unwrap();
    assert_eq!(code(&["gen-data", "--config", s(&cfg), "--out", s(&dir.path().join("c"))]), 3);
}

#[test]
fn coco_preset_keeps_41_classes() {
    let dir = tempfile::tempdir().unwrap();
    let kept: Vec<String> = anyclass::data::COCO_RETAINED_CLASSES.iter().map(|c| c.to_string()).collect();
    let dropped: Vec<String> = ["person", "car", "bus", "truck"].iter().map(|c| c.to_string()).collect();
    let classes: Vec<String> = dropped.iter().chain(&kept).cloned().collect();
    let mut w = csv::Writer::from_path(dir.path().join("coco.csv")).unwrap();
    w.write_record(std::iter::once("id".to_string()).chain(classes.iter().cloned())).unwrap();
    // row 0: person only; row 1: person + dog; row 2: nothing
    for (id, present) in [("r0", vec!["person"]), ("r1", vec!["person", "dog"]), ("r2", vec![])] {
        let row = classes.iter().map(|c| if present.contains(&c.as_str()) { "1" } else { "0" });
        w.write_record(std::iter::once(id).chain(row)).unwrap();
    }
    w.flush().unwrap();

    let out = dir.path().join("f");
    ok(&["filter", "--data", s(&dir.path().join("coco.csv")), "--preset", "coco41", "--out", s(&out)]);
    let (header, rows) = csv_rows(&out.join("filtered.csv"));
    assert_eq!(&header[1..], &kept[..]);
    let positives = |r: &Vec<String>| r[1..].iter().filter(|v| *v == "1").count();
    assert_eq!(rows.iter().map(positives).collect::<Vec<_>>(), vec![0, 1, 0]);

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("filter_report.json")).unwrap()).unwrap();
    assert_eq!(report["remaining_classes"], 41);
    assert_eq!((report["negative_before"].as_u64(), report["negative_after"].as_u64()), (Some(1), Some(2)));
}

#[test]
fn group_split_keeps_groups_together() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("patients.csv");
    let mut text = String::from("id,patient,a,b\n");
    for i in 0..120 {
        text.push_str(&format!("i{i},p{},{},{}\n", i % 17, i % 2, (i / 3) % 2));
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("s");
    ok(&["split", "--data", s(&data), "--group-key", "patient", "--seed", "4", "--out", s(&out)]);

    let mut seen: BTreeMap<String, &str> = BTreeMap::new();
    let mut total = 0;
    for part in ["train", "val", "test"] {
        let (header, rows) = csv_rows(&out.join(format!("{part}.csv")));
        let g = header.iter().position(|h| h == "group").unwrap();
        for row in &rows {
            if let Some(prev) = seen.insert(row[g].clone(), part) {
                assert_eq!(prev, part, "group {} crosses partitions", row[g]);
            }
        }
        total += rows.len();
    }
    assert_eq!(total, 120);
    assert_eq!(seen.len(), 17);
}

#[test]
fn cooccurrence_counts_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "id,a,b\nx0,1,1\nx1,1,0\nx2,0,1\nx3,1,1\nx4,0,0\n").unwrap();
    let out = dir.path().join("c");
    ok(&["cooc", "--data", s(&data), "--out", s(&out)]);
    let (header, rows) = csv_rows(&out.join("cooccurrence.csv"));
    assert_eq!(header, ["class", "a", "b"]);
    assert_eq!(rows, [["a", "0", "2"], ["b", "2", "0"]]);
}

#[test]
fn surface_grid_has_resolution_squared_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u");
    ok(&["surface", "--case", "any", "--targets", "1,1", "--resolution", "7", "--out", s(&out)]);
    let (header, rows) = csv_rows(&out.join("surface.csv"));
    assert_eq!(header, ["p1", "p2", "value"]);
    assert_eq!(rows.len(), 49);
    // on the diagonal both present classes share one probability
    for r in rows.iter().filter(|r| r[0] == r[1]) {
        let (p, v): (f64, f64) = (r[0].parse().unwrap(), r[2].parse().unwrap());
        assert!((p - v).abs() < 1e-12);
    }
    assert_eq!(code(&["surface", "--targets", "1,2", "--out", s(&dir.path().join("v"))]), 3);
}

#[test]
fn ablation_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), "400");
    let split = dir.path().join("split");
    ok(&["split", "--data", s(&data), "--out", s(&split)]);
    let out = dir.path().join("a");
    let (train, val, test) = (split.join("train.csv"), split.join("val.csv"), split.join("test.csv"));
    ok(&[
        "ablate",
        "--train",
        s(&train),
        "--val",
        s(&val),
        "--test",
        s(&test),
        "--grid",
        "0.02,0.5",
        "--seeds",
        "3",
        "--epochs",
        "2",
        "--lr-decay",
        "none",
        "--out",
        s(&out),
    ]);
    let table = anyclass::trainer::AblationTable::read_csv(fs::File::open(out.join("ablation.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 9);
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    assert_eq!(buf, fs::read(out.join("ablation.csv")).unwrap());

    let (header, medians) = csv_rows(&out.join("ablation_medians.csv"));
    assert_eq!(header, ["variant", "lambda", "runs", "f1", "f2", "map", "f1_neg"]);
    let variants: HashSet<(String, String)> = medians.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    assert_eq!(medians.len(), 3);
    assert!(variants.contains(&("baseline".into(), String::new())));
    assert!(medians.iter().all(|r| r[2] == "3"));
}

#[test]
fn train_then_eval_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = generated(dir.path(), "400");
    let split = dir.path().join("split");
    ok(&["split", "--data", s(&data), "--out", s(&split)]);
    let model = dir.path().join("t");
    ok(&[
        "train",
        "--train",
        s(&split.join("train.csv")),
        "--val",
        s(&split.join("val.csv")),
        "--epochs",
        "4",
        "--lr-decay",
        "2:0.1",
        "--loss",
        "any_bce",
        "--out",
        s(&model),
    ]);
    let log: Value = serde_json::from_str(&fs::read_to_string(model.join("training_log.json")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 4);
    assert_eq!(log["epochs"][2]["learning_rate"].as_f64().unwrap(), 0.05 * 0.1);
    let (header, rows) = csv_rows(&model.join("training_log.csv"));
    assert_eq!(header.len(), 9);
    assert_eq!(rows.iter().filter(|r| r[8] == "1").count(), 1);

    let ciw = dir.path().join("ciw.csv");
    fs::write(&ciw, "class,weight\nc0,1\nc1,2\nc2,0.5\nc3,1\n").unwrap();
    let eval = dir.path().join("e");
    ok(&[
        "eval",
        "--model",
        s(&model.join("model.json")),
        "--data",
        s(&split.join("test.csv")),
        "--ciw-file",
        s(&ciw),
        "--out",
        s(&eval),
    ]);
    let report: Value = serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert!(report["f2_ciw"].is_f64(), "{report}");
    let (_, classes) = csv_rows(&eval.join("report_classes.csv"));
    assert_eq!(classes.len(), 4);
}
