use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use pat_ubp::io::config::write_scenario;
use pat_ubp::io::dataset::Dataset;
use pat_ubp::io::{patb, pgm};
use pat_ubp::{Scenario, ScenarioLabel};

fn patlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patlearn"))
        .args(args)
        .output()
        .expect("run patlearn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    write_scenario(&path, &Scenario::standard(ScenarioLabel::LimitedSparse, 16, 4, 60).unwrap()).unwrap();
    path
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn invalid_flags_exit_with_usage_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cases: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--out", s(&out), "--count", "x"],
        vec!["gen-data", "--out", s(&out), "--count", "2"],
        vec!["train", "--out", s(&out), "--train", s(&out), "--bogus"],
        vec!["reconstruct", "--out", s(&out)],
        vec!["evaluate", "--out", s(&out)],
        vec!["export-weights", "--out", s(&out), "--weights", "w.patb", "--detector", "-1"],
        vec!["phantom", "--out", s(&out), "--seed", "abc"],
        vec!["no-such-verb"],
    ];
    for args in cases {
        let o = patlearn(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
        assert!(!out.exists());
    }
    assert_eq!(patlearn(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_data_is_deterministic_and_shaped_by_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("desk.cfg");
    write_scenario(&cfg, &Scenario::standard(ScenarioLabel::LimitedSparse, 64, 20, 400).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = patlearn(&["gen-data", "--scenario", s(&cfg), "--out", s(d), "--count", "3", "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(listing(&a), listing(&b));
    let ds = Dataset::open(&a).unwrap();
    assert_eq!(ds.len(), 3);
    for i in 0..3 {
        assert_eq!(patb::read(&ds.phantom_path(i)).unwrap().dims, vec![64, 64]);
        assert_eq!(patb::read(&ds.data_path(i)).unwrap().dims, vec![400, 20]);
    }
}

#[test]
fn gen_data_with_zero_count_writes_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_scenario(dir.path());
    let out = dir.path().join("empty");
    let o = patlearn(&["gen-data", "--scenario", s(&cfg), "--out", s(&out), "--count", "0"]);
    assert!(o.status.success());
    let names: Vec<String> = listing(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, vec!["manifest.txt", "scenario.cfg"]);
    assert_eq!(Dataset::open(&out).unwrap().len(), 0);
}

fn make_dataset(dir: &Path, name: &str, count: &str, seed: &str) -> PathBuf {
    let cfg = tiny_scenario(dir);
    let out = dir.join(name);
    let o = patlearn(&["gen-data", "--scenario", s(&cfg), "--out", s(&out), "--count", count, "--seed", seed]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn training_writes_checkpoints_log_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let train = make_dataset(dir.path(), "train", "4", "0");
    let held = make_dataset(dir.path(), "held", "2", "100");

    let zero = dir.path().join("zero");
    let o = patlearn(&["train", "--train", s(&train), "--out", s(&zero), "--epochs", "0", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let checkpoints: Vec<String> = listing(&zero)
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| n.starts_with("weights_epoch"))
        .collect();
    assert_eq!(checkpoints, vec!["weights_epoch0000.patb"]);
    let w0 = patb::read(&zero.join("weights_epoch0000.patb")).unwrap();
    assert_eq!(w0.dims, vec![16, 16, 4]);
    assert!(w0.data.iter().all(|v| *v == 1.0));

    let run = dir.path().join("run");
    let o = patlearn(&[
        "train", "--train", s(&train), "--heldout", s(&held), "--out", s(&run),
        "--epochs", "100", "--checkpoint-every", "25", "--lr", "0.01", "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(run.join("run.log")).unwrap();
    let epochs: Vec<usize> = log.lines().map(|l| l.split(", ").next().unwrap().parse().unwrap()).collect();
    assert_eq!(epochs, (1..=100).collect::<Vec<_>>());
    assert!(log.lines().all(|l| l.split(", ").count() == 5));
    for e in [0, 25, 50, 75, 100] {
        assert!(run.join(format!("weights_epoch{e:04}.patb")).exists());
    }

    let resumed = dir.path().join("resumed");
    let init = format!("resume:{}", s(&run.join("weights.patb")));
    let o = patlearn(&["train", "--train", s(&train), "--out", s(&resumed), "--epochs", "0", "--init", &init, "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(resumed.join("weights.patb")).unwrap(),
        fs::read(run.join("weights.patb")).unwrap()
    );
}

#[test]
fn divergent_training_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let train = make_dataset(dir.path(), "train", "3", "0");
    let o = patlearn(&["train", "--train", s(&train), "--out", s(&dir.path().join("r")), "--epochs", "50", "--lr", "1e12", "--quiet"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning rate"));
}

#[test]
fn reconstruct_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_scenario(dir.path());
    let zero_data = dir.path().join("zero.patb");
    patb::write_array2(&zero_data, &Array2::zeros((60, 4))).unwrap();
    let rec = dir.path().join("rec");
    let o = patlearn(&["reconstruct", "--scenario", s(&cfg), "--data", s(&zero_data), "--ones", "--out", s(&rec)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = patb::read(&dir.path().join("rec.patb")).unwrap();
    assert!(img.data.iter().all(|v| *v == 0.0));
    assert!(pgm::read(&dir.path().join("rec.pgm")).unwrap().iter().all(|p| *p == 0));

    // weights with the wrong number of detectors
    let bad = dir.path().join("bad.patb");
    patb::write_array3(&bad, &ndarray::Array3::ones((16, 16, 5))).unwrap();
    let o = patlearn(&["reconstruct", "--scenario", s(&cfg), "--data", s(&zero_data), "--weights", s(&bad), "--out", s(&rec)]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("[16, 16, 4]") && msg.contains("[16, 16, 5]"), "{msg}");

    let o = patlearn(&["reconstruct", "--scenario", s(&cfg), "--data", "missing.patb", "--ones", "--out", s(&rec)]);
    assert_eq!(o.status.code(), Some(3));

    let ones = dir.path().join("ones.patb");
    patb::write_array3(&ones, &ndarray::Array3::ones((16, 16, 4))).unwrap();
    let slice = dir.path().join("slice.pgm");
    let o = patlearn(&["export-weights", "--weights", s(&ones), "--detector", "3", "--out", s(&slice)]);
    assert!(o.status.success());
    let px = pgm::read(&slice).unwrap();
    assert!(px.iter().all(|p| *p == px[[0, 0]]));
    assert_eq!(pgm::read_normalization(&slice).unwrap().decode(px[[0, 0]]), 1.0);
    let o = patlearn(&["export-weights", "--weights", s(&ones), "--detector", "4", "--out", s(&dir.path().join("x.pgm"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.pgm").exists());
}

#[test]
fn evaluate_with_identity_weights_duplicates_ubp_column() {
    let dir = tempfile::tempdir().unwrap();
    let test = make_dataset(dir.path(), "test", "3", "500");
    let ones = dir.path().join("ones.patb");
    patb::write_array3(&ones, &ndarray::Array3::ones((16, 16, 4))).unwrap();
    let csv = dir.path().join("report.csv");
    let o = patlearn(&["evaluate", "--test", s(&test), "--weights", s(&ones), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("scenario,method,sample,rel_error"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for k in 0..3 {
        assert_eq!(rows[k][1], "UBP");
        assert_eq!(rows[k + 3][1], "weighted-UBP");
        assert_eq!(rows[k][2], rows[k + 3][2]);
        assert_eq!(rows[k][3], rows[k + 3][3]);
    }
    assert!(fs::read_to_string(dir.path().join("report.txt")).unwrap().contains("C_limited_sparse"));
}

#[test]
fn phantom_verb_writes_image_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_scenario(dir.path());
    let out = dir.path().join("ph.patb");
    let o = patlearn(&["phantom", "--scenario", s(&cfg), "--seed", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(patb::read(&out).unwrap().dims, vec![16, 16]);
    assert!(dir.path().join("ph.pgm").exists());
    assert!(dir.path().join("ph.pgm.norm").exists());
}
