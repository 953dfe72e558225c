use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flockdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flockdet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = flockdet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic set: 10 pairs + 20 lone walkers, 60 s long.
fn prepare(dir: &Path, l: &str) -> String {
    ok(&[
        "prepare", "--flocks", "10", "--singletons", "20", "-L", l, "--seed", "3", "--out", p(dir),
    ])
}

#[test]
fn prepare_summary_matches_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let summary = prepare(dir.path(), "10");
    assert_eq!(summary, "L,total,training,excluded\n10,20,16,0\n");
    for f in ["summary.csv", "bins.csv", "bins.svg", "pairs/pairs.csv", "pairs/pairs_meta.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(fs::read_dir(dir.path().join("scenes")).unwrap().count() > 0);
}

#[test]
fn prepare_with_oversized_l_is_empty_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = flockdet(&["prepare", "--flocks", "2", "--singletons", "4", "-L", "100000", "--out", p(dir.path())]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.ends_with("100000,0,0,8\n"), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty dataset"));
}

#[test]
fn synth_writes_parseable_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--flocks", "3", "--singletons", "4", "--out", p(dir.path())]);
    let d = dir.path();
    // the written files feed straight back into prepare
    let s = ok(&[
        "prepare",
        "--data",
        p(&d.join("trajectories.csv")),
        "--groups",
        p(&d.join("groups.txt")),
        "-L",
        "10",
        "--out",
        p(&d.join("prep")),
    ]);
    assert_eq!(s, "L,total,training,excluded\n10,6,5,0\n");
}

fn train(dir: &Path, model: &Path, epochs: &str) -> String {
    ok(&[
        "train", "--pairs", p(dir), "--arch", "lstm", "--hidden", "8", "--batch", "8", "--epochs", epochs,
        "--seed", "1", "--out", p(model),
    ])
}

#[test]
fn train_is_deterministic_and_detect_reports() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "10");
    let m1 = dir.path().join("m1.ckpt");
    let m2 = dir.path().join("m2.ckpt");
    let a = train(dir.path(), &m1, "5");
    let b = train(dir.path(), &m2, "5");
    let row = |s: &str| s.lines().nth(1).unwrap().split(',').take(6).collect::<Vec<_>>().join(",");
    assert_eq!(row(&a), row(&b));
    assert!(a.starts_with("arch,L,batch,hidden,seed,accuracy,wall_time_s,epochs_run\nlstm,10,8,8,1,"));
    assert!(dir.path().join("m1.ckpt.history.csv").exists());

    let report = dir.path().join("flocks.jsonl");
    let hist = ok(&[
        "detect", "--model", p(&m1), "--scenes", p(&dir.path().join("scenes")), "--threshold", "1.01",
        "--out", p(&report), "--svg-dir", p(&dir.path().join("svg")),
    ]);
    assert_eq!(hist.trim(), "{}");
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.lines().all(|l| !l.contains("\"size\"")));
    assert_eq!(text.lines().last().unwrap(), r#"{"histogram": {}}"#);
    assert!(fs::read_dir(dir.path().join("svg")).unwrap().count() > 0);
}

#[test]
fn untrained_checkpoint_can_be_saved() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "10");
    let m = dir.path().join("zero.ckpt");
    let out = train(dir.path(), &m, "0");
    let fields: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[7], "0");
    let acc: f64 = fields[5].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(m.exists());
}

#[test]
fn detect_on_empty_scene_dir() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "10");
    let m = dir.path().join("m.ckpt");
    train(dir.path(), &m, "0");
    let empty = dir.path().join("none");
    fs::create_dir_all(&empty).unwrap();
    let out = dir.path().join("r.jsonl");
    let hist = ok(&["detect", "--model", p(&m), "--scenes", p(&empty), "--out", p(&out)]);
    assert_eq!(hist.trim(), "{}");
    assert_eq!(fs::read_to_string(out).unwrap(), "{\"histogram\": {}}\n");
}

#[test]
fn validate_prints_metrics_and_guards_l() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "10");
    let m = dir.path().join("m.ckpt");
    train(dir.path(), &m, "3");
    let s = ok(&["validate", "--model", p(&m), "--flocks", "10", "--singletons", "20", "--seed", "3"]);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "scenes,groups,exact_match,precision,recall,f1,flags");
    assert!(lines[2].starts_with('{') && lines[2].ends_with('}'));

    let two = ok(&["validate", "--model", p(&m), "--flocks", "10", "--singletons", "20", "--seed", "3", "--windows", "2"]);
    assert_eq!(two.lines().next(), Some(lines[0]));

    let none = ok(&["validate", "--model", p(&m), "--flocks", "0", "--singletons", "6"]);
    assert!(none.lines().nth(1).unwrap().contains("empty_truth"));

    let bad = flockdet(&["validate", "--model", p(&m), "-L", "12", "--flocks", "2", "--singletons", "2"]);
    assert_eq!(bad.status.code(), Some(3));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("10") && err.contains("12"), "{err}");
}

#[test]
fn grid_of_one_cell_and_replot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    ok(&[
        "grid", "--flocks", "10", "--singletons", "20", "--seq-lens", "10", "--batches", "8", "--hiddens", "8",
        "--archs", "rnn", "--epochs", "3", "--out", p(&out),
    ]);
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    let acc = fs::read(out.join("accuracy.svg")).unwrap();
    let time = fs::read(out.join("runtime.svg")).unwrap();
    fs::remove_file(out.join("accuracy.svg")).unwrap();
    ok(&["grid", "--replot", "--out", p(&out)]);
    assert_eq!(fs::read(out.join("accuracy.svg")).unwrap(), acc);
    assert_eq!(fs::read(out.join("runtime.svg")).unwrap(), time);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seq-len = 10\nflocks = 10\nsingletons = 20\nseed = 3\n").unwrap();
    let a = ok(&["prepare", "--config", p(&cfg), "--out", p(&dir.path().join("a"))]);
    assert_eq!(a, "L,total,training,excluded\n10,20,16,0\n");
    let b = ok(&["prepare", "--config", p(&cfg), "-L", "12", "--out", p(&dir.path().join("b"))]);
    assert!(b.contains("\n12,"));
}

#[test]
fn exit_codes() {
    assert_eq!(flockdet(&["prepare", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(flockdet(&["train", "--pairs", "/nonexistent", "--arch", "gru"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path(), "10");
    let bad_arch = flockdet(&["train", "--pairs", p(dir.path()), "--arch", "gru"]);
    assert_eq!(bad_arch.status.code(), Some(2));
    let bad_heads = flockdet(&["train", "--pairs", p(dir.path()), "--hidden", "30", "--heads", "4"]);
    assert_eq!(bad_heads.status.code(), Some(2));
}
