use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dolores");

/// 60 entities in 6 communities, 6 relations with two category prefixes.
fn write_fixture(dir: &Path, labeled: bool) {
    let mut triples = Vec::new();
    for h in 0..60usize {
        for k in 1..=4 {
            let t = (h + 6 * k) % 60;
            let r = (h * 7 + k) % 6;
            triples.push(format!("e{h}\t/g{}/r{r}\te{t}", r / 3));
        }
    }
    let (train, rest) = triples.split_at(200);
    let (valid, test) = rest.split_at(20);
    let render = |xs: &[String], neg_shift: Option<usize>| {
        let mut out = String::new();
        for (i, x) in xs.iter().enumerate() {
            match neg_shift {
                None => out.push_str(&format!("{x}\n")),
                Some(s) => {
                    let f: Vec<&str> = x.split('\t').collect();
                    out.push_str(&format!("{x}\t1\n"));
                    out.push_str(&format!("{}\t{}\te{}\t-1\n", f[0], f[1], (i * 11 + s) % 60));
                }
            }
        }
        out
    };
    fs::write(dir.join("train.tsv"), render(train, None)).unwrap();
    let shift = |s| labeled.then_some(s);
    fs::write(dir.join("valid.tsv"), render(valid, shift(1))).unwrap();
    fs::write(dir.join("test.tsv"), render(test, shift(2))).unwrap();
}

const SMALL: &[&str] = &[
    "--train", "train.tsv", "--valid", "valid.tsv", "--test", "test.tsv", "--out", "out", "--layers", "2", "--hidden",
    "12", "--proj", "6", "--entity-dim", "6", "--relation-dim", "6", "--batch", "32", "--epochs", "2", "--walks-per-node",
    "2", "--walk-length", "9", "--scorer-epochs", "2", "--seed", "3",
];

fn run(dir: &Path, sub: &str, extra: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .arg(sub)
        .args(SMALL)
        .args(extra)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, sub: &str, extra: &[&str]) -> String {
    let out = run(dir, sub, extra);
    assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn walk_creates_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), false);
    ok(dir.path(), "walk", &[]);
    let corpus = fs::read_to_string(dir.path().join("out/corpus.txt")).unwrap();
    assert_eq!(corpus.lines().count(), 120);
    assert!(corpus.lines().all(|l| l.split(' ').count() <= 9));
}

#[test]
fn zero_epochs_checkpoints_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), false);
    ok(dir.path(), "walk", &[]);
    ok(dir.path(), "train", &["--epochs", "0", "--precision", "f64"]);
    let ckpt = fs::read(dir.path().join("out/model.ckpt")).unwrap();
    assert_eq!(&ckpt[..8], b"DOLORESK");
    assert_eq!(fs::read_to_string(dir.path().join("out/loss.tsv")).unwrap(), "epoch\tloss\n");
}

#[test]
fn grad_check_reports_small_error() {
    let out = Command::new(BIN).arg("grad-check").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("max relative error")).unwrap();
    let value: f64 = line.split(' ').nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{line}");
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = Command::new(BIN).arg("fly").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn failures_are_one_line_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN).current_dir(dir.path()).arg("walk").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("`train`"), "{err}");

    fs::write(dir.path().join("bad.cfg"), "walklen = 21\n").unwrap();
    let out = Command::new(BIN)
        .current_dir(dir.path())
        .args(["walk", "--config", "bad.cfg"])
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stderr).unwrap().contains("walklen"));
}

fn full_run(dir: &Path, threads: &str) -> Vec<Vec<u8>> {
    write_fixture(dir, false);
    for sub in ["ingest", "walk", "train", "export", "eval-link"] {
        ok(dir, sub, &["--threads", threads]);
    }
    ["corpus.txt", "model.ckpt", "dolores.entities.vec", "link_metrics.tsv", "link_ranks.tsv"]
        .iter()
        .map(|f| fs::read(dir.join("out").join(f)).unwrap())
        .collect()
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = full_run(a.path(), "1");
    let second = full_run(b.path(), "3");
    assert!(first == second, "artifacts differ between runs");
    let metrics = String::from_utf8(first[3].clone()).unwrap();
    assert_eq!(metrics.lines().count(), 9);
    assert!(metrics.lines().all(|l| l.split('\t').count() == 3));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), false);
    fs::write(dir.path().join("run.cfg"), "walks-per-node = 1  # one walk each\nwalk_length = 5\n").unwrap();
    let walk = |extra: &[&str]| {
        let out = Command::new(BIN)
            .current_dir(dir.path())
            .args(["walk", "--config", "run.cfg", "--train", "train.tsv", "--out", "out"])
            .args(extra)
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read_to_string(dir.path().join("out/corpus.txt")).unwrap()
    };
    let corpus = walk(&[]);
    assert_eq!(corpus.lines().count(), 60);
    assert!(corpus.lines().all(|l| l.split(' ').count() <= 5));
    // the flag beats the file key
    assert_eq!(walk(&["--walks-per-node", "2"]).lines().count(), 120);
}

#[test]
fn classification_and_layered_pathways() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), true);
    for sub in ["walk", "train", "export"] {
        ok(dir.path(), sub, &[]);
    }
    let text = ok(dir.path(), "eval-triple", &[]);
    let acc: f64 = text.split(' ').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc), "{text}");
    assert!(fs::read_to_string(dir.path().join("out/classification.tsv")).unwrap().lines().count() > 1);

    let table = ok(dir.path(), "eval-link", &["--learn-lambda", "true", "--eval-split", "valid", "--dim", "10"]);
    assert!(table.contains("MRR"));
    let out = run(dir.path(), "eval-triple", &["--valid", "train.tsv"]);
    assert!(!out.status.success());
}
