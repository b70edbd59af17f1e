//! End-to-end tests of the `xlner` binary: the convert → train → tag → eval
//! pipeline plus the exit-code contract.

mod common;

use std::path::Path;
use std::process::Command;

use common::{synth_corpus, synth_embeddings, FILL_A, FILL_B};
use xlner::corpus::write_conll;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xlner"))
}

fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p
}

struct Setup {
    _dir: tempfile::TempDir,
    config: std::path::PathBuf,
    a_train: std::path::PathBuf,
    root: std::path::PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let a_train = write(&root, "a.train", &write_conll(&synth_corpus("a", FILL_A, 20, 1, "t.a")));
    write(&root, "a.dev", &write_conll(&synth_corpus("a", FILL_A, 6, 1, "d.a")));
    write(&root, "b.train", &write_conll(&synth_corpus("b", FILL_B, 20, 1, "t.b")));
    write(&root, "b.dev", &write_conll(&synth_corpus("b", FILL_B, 6, 1, "d.b")));
    write(&root, "emb.txt", &synth_embeddings(1));
    let config = write(
        &root,
        "run.conf",
        &format!(
            "[run]\nseed = 1\nscheme = iobes\n\n\
             [lang.a]\ntrain = {r}/a.train\ndev = {r}/a.dev\n\n\
             [lang.b]\ntrain = {r}/b.train\ndev = {r}/b.dev\n\n\
             [embeddings]\nshared = {r}/emb.txt\n\n\
             [sharing]\nfilters = true\ndecoder = true\nshared_embedding_space = true\n\n\
             [hyperparams]\nlstm_size = 4\nmax_filter_width = 2\nfilters_per_width = 2\n\
             learning_rate = 0.2\nmax_epochs = 3\npatience = 3\n",
            r = root.display()
        ),
    );
    Setup { _dir: dir, config, a_train, root }
}

#[test]
fn train_tag_eval_pipeline() {
    let s = setup();
    let ckpt = s.root.join("model.ckpt");
    let out = bin()
        .args(["train", "--config"])
        .arg(&s.config)
        .arg("--checkpoint")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best_dev_f1="), "no report on stdout: {stdout}");
    assert!(ckpt.exists());

    let tagged = s.root.join("a.tagged");
    let out = bin()
        .args(["tag", "--checkpoint"])
        .arg(&ckpt)
        .arg("--input")
        .arg(&s.a_train)
        .arg("--output")
        .arg(&tagged)
        .args(["--lang", "a"])
        .output()
        .unwrap();
    assert!(out.status.success(), "tag failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&tagged).unwrap();
    // predicted column appended after the gold column
    assert!(text.lines().next().unwrap().split_whitespace().count() == 3);

    let out = bin()
        .args(["eval", "--gold"])
        .arg(&s.a_train)
        .arg("--pred")
        .arg(&tagged)
        .args(["--scheme", "iobes", "--pred-columns", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("f1="), "no f1 in eval output: {stdout}");
}

#[test]
fn convert_round_trip() {
    let s = setup();
    let iobes = s.root.join("a.iobes");
    let back = s.root.join("a.iob1");
    // synth corpora are IOBES; IOBES -> IOB1 -> IOBES preserves the file
    let out = bin()
        .args(["convert", "--input"])
        .arg(&s.a_train)
        .arg("--output")
        .arg(&iobes)
        .args(["--from", "iobes", "--to", "iob1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["convert", "--input"])
        .arg(&iobes)
        .arg("--output")
        .arg(&back)
        .args(["--from", "iob1", "--to", "iobes"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(&s.a_train).unwrap(),
        std::fs::read_to_string(&back).unwrap()
    );
}

#[test]
fn missing_path_exits_1() {
    let s = setup();
    let config = write(
        &s.root,
        "bad.conf",
        "[run]\nseed = 1\n[lang.a]\ntrain = /nonexistent/x\ndev = /nonexistent/y\n",
    );
    let out = bin().args(["train", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_data_exits_2() {
    let s = setup();
    let bad = write(&s.root, "bad.conll", "word NOT-A-TAG\n");
    let out = bin()
        .args(["convert", "--input"])
        .arg(&bad)
        .arg("--output")
        .arg(s.root.join("out.conll"))
        .args(["--from", "iobes", "--to", "iob1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn divergence_exits_3() {
    let s = setup();
    let out = bin()
        .args(["train", "--config"])
        .arg(&s.config)
        .args(["--learning-rate", "1e300", "--max-epochs", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_emits_two_records_per_fraction() {
    let s = setup();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&s.config)
        .args(["--fractions", "0.5,1.0", "--max-epochs", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let records: Vec<&str> = stdout.lines().filter(|l| l.starts_with("fraction=")).collect();
    assert_eq!(records.len(), 4, "{stdout}");
    assert!(records.iter().any(|l| l.contains("setting=mono")));
    assert!(records.iter().any(|l| l.contains("setting=joint")));
}

#[test]
fn grid_reports_points_and_best() {
    let s = setup();
    let config = std::fs::read_to_string(&s.config).unwrap()
        + "\n[grid]\nlearning_rates = 0.1,0.3\n";
    let config = write(&s.root, "grid.conf", &config);
    let out = bin()
        .args(["grid", "--config"])
        .arg(&config)
        .args(["--max-epochs", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("dev_f1=")).count(), 2, "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("best:")), "{stdout}");
}

#[test]
fn flags_override_config() {
    let s = setup();
    // seed override changes the report; same seed reproduces it byte-for-byte
    let run = |seed: &str| {
        let out = bin()
            .args(["train", "--config"])
            .arg(&s.config)
            .args(["--seed", seed, "--max-epochs", "2"])
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    let a = run("5");
    let b = run("5");
    let c = run("6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}
