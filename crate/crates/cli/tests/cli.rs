use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memeguard::schema::{load_dataset, BinaryLabel};

const TINY_CONFIG: &str = "max_response_len = 40\n[stage1]\nsteps = 10\n[stage2]\nsteps = 10\n[stage3]\nsteps = 2\nbatch_size = 2\ngroup_size = 3\n";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memeguard"));
    cmd.env_remove("MEMEGUARD_CONFIG");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn memeguard")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dataset(dir: &Path, n: usize) -> PathBuf {
    ok(
        dir,
        &[
            "gen-data",
            "--n",
            &n.to_string(),
            "--seed",
            "7",
            "--out",
            "d.jsonl",
        ],
    );
    ok(
        dir,
        &["split", "--in", "d.jsonl", "--ratio", "0.7", "--seed", "7"],
    );
    fs::write(dir.join("tiny.toml"), TINY_CONFIG).unwrap();
    dir.join("d.jsonl")
}

fn harmful(records: &[memeguard::MemeRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.label == BinaryLabel::Harmful)
        .count()
}

#[test]
fn gen_data_then_split_is_stratified() {
    let dir = tempfile::tempdir().unwrap();
    let d = dataset(dir.path(), 300);
    let all = load_dataset(&d).unwrap();
    let train = load_dataset(dir.path().join("d.train.jsonl")).unwrap();
    let test = load_dataset(dir.path().join("d.test.jsonl")).unwrap();
    assert_eq!(train.len() + test.len(), all.len());
    let h = harmful(&all);
    let nh = all.len() - h;
    let expect = |n: usize| (n as f64 * 0.7 + 0.5).floor() as usize;
    assert_eq!(harmful(&train), expect(h));
    assert_eq!(train.len() - harmful(&train), expect(nh));
}

#[test]
fn commands_are_reproducible_and_leave_inputs_alone() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        dataset(dir, 120);
        ok(
            dir,
            &[
                "train",
                "--config",
                "tiny.toml",
                "--train",
                "d.train.jsonl",
                "--test",
                "d.test.jsonl",
                "--out-dir",
                "run",
            ],
        );
    }
    for f in [
        "d.jsonl",
        "d.train.jsonl",
        "run/stage3.ckpt.json",
        "run/stage2.csv",
        "run/stage3.csv",
        "run/eval.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let before = fs::read(a.path().join("d.jsonl")).unwrap();
    ok(
        a.path(),
        &[
            "annotate", "--in", "d.jsonl", "--mode", "oracle", "--out", "o.jsonl",
        ],
    );
    ok(a.path(), &["verify", "--in", "d.jsonl", "--out", "v.jsonl"]);
    assert_eq!(fs::read(a.path().join("d.jsonl")).unwrap(), before);
}

#[test]
fn train_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 100);
    let out = bin()
        .current_dir(dir.path())
        .env("MEMEGUARD_CONFIG", "tiny.toml")
        .args([
            "train",
            "--stages",
            "1,2,3",
            "--train",
            "d.train.jsonl",
            "--out-dir",
            "run",
            "--log-rollouts",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "stage1.ckpt.json",
        "stage2.ckpt.json",
        "stage3.ckpt.json",
        "stage1.csv",
        "stage2.csv",
        "stage3.csv",
        "rollouts.jsonl",
        "manifest.json",
        "config.toml",
    ] {
        assert!(dir.path().join("run").join(f).is_file(), "{f} missing");
    }
    let stage3 = fs::read_to_string(dir.path().join("run/stage3.csv")).unwrap();
    assert_eq!(stage3.lines().count(), 3);
    let cfg = fs::read_to_string(dir.path().join("run/config.toml")).unwrap();
    assert!(
        cfg.contains("steps = 2"),
        "environment config was not applied"
    );
}

#[test]
fn stage3_without_stage2_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 60);
    let out = run(
        dir.path(),
        &[
            "train",
            "--config",
            "tiny.toml",
            "--stages",
            "1,3",
            "--train",
            "d.train.jsonl",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("stage-2"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), &["train", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(
            dir.path(),
            &["train", "--stages", "4", "--train", "x", "--out-dir", "y"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(dir.path(), &["kappa", "--ratings", "missing.csv"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn kappa_prints_four_decimals() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("u.csv"),
        "item,a,b,c\n1,x,x,x\n2,y,y,y\n3,x,x,x\n",
    )
    .unwrap();
    assert_eq!(ok(dir.path(), &["kappa", "--ratings", "u.csv"]), "1.0000\n");
    dataset(dir.path(), 200);
    ok(
        dir.path(),
        &[
            "annotate",
            "--in",
            "d.jsonl",
            "--mode",
            "mock",
            "--error-rate",
            "0",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(ok(dir.path(), &["kappa", "--ratings", "r.csv"]), "1.0000\n");
}

#[test]
fn verify_reports_analytic_rate() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 50);
    let out = ok(
        dir.path(),
        &["verify", "--in", "d.jsonl", "--error-rate", "0"],
    );
    assert!(out.contains("consistency_rate 1.0000"), "{out}");
    assert!(out.contains("analytic_consistency 1.0000"), "{out}");
}

fn sweep_csv(gammas: &[f64], alpha_share: f64) -> String {
    let mut s = String::from(
        "seed,alpha,beta,gamma,accuracy,precision,recall,f1,macro_f1,patience_warnings\n",
    );
    for (i, g) in gammas.iter().enumerate() {
        let rest = 1.0 - g;
        s.push_str(&format!(
            "7,{:.4},{:.4},{g:.4},0.9000,0.8000,0.7000,0.{i}000,0.8000,{}\n",
            rest * alpha_share,
            rest * (1.0 - alpha_share),
            usize::from(*g == 1.0)
        ));
    }
    s
}

#[test]
fn report_tables_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    fs::create_dir_all(runs.join("full")).unwrap();
    let eval = r#"{"n":4,"classification":{"counts":{"tp":1,"tn":1,"fp":1,"fn":1},"accuracy":0.5,"precision":0.5,"recall":0.5,"f1":0.5,"macro_precision":0.5,"macro_recall":0.5,"macro_f1":0.5,"per_class":[]}}"#;
    fs::write(runs.join("full/eval.json"), eval).unwrap();
    ok(dir.path(), &["report", "--run-dir", "runs"]);
    let table = fs::read_to_string(runs.join("table.csv")).unwrap();
    assert_eq!(
        table,
        "run,accuracy,precision,recall,f1,macro_f1\nfull,0.5000,0.5000,0.5000,0.5000,0.5000\n"
    );

    fs::write(
        runs.join("sweep.csv"),
        sweep_csv(&[1.0, 0.2, 0.6, 0.4, 0.8], 0.375),
    )
    .unwrap();
    let mut ab = String::from(
        "seed,alpha,beta,gamma,accuracy,precision,recall,f1,macro_f1,patience_warnings\n",
    );
    for a in [0.35, 0.05, 0.2] {
        ab.push_str(&format!(
            "7,{a:.4},{:.4},0.6000,0.9,0.8,0.7,0.6,0.8,0\n",
            0.4 - a
        ));
    }
    fs::write(runs.join("ab.csv"), ab).unwrap();
    ok(dir.path(), &["report", "--run-dir", "runs"]);
    let gamma = fs::read_to_string(runs.join("gamma_sweep.csv")).unwrap();
    let lines: Vec<&str> = gamma.lines().collect();
    assert_eq!(lines.len(), 6);
    let keys: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(keys, ["0.2000", "0.4000", "0.6000", "0.8000", "1.0000"]);
    let ab = fs::read_to_string(runs.join("alpha_beta_sweep.csv")).unwrap();
    assert_eq!(ab.lines().nth(1).unwrap().split(',').next(), Some("0.0500"));

    let snapshot: Vec<Vec<u8>> = [
        "table.csv",
        "table.md",
        "gamma_sweep.csv",
        "alpha_beta_sweep.csv",
    ]
    .iter()
    .map(|f| fs::read(runs.join(f)).unwrap())
    .collect();
    ok(dir.path(), &["report", "--run-dir", "runs"]);
    for (f, before) in [
        "table.csv",
        "table.md",
        "gamma_sweep.csv",
        "alpha_beta_sweep.csv",
    ]
    .iter()
    .zip(snapshot)
    {
        assert_eq!(
            fs::read(runs.join(f)).unwrap(),
            before,
            "{f} changed on re-emission"
        );
    }
}

#[test]
fn report_without_artifacts_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("empty")).unwrap();
    assert_eq!(
        run(dir.path(), &["report", "--run-dir", "empty"])
            .status
            .code(),
        Some(1)
    );
}
