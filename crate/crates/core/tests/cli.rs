use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fdgen::env::FeasibilityGrid;
use fdgen::models::Checkpoint;
use fdgen::trainer::{Profile, TrainConfig};

fn fdgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdgen")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(dir: &Path, seed: &str, threads: &str) -> Output {
    fdgen(&[
        "--threads", threads, "train", "--env", "bimodal1d", "--divergence", "fkl", "--seed", seed, "--steps", "60",
        "--set", "N=16", "--set", "M=32", "--set", "K=4", "--set", "prefill=300", "--set", "hidden=16,16",
        "--set", "checkpoint_every=25", "--out", path(dir),
    ])
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fdgen(&["train"])), 2, "missing --out");
    assert_eq!(code(&fdgen(&["frobnicate"])), 2);
    assert_eq!(code(&fdgen(&["train", "--set", "N", "--out", path(dir.path())])), 2);
    assert_eq!(code(&fdgen(&["train", "--set", "N=3", "--out", path(dir.path())])), 2, "M != m * N");
    assert_eq!(code(&fdgen(&["train", "--env", "maze", "--out", path(dir.path())])), 2);
    assert_eq!(code(&fdgen(&["oracle", "--resolution", "4,4", "--out", path(&dir.path().join("g"))])), 2);
    assert_eq!(code(&fdgen(&["--help"])), 0);
}

#[test]
fn sparse_prefill_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = fdgen(&[
        "train", "--steps", "1", "--set", "prefill=1", "--set", "prefill_budget=0", "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = train_small(&run, "3", "1");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.txt", "checkpoint.bin", "log.csv", "timing.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 61);
    let ck = Checkpoint::decode(&fs::read(run.join("checkpoint.bin")).unwrap()).unwrap();
    assert_eq!(ck.step, 60);
    let cfg = TrainConfig::from_text(&fs::read_to_string(run.join("config.txt")).unwrap()).unwrap();
    assert_eq!((cfg.n, cfg.big_m, cfg.seed), (16, 32, 3));

    let report = dir.path().join("report");
    let ck_path = run.join("checkpoint.bin");
    let out = fdgen(&[
        "eval", "--checkpoint", path(&ck_path), "--states", "8", "--actions", "64", "--action-opt", "0.1", "--out",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(csv.starts_with("shape,rank,share,failure,accuracy\n"));
    let summary = fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(summary.contains("FKL*"), "{summary}");

    let bad = fdgen(&["eval", "--checkpoint", path(&ck_path), "--states", "0", "--out", path(&report)]);
    assert_eq!(code(&bad), 2);

    let heat = dir.path().join("heat.txt");
    let out = fdgen(&["plotgrid", "--checkpoint", path(&ck_path), "--samples", "500", "--out", path(&heat)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&heat).unwrap();
    assert!(text.starts_with("FDHEAT 1\n"));
    let counts: usize = text
        .lines()
        .skip_while(|l| *l != "counts")
        .skip(1)
        .take_while(|l| *l != "feasible")
        .flat_map(|l| l.split_whitespace().map(|v| v.parse::<usize>().unwrap()))
        .sum();
    assert_eq!(counts, 500);

    let missing = fdgen(&["eval", "--checkpoint", path(&dir.path().join("nope.bin")), "--out", path(&report)]);
    assert_ne!(code(&missing), 0);
}

#[test]
fn identical_runs_hash_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&train_small(&a, "5", "1")), 0);
    assert_eq!(code(&train_small(&b, "5", "2")), 0);
    assert_eq!(code(&train_small(&c, "6", "1")), 0);
    for f in ["config.txt", "checkpoint.bin", "log.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("log.csv")).unwrap(), fs::read(c.join("log.csv")).unwrap());
}

#[test]
fn reference_profile_flag() {
    let dir = tempfile::tempdir().unwrap();
    // Zero steps still resolves and writes the config.
    let out = fdgen(&[
        "train", "--profile", "paper", "--env", "grasp2d", "--steps", "0", "--set", "prefill=500", "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = TrainConfig::from_text(&fs::read_to_string(dir.path().join("config.txt")).unwrap()).unwrap();
    let mut want = TrainConfig::new(Profile::Paper, fdgen::env::EnvKind::Grasp2d, fdgen::divergence::DivergenceKind::Js);
    want.prefill = 500;
    want.total_steps = 0;
    assert_eq!(cfg, want);
}

#[test]
fn oracle_dump_reports_five_modes() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("h.grid");
    let csv = dir.path().join("h.csv");
    let out = fdgen(&["oracle", "--shape", "H", "--resolution", "32,32,16", "--csv", path(&csv), "--out", path(&dump)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (grid, modes) = FeasibilityGrid::read_dump(&fs::read(&dump).unwrap()).unwrap();
    assert_eq!(grid.dims(), [32, 32, 16]);
    let full = dir.path().join("full.grid");
    assert_eq!(code(&fdgen(&["oracle", "--shape", "H", "--out", path(&full)])), 0);
    let (_, full_modes) = FeasibilityGrid::read_dump(&fs::read(&full).unwrap()).unwrap();
    assert_eq!(full_modes, 5);
    assert!(modes >= 1);
    let rows = fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(rows, grid.len() + 1);
}

#[test]
fn selftest_passes() {
    let out = fdgen(&["selftest"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.contains("PASS")).count() >= 8, "{text}");
}
