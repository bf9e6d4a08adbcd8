use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use xlalign::checkpoint::load_checkpoint;
use xlalign::trainer::{init_model, TrainConfig};

fn xlalign(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlalign"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = xlalign(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_corpus(dir: &Path) {
    ok(
        dir,
        &[
            "synth", "--seed", "3", "--out", "d", "--n", "60", "--split", "40",
        ],
    );
}

#[test]
fn every_subcommand_documents_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    let expect: [(&str, &[&str]); 6] = [
        ("synth", &["--preset", "--seed", "--out", "--split"]),
        (
            "train",
            &[
                "--pairs", "--mode", "--alpha", "--n-neg", "--lambda", "--kappa", "--lr",
                "--batch", "--steps", "--seed", "--layers", "--out", "--clip", "--resume",
            ],
        ),
        (
            "mine",
            &[
                "--features-src",
                "--features-trg",
                "--k",
                "--margin",
                "--threshold",
                "--workers",
                "--out",
            ],
        ),
        (
            "eval",
            &[
                "--gold",
                "--mined",
                "--model",
                "--task",
                "--threshold",
                "--layers",
            ],
        ),
        ("sweep", &["--config", "--seed", "--out"]),
        ("inspect", &["--model"]),
    ];
    for (cmd, flags) in expect {
        let out = ok(dir.path(), &[cmd, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn zero_step_training_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    ok(
        dir.path(),
        &[
            "train",
            "--mode",
            "supervised",
            "--pairs",
            "d/train.s.alnf",
            "d/train.t.alnf",
            "--out",
            "m.ckpt",
            "--steps",
            "0",
            "--seed",
            "11",
            "--batch",
            "8",
        ],
    );
    let ck = load_checkpoint(dir.path().join("m.ckpt")).unwrap();
    let cfg = TrainConfig::supervised(11);
    assert_eq!(ck.model, init_model(&cfg, 4, 32).unwrap());
    assert_eq!(ck.state.unwrap().step, 0);
    let trace = fs::read_to_string(dir.path().join("m.ckpt.loss.csv")).unwrap();
    assert_eq!(trace, "step,L_disc,L_adv,L_cycle,L_total\n");
}

#[test]
fn missing_gold_names_the_path_with_io_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.tsv"), "0\t0\t1.0\n").unwrap();
    let out = xlalign(
        dir.path(),
        &["eval", "--mined", "p.tsv", "--gold", "absent-gold.tsv"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent-gold.tsv"));
}

#[test]
fn usage_and_format_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        xlalign(dir.path(), &["train", "--no-such-flag"])
            .status
            .code(),
        Some(2)
    );
    // Randomized commands refuse to run without a seed.
    assert_eq!(
        xlalign(dir.path(), &["synth", "--out", "d"]).status.code(),
        Some(2)
    );

    fs::write(dir.path().join("bad.alnf"), b"NOPE....").unwrap();
    let out = xlalign(
        dir.path(),
        &[
            "train",
            "--mode",
            "supervised",
            "--pairs",
            "bad.alnf",
            "bad.alnf",
            "--out",
            "m",
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.alnf"));

    fs::write(dir.path().join("run.cfg"), "seed = 1\nstepz = 3\n").unwrap();
    let out = xlalign(dir.path(), &["synth", "--config", "run.cfg", "--out", "d"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    fs::write(
        dir.path().join("train.cfg"),
        "mode = supervised\npairs = d/train.s.alnf d/train.t.alnf\nsteps = 7\nbatch = 8\nseed = 2\nout = from-config.ckpt\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &["train", "--config", "train.cfg", "--steps", "3"],
    );
    let ck = load_checkpoint(dir.path().join("from-config.ckpt")).unwrap();
    assert_eq!(ck.state.unwrap().step, 3);
}

#[test]
fn resumed_cli_training_matches_a_straight_run() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let base = [
        "train",
        "--mode",
        "unsupervised",
        "--pairs",
        "d/train.s.alnf",
        "d/train.t.alnf",
        "--batch",
        "8",
        "--seed",
        "5",
        "--clip",
        "0.02",
    ];
    let run = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        ok(dir.path(), &args);
    };
    run(&["--steps", "12", "--out", "straight.ckpt"]);
    run(&["--steps", "5", "--out", "half.ckpt"]);
    run(&[
        "--steps",
        "12",
        "--out",
        "resumed.ckpt",
        "--resume",
        "half.ckpt",
    ]);
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("straight.ckpt"), read("resumed.ckpt"));
}

#[test]
fn inspect_prints_header_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    ok(
        dir.path(),
        &[
            "train",
            "--mode",
            "supervised",
            "--pairs",
            "d/train.s.alnf",
            "d/train.t.alnf",
            "--out",
            "m.ckpt",
            "--steps",
            "0",
            "--seed",
            "1",
            "--layers",
            "1,3",
            "--batch",
            "8",
        ],
    );
    let text = String::from_utf8(ok(dir.path(), &["inspect", "--model", "m.ckpt"]).stdout).unwrap();
    assert!(text.contains("ALNM v1"));
    assert!(text.contains("layers      2"));
    assert!(text.contains("w[1]        0.500000"));
}

#[test]
fn sweep_assertions_drive_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let suite = "suite = layers\nsteps = 20\nlayers = 0\n";
    fs::write(
        dir.path().join("pass.cfg"),
        format!("{suite}assert = layer/0 accuracy >= 0\n"),
    )
    .unwrap();
    fs::write(
        dir.path().join("fail.cfg"),
        format!("{suite}assert = layer/0 accuracy > 1\n"),
    )
    .unwrap();
    let out = ok(
        dir.path(),
        &[
            "sweep", "--config", "pass.cfg", "--seed", "0", "--out", "r.txt",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS layer/0 accuracy"));
    assert!(fs::read_to_string(dir.path().join("r.txt"))
        .unwrap()
        .contains("# medians"));
    let out = xlalign(
        dir.path(),
        &["sweep", "--config", "fail.cfg", "--seed", "0"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn hubbed_preset_writes_hub_ids() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--preset", "hubbed", "--seed", "0", "--out", "h"],
    );
    let hubs = fs::read_to_string(dir.path().join("h/hubs.txt")).unwrap();
    assert_eq!(hubs.lines().count(), 5);
    assert!(dir.path().join("h/s.alnf").exists());
    assert!(dir.path().join("h/gold.tsv").exists());
}
