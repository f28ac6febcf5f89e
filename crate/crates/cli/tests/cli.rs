use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use protoforge::checker::{verify, CheckOptions};
use protoforge::config::load_config;
use protoforge::parse_sketch;

fn corpus(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protoforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_a_protocol_that_reverifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.pspec");
    let stats = dir.path().join("stats.txt");
    let (spec, cfg) = (corpus("2pc/pre.pspec"), corpus("2pc/pre.cfg"));
    let o = run(&[
        "synth",
        "--spec",
        path(&spec),
        "--config",
        path(&cfg),
        "-o",
        path(&out),
        "--stats",
        path(&stats),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("result=solved"));
    let p = parse_sketch(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let cfg = load_config(
        &cfg,
        &parse_sketch(&std::fs::read_to_string(&spec).unwrap()).unwrap(),
    )
    .unwrap();
    for inst in std::iter::once(&cfg.instance).chain(&cfg.extra_instances) {
        assert!(verify(&p, inst, &CheckOptions::default()).unwrap().passed());
    }
    let stats = std::fs::read_to_string(&stats).unwrap();
    for key in [
        "generated=",
        "pruned=",
        "model_checked=",
        "k_prime=",
        "solved=true",
        "total_time_s=",
    ] {
        assert!(
            stats.lines().any(|l| l.starts_with(key)),
            "{key} missing from\n{stats}"
        );
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&[
        "synth",
        "--spec",
        path(&corpus("2pc/pre.pspec")),
        "--config",
        "/nonexistent.cfg",
    ]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["synth", "--bogus"]).status.code(), Some(64));
}

#[test]
fn naive_strategy_rejects_disabling_reduction() {
    let o = run(&[
        "synth",
        "--spec",
        path(&corpus("2pc/pre.pspec")),
        "--config",
        path(&corpus("2pc/pre.cfg")),
        "--strategy",
        "naive",
        "--no-equiv-reduction",
    ]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn check_only_verifies_a_complete_protocol() {
    let (spec, cfg) = (corpus("2pc/protocol.pspec"), corpus("2pc/protocol.cfg"));
    let o = run(&[
        "synth",
        "--spec",
        path(&spec),
        "--config",
        path(&cfg),
        "--check-only",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("instance: pass"));
    assert!(stdout(&o).contains("extra instance 1: pass"));
}

#[test]
fn check_only_refuses_holes() {
    let o = run(&[
        "synth",
        "--spec",
        path(&corpus("2pc/pre.pspec")),
        "--config",
        path(&corpus("2pc/pre.cfg")),
        "--check-only",
    ]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn small_size_bound_exhausts() {
    let o = run(&[
        "synth",
        "--spec",
        path(&corpus("lock_serv/prepost.pspec")),
        "--config",
        path(&corpus("lock_serv/prepost.cfg")),
        "--max-size",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("result=exhausted"));
}

#[test]
fn zero_timeout_times_out() {
    let o = run(&[
        "synth",
        "--spec",
        path(&corpus("2pc/pre.pspec")),
        "--config",
        path(&corpus("2pc/pre.cfg")),
        "--timeout",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn disabling_extra_check_accepts_the_fragile_guard() {
    let args = |extra: &str| {
        run(&[
            "synth",
            "--spec",
            path(&corpus("fragile/majority.pspec")),
            "--config",
            path(&corpus("fragile/majority.cfg")),
            extra,
        ])
    };
    let unchecked = args("--no-extra-check");
    assert_eq!(unchecked.status.code(), Some(0));
    assert!(
        stdout(&unchecked).contains("commit_ok = (1 < yes)"),
        "{}",
        stdout(&unchecked)
    );
    let checked = args("--extra-check");
    assert!(
        stdout(&checked).contains("extra_check_failures=1"),
        "{}",
        stdout(&checked)
    );
}

#[test]
fn corpus_filter_runs_only_matching_cases() {
    let o = run(&["corpus", "2pc"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("2pc-pre ") && out.contains("2pc-prepost"));
    assert!(!out.contains("lock_serv"));
    assert_eq!(run(&["corpus", "raft"]).status.code(), Some(64));
}
