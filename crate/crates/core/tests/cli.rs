//! The `dunst` binary: subcommands, config errors and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn dunst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dunst"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--labeled", "12", "--unlabeled", "40", "--dev", "8", "--test", "16",
    "--base_epochs", "2", "--st_epochs", "1", "--eval_generations", "4",
    "--ppl_examples", "4", "--iw_samples", "2",
];

fn with_out<'a>(cmd: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd, "--out_dir", out];
    v.extend_from_slice(SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(dunst(&["bogus"]).status.code(), Some(1));
}

#[test]
fn misspelt_key_names_the_key() {
    let o = dunst(&["gen-corpus", "--out_dir", "unused", "--learning_rte", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rte"), "{}", stderr(&o));
}

#[test]
fn type_mismatch_is_usage_error() {
    let o = dunst(&["gen-corpus", "--out_dir", "unused", "--batch_size", "many"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch_size"));
}

#[test]
fn missing_out_dir_is_reported() {
    let o = dunst(&["gen-corpus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("out_dir"));
}

#[test]
fn selftrain_before_train_base_is_actionable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(dunst(&with_out("gen-corpus", out, &[])).status.success());
    let o = dunst(&with_out("selftrain", out, &[]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train-base"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.txt");
    let out = dir.path().join("run");
    std::fs::write(&cfg, format!("out_dir = {}\ntemperature = 1\n", out.display())).unwrap();
    let mut args = vec!["gen-corpus", "--config", cfg.to_str().unwrap(), "--temperature", "5"];
    args.extend_from_slice(SMALL);
    assert!(dunst(&args).status.success());
    assert!(out.join("corpus.labeled").exists());
}

#[test]
fn full_pipeline_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for cmd in ["gen-corpus", "train-base"] {
        let o = dunst(&with_out(cmd, out, &[]));
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let variants = ["DUNST", "NO_PL_PT", "NO_PL"];
    for v in variants {
        let o = dunst(&with_out("selftrain", out, &["--variant", v]));
        assert!(o.status.success(), "{v}: {}", stderr(&o));
        let run = Path::new(out).join(v);
        for f in ["config.txt", "metrics.tsv", "checkpoint_best", "checkpoint_last", "epoch_001/generations.txt"] {
            assert!(run.join(f).exists(), "{v}/{f} missing");
        }
    }
    let o = dunst(&with_out("eval", out, &[]));
    assert!(o.status.success(), "{}", stderr(&o));

    let dirs: Vec<String> = variants.iter().map(|v| format!("{out}/{v}")).collect();
    let mut args = vec!["report"];
    args.extend(dirs.iter().map(String::as_str));
    let o = dunst(&args);
    assert!(o.status.success());
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 1 + variants.len(), "{table}");
    for v in variants {
        assert!(table.lines().any(|l| l.starts_with(v)));
    }
}

#[test]
fn report_on_missing_run_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = dunst(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_check_passes_with_exit_zero() {
    let o = dunst(&["oracle-check", "--models", "30", "--quadruples", "100", "--candidates", "30"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("theorem1_identity"));
    assert!(!stdout(&o).contains("FAIL"));
}
