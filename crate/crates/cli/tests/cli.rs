//! End-to-end behaviour of the `walshnet` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn walshnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walshnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn cli_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Fails unless the run exited nonzero with exactly one `error:` line.
fn assert_one_line_failure(o: &Output) {
    assert!(!o.status.success(), "expected failure, stdout: {}", stdout(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "diagnostic: {err:?}");
    assert!(err.starts_with("error: "), "diagnostic: {err:?}");
    assert!(!err.contains("panicked"), "diagnostic: {err:?}");
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn transform_constant_vector_orthonormal() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.txt", "1 1\n1 1\n");
    let o = walshnet(dir.path(), &["transform", "x.txt", "--normalization", "orthonormal"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "2 0 0 0\n");
}

#[test]
fn transform_alternating_vector_in_sequency_order() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.txt", "1 -1 1 -1");
    let o = walshnet(dir.path(), &["transform", "x.txt", "--ordering", "walsh-sequency", "--order", "2", "-o", "y.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("y.txt")).unwrap(), "0 0 0 4\n");
}

#[test]
fn transform_round_trip_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let x = [0.25, -1.5, 3.0, 7.125, -0.5, 2.0, 1e-3, -4.0];
    let text: Vec<String> = x.iter().map(f64::to_string).collect();
    write(dir.path(), "x.txt", &text.join(" "));
    for normalization in ["none", "orthonormal", "inverse"] {
        let o = walshnet(dir.path(), &["transform", "x.txt", "--round-trip", "--normalization", normalization]);
        assert!(o.status.success(), "{}", stderr(&o));
        let back: Vec<f64> = stdout(&o).split_whitespace().map(|t| t.parse().unwrap()).collect();
        for (b, v) in back.iter().zip(x) {
            assert!((b - v).abs() <= 1e-10 * v.abs().max(1.0), "{normalization}: {b} vs {v}");
        }
    }
}

#[test]
fn transform_csv_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.txt", "1 2");
    let o = walshnet(dir.path(), &["transform", "x.txt", "--format", "csv"]);
    assert_eq!(stdout(&o), "index,value\n0,3.0\n1,-1.0\n");
    let o = walshnet(dir.path(), &["transform", "x.txt", "--format", "json-lines"]);
    assert_eq!(stdout(&o), "{\"index\":0,\"value\":3.0}\n{\"index\":1,\"value\":-1.0}\n");
}

#[test]
fn transform_rejects_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "three.txt", "1 2 3");
    write(dir.path(), "word.txt", "1 two 3 4");
    write(dir.path(), "empty.txt", "");
    write(dir.path(), "binary.txt", "\u{0}\u{1}\u{2}");
    write(dir.path(), "four.txt", "1 2 3 4");
    for args in [
        &["transform", "three.txt"][..],
        &["transform", "word.txt"],
        &["transform", "empty.txt"],
        &["transform", "binary.txt"],
        &["transform", "missing.txt"],
        &["transform", "four.txt", "--order", "3"],
        &["transform", "four.txt", "--order", "200"],
    ] {
        assert_one_line_failure(&walshnet(dir.path(), args));
    }
    std::fs::write(dir.path().join("latin1.txt"), [0xff, 0xfe, b'1']).unwrap();
    assert_one_line_failure(&walshnet(dir.path(), &["transform", "latin1.txt"]));
}

#[test]
fn usage_errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["transform"],
        &["transform", "x.txt", "--ordering", "paley"],
        &["paramcount"],
        &["paramcount", "--preset", "resnet1000"],
        &["train"],
        &["bench", "--layer", "conv3x3", "--dims", "1,2,3"],
        &["bench", "--layer", "conv5x5", "--dims", "1,2,2,2"],
        &["bench", "--layer", "conv3x3", "--dims", "1,2,2,2", "--repetitions", "5"],
        &["gradcheck", "--points", "0"],
        &["--threads", "0", "gradcheck", "--scope", "smooth"],
    ] {
        assert_one_line_failure(&walshnet(dir.path(), args));
    }
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(walshnet(dir.path(), &["--help"]).status.success());
    assert!(walshnet(dir.path(), &["--version"]).status.success());
}

#[test]
fn paramcount_resnet20_total() {
    let o = walshnet(&cli_dir(), &["paramcount", "--preset", "resnet20", "--format", "json-lines"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let last = stdout(&o).lines().last().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&last).unwrap();
    assert_eq!(v["layer"], "total");
    assert_eq!(v["trainable"], 273_066);
    assert_eq!(v["non_trainable"], 1376);
}

#[test]
fn paramcount_golden_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let golden = write(dir.path(), "bad.csv", "kind,in_channels\nnope\n");
    let config = cli_dir().join("configs/layers/bwht-expand-160x6-s32.toml");
    let o = walshnet(
        dir.path(),
        &["paramcount", "--format", "csv", "--config", config.to_str().unwrap(), "--golden", golden.to_str().unwrap()],
    );
    assert_one_line_failure(&o);
    assert!(stderr(&o).contains("golden mismatch"));
}

#[test]
fn paramcount_rejects_malformed_configs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.toml", "kind = \"bwht-expand\"\nin_channels = 160\nexpansion_factor = \"1/0\"\nblock_size = 32\n");
    write(dir.path(), "b.toml", "kind = \"bwht-expand\"\nin_channels = 16\nexpansion_factor = 2\nblock_size = 32\n");
    write(dir.path(), "c.toml", "[[[");
    write(dir.path(), "d.toml", "layers = 3");
    for name in ["a.toml", "b.toml", "c.toml", "d.toml", "none.toml"] {
        assert_one_line_failure(&walshnet(dir.path(), &["paramcount", "--config", name]));
    }
}

#[test]
fn gradcheck_scopes_pass() {
    let dir = tempfile::tempdir().unwrap();
    for scope in ["smooth", "weighted", "weighted-edge", "fwht-2d", "full-model"] {
        let o = walshnet(dir.path(), &["--seed", "9", "gradcheck", "--scope", scope, "--points", "2000", "--format", "csv"]);
        assert!(o.status.success(), "{scope}: {}", stderr(&o));
        let out = stdout(&o);
        assert!(out.starts_with("suite,checked,skipped,max_rel_err,tolerance,result\n"), "{out}");
        assert!(out.lines().skip(1).all(|l| l.ends_with(",pass")), "{out}");
    }
}

#[test]
fn bench_reports_butterfly_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = walshnet(
        dir.path(),
        &["bench", "--layer", "fwht-2d", "--layer", "conv3x3", "--dims", "2,4,4,8", "--format", "json-lines"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["layer"], "fwht-2d");
    assert_eq!(rows[0]["multiplications"], 0);
    // Two 2D transforms of 2 * 8 slices of 4x4, each 2 * 4 * 4 * 2 additions.
    assert_eq!(rows[0]["additions"], 2 * 16 * 64);
    assert_eq!(rows[1]["multiplications"], 2 * 9 * 16 * 64);
}

#[test]
fn train_writes_schema_versioned_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = cli_dir().join("configs/synthetic.toml");
    let out = dir.path().join("run");
    let o = walshnet(
        dir.path(),
        &["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json-lines"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let keys: Vec<&str> = summary.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        [
            "schema_version",
            "name",
            "precision",
            "seed",
            "threads",
            "epochs",
            "steps",
            "final_train_loss",
            "final_train_accuracy",
            "final_test_loss",
            "final_test_accuracy",
            "trainable_params",
            "non_trainable_params",
            "replaced_layer_reduction",
            "baseline_trainable_params",
            "params_reduction_ratio",
            "wall_clock_seconds",
        ]
    );
    assert_eq!(summary["schema_version"], 1);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), "schema_version,epoch,lr,train_loss,train_accuracy,test_loss,test_accuracy,seconds");
    assert_eq!(lines.count(), 30);
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk["trainable_params"], summary["trainable_params"]);
    assert!(out.join("model.ckpt").exists());
}

#[test]
fn train_reports_dataset_errors() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.gz", "");
    write(
        dir.path(),
        "run.toml",
        "name = \"broken\"\n[model]\npreset = \"mnist-baseline\"\n[dataset]\nformat = \"idx\"\nimages = \"empty.gz\"\nlabels = \"missing\"\n[train]\nepochs = 1\n",
    );
    write(dir.path(), "typo.toml", "name = \"x\"\nmodle = 3\n");
    for name in ["run.toml", "typo.toml", "absent.toml"] {
        assert_one_line_failure(&walshnet(dir.path(), &["train", "--config", name, "--out", "o"]));
    }
}
