use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pkd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_subcommands_and_exits_zero() {
    let o = pkd(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for sub in ["gen-data", "train-teacher", "finetune", "distill", "eval", "grid", "bench", "curves"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    let o = pkd(&["distill", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--teacher", "--student-layers", "--strategy", "--alpha", "--beta", "--temp", "--lr", "--batch", "--epochs", "--seed", "--data", "--dev", "--test", "--out", "--config"] {
        assert!(text.contains(flag), "{flag} missing from distill help");
    }
}

#[test]
fn unknown_subcommand_is_named() {
    let o = pkd(&["compress"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("compress"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_flag_is_rejected() {
    let o = pkd(&["bench", "--out", "x", "--depth", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--depth"));
}

#[test]
fn non_divisible_skip_fails_before_any_work() {
    let o = pkd(&["distill", "--strategy", "skip", "--teacher-layers", "12", "--student-layers", "5"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("12") && err.contains("5") && err.contains("multiple"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn missing_input_file_is_a_one_line_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = pkd(&["train-teacher", "--data", p(&missing), "--dev", p(&missing), "--out", p(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.tsv"));
    assert!(o.stdout.is_empty());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let gen = pkd(&["gen-data", "--task", "majority", "--vocab-size", "4", "--seq-len", "5", "--samples", "200", "--seed", "3", "--out", p(&data)]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let (train, dev, test) = (data.join("train.tsv"), data.join("dev.tsv"), data.join("test.tsv"));
    let split_args = ["--data", p(&train), "--dev", p(&dev), "--test", p(&test)];
    let small = ["--epochs", "2", "--batch", "16", "--lr", "0.003", "--seed", "1"];

    let teacher = root.join("teacher");
    let vocab = data.join("vocab.txt");
    let config = root.join("config.json");
    fs::write(&config, r#"{"model": {"hidden_dim": 8, "num_heads": 2, "ffn_dim": 16}}"#).unwrap();
    let mut args = vec!["train-teacher", "--config", p(&config), "--layers", "4", "--vocab", p(&vocab), "--out", p(&teacher)];
    args.extend(split_args);
    args.extend(small);
    let o = pkd(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "params.bin", "vocab.txt", "metrics.csv", "run.json"] {
        assert!(teacher.join(f).exists(), "{f}");
    }

    let student = root.join("student");
    let mut args = vec!["distill", "--teacher", p(&teacher), "--teacher-layers", "4", "--student-layers", "2", "--strategy", "skip", "--alpha", "0.5", "--beta", "10", "--temp", "5", "--out", p(&student)];
    args.extend(split_args);
    args.extend(small);
    let o = pkd(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(student.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,split,accuracy,l_ce,l_ds,l_pt,total"));

    // identical flags reproduce metrics.csv byte for byte
    let again = root.join("again");
    let args: Vec<&str> = args.iter().map(|a| if *a == p(&student) { p(&again) } else { a }).collect();
    assert!(pkd(&args).status.success());
    assert_eq!(metrics, fs::read_to_string(again.join("metrics.csv")).unwrap());

    let ft = root.join("ft");
    let mut args = vec!["finetune", "--teacher", p(&teacher), "--student-layers", "1", "--out", p(&ft)];
    args.extend(split_args);
    args.extend(small);
    assert!(pkd(&args).status.success());

    let o = pkd(&["eval", "--model", p(&student), "--data", p(&dev)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(eval["total"], 20);

    let grid = root.join("grid");
    let mut args = vec!["grid", "--teacher", p(&teacher), "--student-layers", "2", "--temp", "5,10", "--alpha", "0.5", "--lr", "0.003", "--epochs", "1", "--out", p(&grid)];
    args.extend(&split_args[..4]);
    let o = pkd(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(grid.join("grid.csv")).unwrap().lines().count(), 3);

    let curves = root.join("curves");
    let o = pkd(&["curves", p(&student), p(&ft), "--out", p(&curves)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(curves.join("curves.csv")).unwrap().lines().count(), 1 + 2 * 2 * 2);

    let bench = root.join("bench");
    let o = pkd(&["bench", "--config", p(&config), "--depths", "2,1", "--batch", "2", "--seq-len", "8", "--repeats", "3", "--out", p(&bench)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(bench.join("bench.csv")).unwrap().lines().count(), 3);
}
