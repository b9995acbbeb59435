mod common;

use std::path::Path;
use std::process::{Command, Output};

fn actbench(args: &[&str], data: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_actbench"));
    cmd.args(args).env_remove("ACTBENCH_DATA_DIR");
    if let Some(d) = data {
        cmd.env("ACTBENCH_DATA_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn mnist_fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    common::write_mnist_fixture(dir.path(), 256, 128);
    dir
}

const SMALL: [&str; 6] = ["--epochs", "1", "--batch-size", "32", "--seeds", "3"];

#[test]
fn help_exits_zero() {
    let o = actbench(&["--help"], None);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["train", "lr-find", "benchmark", "analyze", "gradcheck"] {
        assert!(text(&o).contains(sub), "help lacks {sub}");
    }
}

#[test]
fn unknown_activation_exits_one_and_lists_registry() {
    let data = mnist_fixture();
    let o = actbench(&["train", "--activation", "bogus"], Some(data.path()));
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(
        t.contains("bogus") && t.contains("dual_line") && t.contains("dp_relu"),
        "{t}"
    );
}

#[test]
fn missing_data_exits_one() {
    let empty = tempfile::tempdir().unwrap();
    let o = actbench(
        &["train", "--epochs", "1", "--seeds", "0"],
        Some(empty.path()),
    );
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("train-images-idx3-ubyte"));
}

#[test]
fn gradcheck_passes_and_fault_injection_fails() {
    let ok = actbench(&["gradcheck", "--activation", "dp_relu"], None);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok));
    assert!(text(&ok).contains("pass"));
    let bad = actbench(
        &[
            "gradcheck",
            "--activation",
            "dual_line",
            "--fault-scale",
            "0.01",
        ],
        None,
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad).contains("dual_line"), "{}", text(&bad));
}

#[test]
fn train_writes_one_report_per_seed() {
    let data = mnist_fixture();
    let out = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--activation",
        "dual_line",
        "--out",
        out.path().to_str().unwrap(),
    ];
    args.extend(SMALL);
    let o = actbench(&args, Some(data.path()));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let report = out.path().join("lenet5_mnist_dual_line_seed3.json");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["seed"], 3);
    assert_eq!(json["config"]["epochs"], 1);
    assert_eq!(json["snapshot"].as_array().unwrap().len(), 4);
    assert!(out.path().join("aggregate.csv").exists());
}

#[test]
fn benchmark_ranks_each_activation() {
    let data = mnist_fixture();
    let out = tempfile::tempdir().unwrap();
    let mut args = vec![
        "benchmark",
        "--activations",
        "relu,dp_relu",
        "--arch",
        "lenet4",
        "--jobs",
        "2",
        "--out",
        out.path().to_str().unwrap(),
    ];
    args.extend(SMALL);
    let o = actbench(&args, Some(data.path()));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = std::fs::read_to_string(out.path().join("benchmark.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[0].starts_with("rank,activation,"));
    let mut ranks: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    ranks.sort();
    assert_eq!(ranks, ["1", "2"]);
    assert!(out.path().join("lr_ranges.csv").exists());
}

#[test]
fn analyze_lenet_reports_is_idempotent_and_positions_only() {
    let data = mnist_fixture();
    let runs = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--activation",
        "dp_relu",
        "--out",
        runs.path().to_str().unwrap(),
    ];
    args.extend(SMALL);
    assert_eq!(actbench(&args, Some(data.path())).status.code(), Some(0));

    let read_all = |dir: &Path| {
        let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read_to_string(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let out = tempfile::tempdir().unwrap();
    let analyze = [
        "analyze",
        "--reports",
        runs.path().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ];
    let first = actbench(&analyze, None);
    assert_eq!(first.status.code(), Some(0), "{}", text(&first));
    assert!(text(&first).contains("notice"), "{}", text(&first));
    let files = read_all(out.path());
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"positions.csv"), "{names:?}");
    assert!(!names.contains(&"pattern.csv"));
    assert_eq!(
        files[names.iter().position(|n| *n == "positions.csv").unwrap()]
            .1
            .lines()
            .count(),
        5
    );

    assert_eq!(actbench(&analyze, None).status.code(), Some(0));
    assert_eq!(read_all(out.path()), files);
}

#[test]
fn malformed_report_exits_two_and_names_the_file() {
    let runs = tempfile::tempdir().unwrap();
    std::fs::write(runs.path().join("broken.json"), "{\"seed\": ").unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = actbench(
        &[
            "analyze",
            "--reports",
            runs.path().to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("broken.json"), "{}", text(&o));
}

#[test]
fn lr_find_writes_its_curve() {
    let data = mnist_fixture();
    let out = tempfile::tempdir().unwrap();
    let o = actbench(
        &[
            "lr-find",
            "--num-iters",
            "20",
            "--batch-size",
            "32",
            "--out",
            out.path().to_str().unwrap(),
        ],
        Some(data.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("lr_find_lenet5_mnist_dual_line_seed0.json"))
            .unwrap(),
    )
    .unwrap();
    let lr = json["suggested_lr"].as_f64().unwrap();
    assert!((1e-7..=10.0).contains(&lr));
}
