//! Acceptance suite: one PASS/FAIL line per criterion, thresholds pinned
//! below. Needs MNIST (and CIFAR-10 for criterion 5) under
//! `ACTBENCH_DATA_DIR` or `data/` at the workspace root. Exits non-zero if
//! any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use actbench::activation::{linspace, wrap_activation, ActivationKind, ActivationSpec, BaseKind};
use actbench::analysis::{analyze, box_stats, RunSnapshot, Slot};
use actbench::data::{
    denormalize, load_cifar10, load_cifar10_limit, load_splits, parse_cifar_records,
    parse_idx_header, DataSplits, DatasetName, Split, CIFAR_MEAN, CIFAR_STD, IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
};
use actbench::models::{build_model, Architecture, ModelConfig};
use actbench::train::{lr_find, lr_sweep, train, LrFindConfig, Quadratic, RunReport, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADCHECK_POINTS: &str = "100";
const GRADCHECK_SECONDS: f64 = 60.0;

const IDENTITY_POINTS: usize = 10_000;
const IDENTITY_TOL: f64 = 1e-12;

const MNIST_SEEDS: [u64; 3] = [0, 1, 2];
const MNIST_MIN_ACCURACY: f64 = 0.97;
const MNIST_RELU_GAP: f64 = 0.005;

const ADAPT_DELTA: f64 = 1e-3;
const ADAPT_BETA_STD: f64 = 1e-4;

const CIFAR_SUBSET: usize = 5_000;
const CIFAR_EPOCHS: usize = 2;
const CIFAR_MIN_ACCURACY: f64 = 0.25;
const CIFAR_SECONDS: f64 = 30.0 * 60.0;

const BOX_CASES: usize = 1_000;
const BOX_TOL: f64 = 1e-12;

/// `½w²` under gradient descent: step `1` lands on the minimum.
const QUADRATIC_OPTIMAL_STEP: f64 = 1.0;
const LR_FIND_SECONDS: f64 = 120.0;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_gradcheck() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_actbench"))
        .args([
            "gradcheck",
            "--activation",
            "all",
            "--trials",
            GRADCHECK_POINTS,
        ])
        .output()
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows = stdout.lines().skip(1).count();
    let expected = ActivationKind::all_with_wrappers().len();
    let passed = stdout.lines().filter(|l| l.ends_with("pass")).count();
    let worst = stdout
        .lines()
        .skip(1)
        .filter_map(|l| l.split_whitespace().nth(2)?.parse::<f64>().ok())
        .fold(0.0, f64::max);
    check(
        out.status.success() && rows == expected && passed == expected && secs < GRADCHECK_SECONDS,
        format!(
            "{passed}/{expected} activations pass at {GRADCHECK_POINTS} points each, worst relative error {worst:.2e}, {secs:.1}s (limit {GRADCHECK_SECONDS}s){}",
            if out.status.success() { String::new() } else { format!("; {}", String::from_utf8_lossy(&out.stderr).trim()) }
        ),
    )
}

fn c2_identities() -> Outcome {
    let xs = linspace(-10.0, 10.0, IDENTITY_POINTS);
    let dual = ActivationKind::DualLine;
    let wrapped = wrap_activation(&ActivationSpec::base(BaseKind::Relu), 1.0, 0.0)
        .map_err(|e| e.to_string())?;
    let (mut d1, mut d2) = (0.0f64, 0.0f64);
    for &x in &xs {
        let leaky = if x < 0.0 { 0.01 * x } else { x };
        d1 = d1.max((dual.eval(x, &[0.01, 1.0, -0.22]) - (leaky - 0.22)).abs());
        d2 = d2.max((wrapped.kind.eval(x, &[1.0, 0.0]) - x.max(0.0)).abs());
    }
    check(
        d1 < IDENTITY_TOL && d2 < IDENTITY_TOL,
        format!("dual_line vs shifted leaky: {d1:.1e}; wrapped relu vs relu: {d2:.1e} over {IDENTITY_POINTS} points (limit {IDENTITY_TOL:.0e})"),
    )
}

fn mnist() -> Result<DataSplits, String> {
    load_splits(DatasetName::Mnist, &common::data_dir(), None)
        .map_err(|e| format!("MNIST unavailable: {e}"))
}

fn mean_accuracy(runs: &[RunReport]) -> f64 {
    runs.iter()
        .map(|r| r.final_epoch().map_or(0.0, |e| e.accuracy))
        .sum::<f64>()
        / runs.len() as f64
}

/// Dual Line and ReLU runs on MNIST under the default LENET protocol.
fn mnist_runs(data: &DataSplits) -> Result<(Vec<RunReport>, Vec<RunReport>, f64), String> {
    let start = Instant::now();
    let run = |spec| {
        let config =
            TrainConfig::mnist(Architecture::Lenet5, spec).with_seeds(MNIST_SEEDS.to_vec());
        train(&config, data)
            .map(|v| v.into_iter().map(|o| o.report).collect::<Vec<_>>())
            .map_err(|e| e.to_string())
    };
    let dual = run(ActivationSpec::dual_line())?;
    let relu = run(ActivationSpec::base(BaseKind::Relu))?;
    Ok((dual, relu, start.elapsed().as_secs_f64()))
}

fn c3_mnist(
    runs: &Result<(Vec<RunReport>, Vec<RunReport>, f64), String>,
    train_size: usize,
) -> Outcome {
    let (dual, relu, secs) = runs.as_ref().map_err(Clone::clone)?;
    let (d, r) = (mean_accuracy(dual), mean_accuracy(relu));
    let per_seed: Vec<String> = dual
        .iter()
        .map(|x| format!("{:.4}", x.final_epoch().map_or(0.0, |e| e.accuracy)))
        .collect();
    check(
        d >= MNIST_MIN_ACCURACY && (d - r).abs() <= MNIST_RELU_GAP,
        format!(
            "dual_line mean accuracy {d:.4} (seeds {MNIST_SEEDS:?}: {}; need >= {MNIST_MIN_ACCURACY}), relu {r:.4}, gap {:.4} (need <= {MNIST_RELU_GAP}); {train_size} training images, {secs:.0}s",
            per_seed.join(", "),
            (d - r).abs()
        ),
    )
}

fn sample_std(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn c4_adaptation(runs: &Result<(Vec<RunReport>, Vec<RunReport>, f64), String>) -> Outcome {
    let (dual, _, _) = runs.as_ref().map_err(Clone::clone)?;
    let mut details = Vec::new();
    let mut ok = true;
    for r in dual {
        let betas: Vec<f64> = r.snapshot.iter().filter_map(|s| s.beta).collect();
        let shifts: Vec<f64> = r.snapshot.iter().filter_map(|s| s.mean_shift).collect();
        let beta_moved = betas.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max);
        let m_moved = shifts.iter().map(|m| (m + 0.22).abs()).fold(0.0, f64::max);
        let std = sample_std(&betas);
        ok &= beta_moved > ADAPT_DELTA && m_moved > ADAPT_DELTA && std > ADAPT_BETA_STD;
        details.push(format!(
            "seed {}: max|b-1| {beta_moved:.3}, max|m+0.22| {m_moved:.3}, std(b) {std:.3}",
            r.seed
        ));
    }
    check(ok, details.join("; "))
}

fn c5_cifar() -> Outcome {
    let dir = common::data_dir();
    let train_set = load_cifar10_limit(&dir, Split::Train, Some(CIFAR_SUBSET))
        .map_err(|e| format!("CIFAR-10 unavailable: {e}"))?;
    let test_set =
        load_cifar10(&dir, Split::Test).map_err(|e| format!("CIFAR-10 unavailable: {e}"))?;
    let data = DataSplits {
        train: train_set,
        test: test_set,
    };
    let mut config = TrainConfig::cifar(ActivationSpec::dp_relu()).with_seeds(vec![0]);
    config.epochs = CIFAR_EPOCHS;
    let start = Instant::now();
    let report = train(&config, &data)
        .map_err(|e| e.to_string())?
        .remove(0)
        .report;
    let secs = start.elapsed().as_secs_f64();
    let accuracy = report.final_epoch().map_or(0.0, |e| e.accuracy);
    let run = report.file_stem();
    let snapshots = report
        .snapshot
        .iter()
        .map(|s| RunSnapshot {
            run: run.clone(),
            snapshot: s.clone(),
        })
        .collect();
    let out = analyze(snapshots).map_err(|e| e.to_string())?;
    let grid_ok = out.grid.as_ref().is_some_and(|g| {
        g.num_blocks == 9
            && (0..9).all(|b| g.cell(b, Slot::A1).is_some() && g.cell(b, Slot::A2).is_some())
    });
    let pattern = out
        .pattern
        .as_ref()
        .map(|p| {
            format!(
                "first block {}, later blocks {}/{}",
                p.result.first_block, p.result.rest_satisfied, p.result.rest_total
            )
        })
        .unwrap_or_else(|| "not run".into());
    check(
        accuracy > CIFAR_MIN_ACCURACY && secs < CIFAR_SECONDS && grid_ok && out.pattern.is_some(),
        format!("accuracy {accuracy:.4} (need > {CIFAR_MIN_ACCURACY}), {secs:.0}s (limit {CIFAR_SECONDS}s), 9x2 grid {grid_ok}, beta(A-1) > beta(A-2): {pattern}"),
    )
}

fn c6_box_stats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut outlier_mismatch = 0;
    for case in 0..BOX_CASES {
        let n = rng.random_range(1..=50);
        // Every third case draws small integers so that ties occur.
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if case % 3 == 0 {
                    rng.random_range(-5..5) as f64
                } else {
                    rng.random_range(-100.0..100.0)
                }
            })
            .collect();
        let got = box_stats(&values).map_err(|e| e.to_string())?;
        let want = common::box_oracle(&values);
        for (a, b) in [
            (got.min, want.min),
            (got.q1, want.q1),
            (got.median, want.median),
            (got.q3, want.q3),
            (got.max, want.max),
        ] {
            worst = worst.max((a - b).abs());
        }
        if got.outliers != want.outliers || got.n != want.n {
            outlier_mismatch += 1;
        }
    }
    check(
        worst <= BOX_TOL && outlier_mismatch == 0,
        format!("{BOX_CASES} samples of size 1-50: max deviation {worst:.1e} (limit {BOX_TOL:.0e}), outlier mismatches {outlier_mismatch}"),
    )
}

fn c7_lr_finder(mnist: &Result<DataSplits, String>) -> Outcome {
    let cfg = LrFindConfig::default();
    let q = lr_sweep(&mut Quadratic { w: 1.0 }, &cfg).map_err(|e| e.to_string())?;
    let decade = (q.suggested_lr / QUADRATIC_OPTIMAL_STEP).log10().abs();
    let quad = format!(
        "quadratic suggests {:.3} ({decade:.2} decades from {QUADRATIC_OPTIMAL_STEP})",
        q.suggested_lr
    );
    let data = mnist.as_ref().map_err(|e| format!("{quad}; {e}"))?;
    let model = build_model(
        &ModelConfig::new(Architecture::Lenet5, ActivationSpec::dual_line()),
        0,
    )
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let r = lr_find(&model, &data.train, 64, &cfg, 0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        decade <= 1.0 && r.suggested_lr >= cfg.min_lr && r.suggested_lr <= cfg.max_lr && secs < LR_FIND_SECONDS,
        format!(
            "{quad}; LENET5/MNIST suggests {:.3e} within [{:.0e}, {:.0e}] in {secs:.1}s (limit {LR_FIND_SECONDS}s)",
            r.suggested_lr, cfg.min_lr, cfg.max_lr
        ),
    )
}

/// Official MNIST headers, byte for byte.
const MNIST_HEADERS: [(&str, &[u8], u32, &[usize]); 4] = [
    (
        "train images",
        &[0, 0, 8, 3, 0, 0, 0xEA, 0x60, 0, 0, 0, 28, 0, 0, 0, 28],
        IDX_IMAGE_MAGIC,
        &[60000, 28, 28],
    ),
    (
        "train labels",
        &[0, 0, 8, 1, 0, 0, 0xEA, 0x60],
        IDX_LABEL_MAGIC,
        &[60000],
    ),
    (
        "test images",
        &[0, 0, 8, 3, 0, 0, 0x27, 0x10, 0, 0, 0, 28, 0, 0, 0, 28],
        IDX_IMAGE_MAGIC,
        &[10000, 28, 28],
    ),
    (
        "test labels",
        &[0, 0, 8, 1, 0, 0, 0x27, 0x10],
        IDX_LABEL_MAGIC,
        &[10000],
    ),
];

fn c8_loaders() -> Outcome {
    let mut notes = Vec::new();
    for (name, bytes, magic, dims) in MNIST_HEADERS {
        let h = parse_idx_header(bytes, magic, Path::new(name)).map_err(|e| e.to_string())?;
        if h.magic != magic || h.dims != dims {
            return Err(format!("{name}: parsed {} {:?}", h.magic, h.dims));
        }
    }
    notes.push("official MNIST header fixtures parse to 2051/2049 with 60000/10000".to_string());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut train_bytes = Vec::new();
    for (i, file) in [
        "data_batch_1.bin",
        "data_batch_2.bin",
        "data_batch_3.bin",
        "data_batch_4.bin",
        "data_batch_5.bin",
    ]
    .iter()
    .enumerate()
    {
        let b = common::cifar_records(2, i as u64);
        train_bytes.extend_from_slice(&b);
        std::fs::write(dir.path().join(file), b).map_err(|e| e.to_string())?;
    }
    std::fs::write(
        dir.path().join("test_batch.bin"),
        common::cifar_records(3, 9),
    )
    .map_err(|e| e.to_string())?;
    let records =
        parse_cifar_records(&train_bytes, Path::new("fixture")).map_err(|e| e.to_string())?;
    let labels_ok = records
        .labels
        .iter()
        .enumerate()
        .all(|(i, &l)| l == train_bytes[i * 3073]);
    let pixels_ok = records
        .pixels
        .chunks(3072)
        .enumerate()
        .all(|(i, p)| p == &train_bytes[i * 3073 + 1..(i + 1) * 3073]);
    let set = load_cifar10(dir.path(), Split::Train).map_err(|e| e.to_string())?;
    let back = denormalize(set.images(), &CIFAR_MEAN, &CIFAR_STD).map_err(|e| e.to_string())?;
    let restored: Vec<u8> = back
        .data()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let round_trip = restored == records.pixels
        && set
            .labels()
            .iter()
            .zip(&records.labels)
            .all(|(a, &b)| *a == b as usize);
    let bad_frame = parse_cifar_records(&train_bytes[..3072], Path::new("short")).is_err();
    notes.push(format!("CIFAR fixtures: 10 records, labels {labels_ok}, pixels {pixels_ok}, normalized round trip {round_trip}, short record rejected {bad_frame}"));
    check(
        labels_ok && pixels_ok && round_trip && bad_frame,
        notes.join("; "),
    )
}

fn c9_determinism(mnist_ok: bool) -> Outcome {
    let fixture = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_dir = if mnist_ok {
        common::data_dir()
    } else {
        common::write_mnist_fixture(fixture.path(), 1024, 256);
        fixture.path().to_path_buf()
    };
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = Command::new(env!("CARGO_BIN_EXE_actbench"))
            .args([
                "train",
                "--activation",
                "dual_line",
                "--epochs",
                "1",
                "--seeds",
                "7",
                "--train-limit",
                "2048",
                "--test-limit",
                "1000",
            ])
            .arg("--data-dir")
            .arg(&data_dir)
            .arg("--out")
            .arg(out.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let bytes = std::fs::read(out.path().join("lenet5_mnist_dual_line_seed7.json"))
            .map_err(|e| e.to_string())?;
        outputs.push(bytes);
    }
    check(
        outputs[0] == outputs[1],
        format!(
            "two `train` invocations wrote {} and {} bytes, identical: {}",
            outputs[0].len(),
            outputs[1].len(),
            outputs[0] == outputs[1]
        ),
    )
}

fn main() {
    let mnist = mnist();
    let train_size = mnist.as_ref().map_or(0, |d| d.train.len());
    let runs = mnist.as_ref().map_err(Clone::clone).and_then(mnist_runs);
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "gradient correctness", c1_gradcheck()),
        (2, "identity properties", c2_identities()),
        (3, "MNIST desk-scale training", c3_mnist(&runs, train_size)),
        (4, "parameter adaptation", c4_adaptation(&runs)),
        (5, "CIFAR-10 desk-scale smoke", c5_cifar()),
        (6, "box-stats oracle", c6_box_stats()),
        (7, "LR finder", c7_lr_finder(&mnist)),
        (8, "loader bit-exactness", c8_loaders()),
        (9, "determinism", c9_determinism(mnist.is_ok())),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n}: {verdict} {name}: {detail}");
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
