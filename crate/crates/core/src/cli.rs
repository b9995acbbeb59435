//! Command-line front end: `train`, `lr-find`, `benchmark`, `analyze` and
//! `gradcheck`.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, unknown
//! activation, missing data), 2 for failures while running.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activation::{check_activation, ActivationKind, ActivationSpec};
use crate::analysis::{analyze, export_report, RunSnapshot};
use crate::data::{load_splits, resolve_data_dir, DataSplits, DatasetName, DATA_DIR_ENV};
use crate::error::Error;
use crate::models::{build_model, Architecture, ModelConfig};
use crate::train::{
    aggregate, lr_find, report_paths, train_seed, write_aggregate_csv, write_benchmark_csv,
    write_lr_ranges_csv, LrFindConfig, RunOutput, RunReport, Schedule, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "actbench",
    version,
    about = "Learnable activation functions: training, sweeps and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one activation over one or more seeds.
    Train(TrainArgs),
    /// Run the learning-rate finder on a fresh model.
    LrFind(LrFindArgs),
    /// Train a list of activations under one protocol and rank them.
    Benchmark(BenchmarkArgs),
    /// Study learned activation parameters from run reports.
    Analyze(AnalyzeArgs),
    /// Finite-difference check of every activation's backward rule.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset: mnist or cifar10.
    #[arg(long, default_value = "mnist")]
    dataset: DatasetName,
    /// Directory holding the dataset files.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Use at most this many training examples.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use at most this many test examples.
    #[arg(long)]
    test_limit: Option<usize>,
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Architecture: lenet4, lenet5 or mini_resnet.
    #[arg(long, default_value = "lenet5")]
    arch: Architecture,
    /// Channel multiplier of mini_resnet.
    #[arg(long, default_value_t = 1)]
    widen_factor: usize,
    /// Epochs [default: 5 for mnist, 8 for cifar10].
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 64 for mnist, 128 for cifar10].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-3, conflicts_with = "lr_find")]
    lr: f64,
    /// Choose the learning rate per seed with the finder.
    #[arg(long)]
    lr_find: bool,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Mixup [default: on for cifar10, off for mnist].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    mixup: Option<bool>,
    /// Flips and padded crops [default: on for cifar10, off for mnist].
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    augment: Option<bool>,
    /// Schedule: constant or one_cycle [default: one_cycle for cifar10].
    #[arg(long)]
    schedule: Option<Schedule>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Registered activation name.
    #[arg(long, default_value = "dual_line")]
    activation: String,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LrFindArgs {
    #[arg(long, default_value = "lenet5")]
    arch: Architecture,
    #[arg(long, default_value = "dual_line")]
    activation: String,
    #[arg(long, default_value_t = 1)]
    widen_factor: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-7)]
    min_lr: f64,
    #[arg(long, default_value_t = 10.0)]
    max_lr: f64,
    #[arg(long, default_value_t = 100)]
    num_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// `all` or a comma-separated list of activation names.
    #[arg(long, default_value = "all")]
    activations: String,
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Directory of run reports.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// `all` or one activation name.
    #[arg(long, default_value = "all")]
    activation: String,
    /// Random kink-free points per activation.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scales analytic gradients by `1 + s`; a negative control.
    #[arg(long, default_value_t = 0.0, hide = true)]
    fault_scale: f64,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownActivation { .. } | Error::MissingFile { .. } | Error::Contract(_) => {
                EXIT_USAGE
            }
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first) and runs the subcommand, returning
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::LrFind(a) => cmd_lr_find(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_data(args: &DataArgs) -> CliResult<DataSplits> {
    let dir = resolve_data_dir(args.data_dir.as_deref()).ok_or_else(|| {
        usage(format!(
            "no data directory: pass --data-dir or set {DATA_DIR_ENV}"
        ))
    })?;
    let mut splits = load_splits(args.dataset, &dir, args.train_limit)?;
    if let Some(n) = args.test_limit {
        splits.test = splits.test.take(n);
    }
    Ok(splits)
}

fn train_config(
    p: &ProtocolArgs,
    dataset: DatasetName,
    activation: ActivationSpec,
) -> CliResult<TrainConfig> {
    let mut c = match dataset {
        DatasetName::Mnist => TrainConfig::mnist(p.arch, activation),
        DatasetName::Cifar10 => TrainConfig::cifar(activation),
    };
    c.model = ModelConfig::new(p.arch, activation).with_widen_factor(p.widen_factor);
    c.epochs = p.epochs.unwrap_or(c.epochs);
    c.batch_size = p.batch_size.unwrap_or(c.batch_size);
    c.lr = p.lr;
    c.lr_find = p.lr_find.then(LrFindConfig::default);
    c.seeds = p.seeds.clone();
    c.mixup = p.mixup.unwrap_or(c.mixup);
    c.augment = p.augment.unwrap_or(c.augment);
    c.schedule = p.schedule.unwrap_or(c.schedule);
    c.validate()?;
    Ok(c)
}

fn write_summaries(out: &Path, reports: &[RunReport]) -> CliResult<()> {
    let rows = aggregate(reports);
    write_aggregate_csv(&out.join("aggregate.csv"), &rows)?;
    write_lr_ranges_csv(&out.join("lr_ranges.csv"), &rows)?;
    Ok(())
}

fn describe(r: &RunReport) -> String {
    match r.final_epoch() {
        Some(e) => format!(
            "{} seed {}: accuracy {:.4}, top5 {:.4}, val loss {:.4}, lr {:.3e}{}",
            r.activation,
            r.seed,
            e.accuracy,
            e.top5_accuracy,
            e.val_loss,
            r.lr_used,
            if r.diverged { " (diverged)" } else { "" }
        ),
        None => format!(
            "{} seed {}: diverged before the first epoch ended",
            r.activation, r.seed
        ),
    }
}

fn cmd_train(args: TrainArgs) -> CliResult<i32> {
    let spec = ActivationSpec::parse(&args.activation)?;
    let config = train_config(&args.protocol, args.data.dataset, spec)?;
    let data = load_data(&args.data)?;
    let mut reports = Vec::new();
    for &seed in &config.seeds {
        let RunOutput {
            report,
            lr_find_seconds,
        } = train_seed(&config, &data, seed)?;
        let path = report.write(&args.out, lr_find_seconds)?;
        println!("{} -> {}", describe(&report), path.display());
        reports.push(report);
    }
    write_summaries(&args.out, &reports)?;
    Ok(EXIT_OK)
}

fn cmd_lr_find(args: LrFindArgs) -> CliResult<i32> {
    let spec = ActivationSpec::parse(&args.activation)?;
    let model_config = ModelConfig::new(args.arch, spec).with_widen_factor(args.widen_factor);
    if args.data.dataset.image_shape() != model_config.input_shape {
        return Err(usage(format!(
            "{} cannot run on {}",
            args.arch, args.data.dataset
        )));
    }
    let config = LrFindConfig {
        min_lr: args.min_lr,
        max_lr: args.max_lr,
        num_iters: args.num_iters,
        ..Default::default()
    };
    config.validate()?;
    let data = load_data(&args.data)?;
    let model = build_model(&model_config, args.seed)?;
    let result = lr_find(&model, &data.train, args.batch_size, &config, args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let path = args.out.join(format!(
        "lr_find_{}_{}_{}_seed{}.json",
        args.arch,
        args.data.dataset,
        spec.name(),
        args.seed
    ));
    crate::train::write_json(&path, &result)?;
    println!(
        "suggested lr {:.3e} (min-loss/10: {:.3e}; swept {:.1e}..{:.1e}) -> {}",
        result.suggested_lr,
        result.min_loss_lr,
        result.min_lr_bound,
        result.max_lr_bound,
        path.display()
    );
    Ok(EXIT_OK)
}

fn activation_list(arg: &str) -> CliResult<Vec<ActivationSpec>> {
    if arg == "all" {
        return Ok(ActivationKind::registry()
            .into_iter()
            .map(ActivationSpec::new)
            .collect());
    }
    let specs = arg
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ActivationSpec::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err(usage("--activations lists no activation"));
    }
    Ok(specs)
}

fn cmd_benchmark(args: BenchmarkArgs) -> CliResult<i32> {
    let specs = activation_list(&args.activations)?;
    let configs = specs
        .iter()
        .map(|&s| train_config(&args.protocol, args.data.dataset, s))
        .collect::<CliResult<Vec<_>>>()?;
    let data = load_data(&args.data)?;
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| args.protocol.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(c, seed)) = jobs.get(i) else { break };
                let outcome = train_seed(&configs[c], &data, seed).and_then(|out| {
                    out.report
                        .write(&args.out, out.lr_find_seconds)
                        .map(|_| out.report)
                });
                results
                    .lock()
                    .expect("no panics while holding the lock")
                    .push((i, outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("threads joined");
    results.sort_by_key(|(i, _)| *i);
    let mut reports = Vec::new();
    let mut failures = String::new();
    for (i, outcome) in results {
        let (c, seed) = jobs[i];
        match outcome {
            Ok(r) => {
                println!("{}", describe(&r));
                reports.push(r);
            }
            Err(e) => {
                let name = configs[c].model.activation.name();
                eprintln!("run {name} seed {seed} failed: {e}");
                let _ = writeln!(
                    failures,
                    "{name},{seed},\"{}\"",
                    e.to_string().replace('"', "'")
                );
            }
        }
    }
    if !failures.is_empty() {
        let path = args.out.join("failures.csv");
        std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
        std::fs::write(&path, format!("activation,seed,error\n{failures}"))
            .map_err(|e| Error::io(&path, e))?;
    }
    if reports.is_empty() {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: "every run failed".into(),
        });
    }
    let rows = aggregate(&reports);
    write_benchmark_csv(&args.out.join("benchmark.csv"), &rows)?;
    write_summaries(&args.out, &reports)?;
    Ok(EXIT_OK)
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult<i32> {
    let paths = report_paths(&args.reports)?;
    if paths.is_empty() {
        return Err(usage(format!(
            "no run reports in {}",
            args.reports.display()
        )));
    }
    let mut snapshots = Vec::new();
    for path in &paths {
        let report = RunReport::read(path).map_err(|e| Failure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        })?;
        let run = report.file_stem();
        snapshots.extend(report.snapshot.into_iter().map(|snapshot| RunSnapshot {
            run: run.clone(),
            snapshot,
        }));
    }
    let output = analyze(snapshots)?;
    let written = export_report(&output, &args.out)?;
    if output.grid.is_none() {
        eprintln!("notice: the reports have no repeating blocks; block grouping is unavailable, wrote positions only");
    }
    if let Some(p) = &output.pattern {
        let r = &p.result;
        println!(
            "beta(A-1) > beta(A-2): {} of {} blocks after the first; first block: {}",
            r.rest_satisfied, r.rest_total, r.first_block
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: GradcheckArgs) -> CliResult<i32> {
    let kinds = if args.activation == "all" {
        ActivationKind::all_with_wrappers()
    } else {
        vec![ActivationKind::parse(&args.activation)?]
    };
    if args.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: Option<crate::activation::ActivationCheck> = None;
    println!(
        "{:<26} {:>7} {:>14}  status",
        "activation", "points", "max_rel_error"
    );
    for kind in kinds {
        let check = check_activation(kind, args.trials, args.fault_scale, &mut rng)?;
        println!(
            "{:<26} {:>7} {:>14.3e}  {}",
            check.activation,
            check.points,
            check.max_rel_error,
            if check.passed() { "pass" } else { "FAIL" }
        );
        if worst
            .as_ref()
            .is_none_or(|w| check.max_rel_error > w.max_rel_error)
        {
            worst = Some(check);
        }
    }
    match worst {
        Some(w) if !w.passed() => Err(Failure {
            code: EXIT_FAILURE,
            message: format!(
                "gradient check failed; worst offender {} with relative error {:.3e} ({})",
                w.activation, w.max_rel_error, w.worst
            ),
        }),
        _ => Ok(EXIT_OK),
    }
}
