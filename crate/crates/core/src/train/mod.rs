//! Training protocol: learning-rate sweeps, seeded training runs with
//! per-epoch evaluation, run reports and their aggregation.

mod aggregate;
mod eval;
mod lr_find;
mod report;
mod schedule;
mod step;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use aggregate::{
    aggregate, write_aggregate_csv, write_benchmark_csv, write_lr_ranges_csv, Metric, SummaryRow,
};
pub use eval::{evaluate, label_rank, EvalMetrics, Tally, EVAL_BATCH};
pub use lr_find::{lr_find, lr_sweep, LrFindConfig, LrFindResult, Quadratic, SweepTarget};
pub use report::{
    read_json, report_paths, write_json, ConfigEcho, EpochMetrics, RunReport, Timing,
};
pub use schedule::Schedule;
pub use step::{train_step, StepResult};

use crate::activation::ActivationSpec;
use crate::autograd::{Adam, StepOutcome};
use crate::data::{
    augment, mixup, DataSplits, Dataset, DatasetName, DEFAULT_MIXUP_ALPHA, DEFAULT_PAD,
};
use crate::error::{Error, Result};
use crate::models::{build_model, Architecture, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub dataset: DatasetName,
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; replaced per seed by the sweep when `lr_find` is set.
    pub lr: f64,
    pub lr_find: Option<LrFindConfig>,
    pub seeds: Vec<u64>,
    pub mixup: bool,
    /// Random flips and padded crops of training batches.
    pub augment: bool,
    pub schedule: Schedule,
}

impl TrainConfig {
    /// LENET on MNIST: 5 epochs, batch 64, lr 1e-3, constant schedule,
    /// no augmentation.
    pub fn mnist(arch: Architecture, activation: ActivationSpec) -> Self {
        Self {
            model: ModelConfig::new(arch, activation),
            dataset: DatasetName::Mnist,
            epochs: 5,
            batch_size: 64,
            lr: 1e-3,
            lr_find: None,
            seeds: vec![0, 1, 2, 3, 4],
            mixup: false,
            augment: false,
            schedule: Schedule::Constant,
        }
    }

    /// Residual network on CIFAR-10: 8 epochs, batch 128, one-cycle
    /// schedule, flips, padded crops and mixup.
    pub fn cifar(activation: ActivationSpec) -> Self {
        Self {
            model: ModelConfig::new(Architecture::MiniResnet, activation),
            dataset: DatasetName::Cifar10,
            epochs: 8,
            batch_size: 128,
            lr: 1e-3,
            lr_find: None,
            seeds: vec![0, 1, 2, 3, 4],
            mixup: true,
            augment: true,
            schedule: Schedule::OneCycle,
        }
    }

    /// The long CIFAR-10 protocol: 24 epochs at batch 512, width 4.
    pub fn cifar_long(activation: ActivationSpec) -> Self {
        let mut c = Self::cifar(activation);
        c.model = c.model.with_widen_factor(4);
        c.epochs = 24;
        c.batch_size = 512;
        c
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Contract(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Contract("at least one seed is required".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Contract(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.dataset.image_shape() != self.model.input_shape {
            return Err(Error::Contract(format!(
                "{} expects {:?} inputs but {} images are {:?}",
                self.model.arch,
                self.model.input_shape,
                self.dataset,
                self.dataset.image_shape()
            )));
        }
        if let Some(f) = &self.lr_find {
            f.validate()?;
        }
        Ok(())
    }

    fn echo(&self, data: &DataSplits) -> ConfigEcho {
        ConfigEcho {
            arch: self.model.arch,
            dataset: self.dataset,
            activation: (&self.model.activation).into(),
            widen_factor: self.model.widen_factor,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_find: self.lr_find,
            mixup: self.mixup,
            augment: self.augment,
            schedule: self.schedule,
            train_examples: data.train.len(),
            test_examples: data.test.len(),
        }
    }
}

/// A finished run plus the time its learning-rate sweep took.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub lr_find_seconds: f64,
}

fn check_data(config: &TrainConfig, data: &DataSplits) -> Result<()> {
    for d in [&data.train, &data.test] {
        if d.name != config.dataset {
            return Err(Error::Contract(format!(
                "configured for {} but given {}",
                config.dataset, d.name
            )));
        }
        if d.is_empty() {
            return Err(Error::Contract(format!("the {:?} split is empty", d.split)));
        }
    }
    Ok(())
}

/// Trains one model per seed and reports each run. A run whose loss turns
/// non-finite stops early and is marked diverged; the other seeds continue.
pub fn train(config: &TrainConfig, data: &DataSplits) -> Result<Vec<RunOutput>> {
    config.validate()?;
    check_data(config, data)?;
    config
        .seeds
        .iter()
        .map(|&seed| train_seed(config, data, seed))
        .collect()
}

fn shuffled_batches(
    order: &mut [usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// One seeded run: initialization, optional sweep, epochs of shuffled
/// mini-batches with Adam, evaluation after every epoch.
pub fn train_seed(config: &TrainConfig, data: &DataSplits, seed: u64) -> Result<RunOutput> {
    config.validate()?;
    check_data(config, data)?;
    let mut model = build_model(&config.model, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let (lr_find_result, lr_find_seconds) = match &config.lr_find {
        Some(f) => {
            let t = Instant::now();
            let r = lr_find(&model, &data.train, config.batch_size, f, seed)?;
            (Some(r), t.elapsed().as_secs_f64())
        }
        None => (None, 0.0),
    };
    let lr = lr_find_result
        .as_ref()
        .map_or(config.lr, |r| r.suggested_lr);

    let mut adam = Adam::new(model.params(), lr);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let steps_per_epoch = data.train.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut step = 0;
    let mut initial_loss = f64::NAN;
    let mut skipped_steps = 0;
    let mut diverged = false;
    let mut epochs = Vec::with_capacity(config.epochs);

    'epochs: for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for idx in shuffled_batches(&mut order, config.batch_size, &mut rng) {
            let mut batch = data.train.batch(&idx)?;
            if config.augment {
                batch = augment(&batch, 0.5, DEFAULT_PAD, &mut rng)?;
            }
            if config.mixup && batch.len() > 1 {
                batch = mixup(&batch, DEFAULT_MIXUP_ALPHA, &mut rng)?;
            }
            adam.set_lr(config.schedule.lr_at(lr, step, total_steps));
            let r = train_step(&mut model, &mut adam, &batch)?;
            if step == 0 {
                initial_loss = r.loss;
            }
            step += 1;
            match r.outcome {
                None => {
                    diverged = true;
                    break 'epochs;
                }
                Some(StepOutcome::SkippedNonFinite) => skipped_steps += 1,
                Some(StepOutcome::Applied) => {}
            }
            loss_sum += r.loss * batch.len() as f64;
            seen += batch.len();
        }
        let val = evaluate(&mut model, &data.test)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss: val.loss,
            accuracy: val.accuracy,
            top5_accuracy: val.top5,
            epoch_seconds: start.elapsed().as_secs_f64(),
        });
    }

    Ok(RunOutput {
        report: RunReport {
            activation: config.model.activation.name(),
            seed,
            config: config.echo(data),
            lr_used: lr,
            lr_find: lr_find_result,
            initial_loss,
            diverged,
            skipped_steps,
            epochs,
            snapshot: model.snapshot(),
            weights_fingerprint: format!("{:016x}", model.params().fingerprint()),
        },
        lr_find_seconds,
    })
}

/// Evaluates a freshly built model (seed `seed`) on `data`; the loss a run
/// starts from.
pub fn initial_metrics(config: &ModelConfig, data: &Dataset, seed: u64) -> Result<EvalMetrics> {
    let mut model = build_model(config, seed)?;
    evaluate(&mut model, data)
}
