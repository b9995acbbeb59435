use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::train_step;
use crate::autograd::Adam;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Model;

/// Sweep settings of the learning-rate finder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrFindConfig {
    pub min_lr: f64,
    pub max_lr: f64,
    pub num_iters: usize,
    /// Weight of the previous value in the exponential moving average.
    pub smoothing: f64,
    /// The sweep stops once the smoothed loss exceeds this multiple of the
    /// best smoothed loss.
    pub divergence_factor: f64,
    /// Leading and trailing points left out when looking for the steepest
    /// descent: the moving average is still settling at the start and the
    /// loss is blowing up at the end.
    #[serde(default)]
    pub skip_start: usize,
    #[serde(default)]
    pub skip_end: usize,
}

impl Default for LrFindConfig {
    fn default() -> Self {
        Self {
            min_lr: 1e-7,
            max_lr: 10.0,
            num_iters: 100,
            smoothing: 0.98,
            divergence_factor: 4.0,
            skip_start: 10,
            skip_end: 5,
        }
    }
}

impl LrFindConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr > 0.0 && self.min_lr < self.max_lr && self.max_lr.is_finite()) {
            return Err(Error::Contract(format!(
                "learning-rate sweep needs 0 < min_lr < max_lr, got {} and {}",
                self.min_lr, self.max_lr
            )));
        }
        if self.num_iters < 10 {
            return Err(Error::Contract(format!(
                "learning-rate sweep needs at least 10 iterations, got {}",
                self.num_iters
            )));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Contract(format!(
                "smoothing {} outside [0, 1)",
                self.smoothing
            )));
        }
        Ok(())
    }

    /// Learning rate of iteration `i`, log-uniform from `min_lr` to `max_lr`.
    pub fn lr_at(&self, i: usize) -> f64 {
        let t = i as f64 / (self.num_iters - 1) as f64;
        self.min_lr * (self.max_lr / self.min_lr).powf(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrFindResult {
    pub lrs: Vec<f64>,
    pub losses: Vec<f64>,
    pub smoothed_losses: Vec<f64>,
    /// Point of steepest descent of the smoothed loss against log lr.
    pub suggested_lr: f64,
    /// One tenth of the rate at the smallest smoothed loss.
    pub min_loss_lr: f64,
    pub min_lr_bound: f64,
    pub max_lr_bound: f64,
    pub stopped_early: bool,
}

/// Something a learning-rate sweep can drive one step at a time.
pub trait SweepTarget {
    /// Loss at the current state, then one update at rate `lr`.
    fn step(&mut self, lr: f64) -> Result<f64>;
}

/// `f(w) = ½w²` minimized by plain gradient descent; the step size `1`
/// reaches the minimum in one update and steps above `2` diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub w: f64,
}

impl SweepTarget for Quadratic {
    fn step(&mut self, lr: f64) -> Result<f64> {
        let loss = 0.5 * self.w * self.w;
        self.w -= lr * self.w;
        Ok(loss)
    }
}

/// Index of the most negative slope of `ys` against `xs`, using one-sided
/// differences at the ends and central differences inside.
fn steepest_descent(xs: &[f64], ys: &[f64]) -> usize {
    let n = xs.len();
    let slope = |i: usize| {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == n - 1 => (n - 2, n - 1),
            i => (i - 1, i + 1),
        };
        (ys[b] - ys[a]) / (xs[b] - xs[a])
    };
    (0..n)
        .map(|i| (i, slope(i)))
        .fold(
            (0, f64::INFINITY),
            |best, (i, s)| if s < best.1 { (i, s) } else { best },
        )
        .0
}

/// Runs the exponential learning-rate sweep on `target`.
pub fn lr_sweep<T: SweepTarget + ?Sized>(
    target: &mut T,
    config: &LrFindConfig,
) -> Result<LrFindResult> {
    config.validate()?;
    let mut lrs = Vec::new();
    let mut losses = Vec::new();
    let mut smoothed = Vec::new();
    let mut avg = 0.0;
    let mut best = f64::INFINITY;
    let mut stopped_early = false;
    for i in 0..config.num_iters {
        let lr = config.lr_at(i);
        let loss = target.step(lr)?;
        if !loss.is_finite() {
            if i == 0 {
                return Err(Error::SweepDiverged {
                    loss,
                    min_lr: config.min_lr,
                });
            }
            stopped_early = true;
            break;
        }
        avg = config.smoothing * avg + (1.0 - config.smoothing) * loss;
        let s = avg / (1.0 - config.smoothing.powi(i as i32 + 1));
        lrs.push(lr);
        losses.push(loss);
        smoothed.push(s);
        best = best.min(s);
        if i > 0 && s > config.divergence_factor * best {
            stopped_early = true;
            break;
        }
    }
    let log_lrs: Vec<f64> = lrs.iter().map(|l: &f64| l.ln()).collect();
    // Short sweeps that stopped early use every point.
    let (lo, hi) = if lrs.len() >= config.skip_start + config.skip_end + 2 {
        (config.skip_start, lrs.len() - config.skip_end)
    } else {
        (0, lrs.len())
    };
    let suggested_lr = if hi - lo >= 2 {
        lrs[lo + steepest_descent(&log_lrs[lo..hi], &smoothed[lo..hi])]
    } else {
        lrs[0]
    };
    let argmin = smoothed
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < smoothed[b] { i } else { b });
    Ok(LrFindResult {
        min_loss_lr: lrs[argmin] / 10.0,
        suggested_lr,
        min_lr_bound: lrs[0],
        max_lr_bound: *lrs.last().expect("at least one step"),
        lrs,
        losses,
        smoothed_losses: smoothed,
        stopped_early,
    })
}

/// Adam training of a private copy of a model, one mini-batch per step.
struct ModelSweep<'a> {
    model: Model,
    adam: Adam,
    data: &'a Dataset,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl SweepTarget for ModelSweep<'_> {
    fn step(&mut self, lr: f64) -> Result<f64> {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.data.batch(&self.order[self.cursor..end])?;
        self.cursor = end;
        self.adam.set_lr(lr);
        Ok(train_step(&mut self.model, &mut self.adam, &batch)?.loss)
    }
}

/// Learning-rate sweep on a copy of `model`; `model` itself is not touched.
pub fn lr_find(
    model: &Model,
    data: &Dataset,
    batch_size: usize,
    config: &LrFindConfig,
    seed: u64,
) -> Result<LrFindResult> {
    if data.is_empty() || batch_size == 0 {
        return Err(Error::Contract(
            "learning-rate sweep needs data and a positive batch size".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let copy = model.clone();
    let mut sweep = ModelSweep {
        adam: Adam::new(copy.params(), config.min_lr),
        model: copy,
        data,
        batch_size: batch_size.min(data.len()),
        order,
        cursor: 0,
        rng,
    };
    lr_sweep(&mut sweep, config)
}
