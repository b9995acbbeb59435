use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Model;

/// Examples per forward pass during evaluation.
pub const EVAL_BATCH: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub top5: f64,
}

/// Position of `label` when the logits are sorted descending, ties going
/// to the lower class index.
pub fn label_rank(logits: &[f64], label: usize) -> usize {
    let l = logits[label];
    logits
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > l || (v == l && j < label))
        .count()
}

/// Running sums of loss, top-1 hits and top-5 hits.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub loss_sum: f64,
    pub top1: usize,
    pub top5: usize,
    pub n: usize,
}

impl Tally {
    /// Adds a batch of `[B, K]` logits (row-major) with labels.
    pub fn add(&mut self, logits: &[f64], k: usize, labels: &[usize]) -> Result<()> {
        if logits.len() != labels.len() * k {
            return Err(Error::dim(format!(
                "{} logits for {} labels of {k} classes",
                logits.len(),
                labels.len()
            )));
        }
        for (row, &label) in logits.chunks(k).zip(labels) {
            if label >= k {
                return Err(Error::Label {
                    index: self.n,
                    label,
                    classes: k,
                });
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            self.loss_sum += log_z - row[label];
            let rank = label_rank(row, label);
            self.top1 += usize::from(rank == 0);
            self.top5 += usize::from(rank < 5);
            self.n += 1;
        }
        Ok(())
    }

    pub fn metrics(&self) -> EvalMetrics {
        let n = self.n.max(1) as f64;
        EvalMetrics {
            loss: self.loss_sum / n,
            accuracy: self.top1 as f64 / n,
            top5: self.top5 as f64 / n,
        }
    }
}

/// Mean cross-entropy, accuracy and top-5 accuracy of `model` over `data`,
/// with batch norm on running statistics and no gradient tracking.
pub fn evaluate(model: &mut Model, data: &Dataset) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::Contract("evaluation on an empty dataset".into()));
    }
    let k = model.config().num_classes;
    let mut tally = Tally::default();
    for batch in data.batches(EVAL_BATCH) {
        let batch = batch?;
        let logits = model.predict(batch.images)?;
        tally.add(logits.data(), k, &batch.labels)?;
    }
    Ok(tally.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_break_ties_by_index() {
        let uniform = [0.0; 10];
        for l in 0..10 {
            assert_eq!(label_rank(&uniform, l), l);
        }
        assert_eq!(label_rank(&[1.0, 3.0, 2.0], 2), 1);
    }

    #[test]
    fn uniform_logits_on_balanced_labels() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let mut t = Tally::default();
        t.add(&vec![0.0; 1000], 10, &labels).unwrap();
        let m = t.metrics();
        assert_eq!(m.accuracy, 0.1);
        assert_eq!(m.top5, 0.5);
        assert!((m.loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_on_true_label_is_perfect() {
        let labels = [3usize, 7, 0];
        let mut logits = vec![0.0; 30];
        for (i, &l) in labels.iter().enumerate() {
            logits[i * 10 + l] = 1.0;
        }
        let mut t = Tally::default();
        t.add(&logits, 10, &labels).unwrap();
        assert_eq!(t.metrics().accuracy, 1.0);
        assert_eq!(t.metrics().top5, 1.0);
    }
}
