use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use super::report::RunReport;
use crate::error::{Error, Result};

/// Metrics compared across activations, taken from each run's final epoch
/// (epoch time is the run's mean).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Accuracy,
    Top5Accuracy,
    TrainLoss,
    ValLoss,
    EpochSeconds,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Top5Accuracy,
        Metric::TrainLoss,
        Metric::ValLoss,
        Metric::EpochSeconds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Top5Accuracy => "top5_accuracy",
            Metric::TrainLoss => "train_loss",
            Metric::ValLoss => "val_loss",
            Metric::EpochSeconds => "epoch_seconds",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy | Metric::Top5Accuracy)
    }

    fn of(self, r: &RunReport) -> Option<f64> {
        let last = r.final_epoch()?;
        Some(match self {
            Metric::Accuracy => last.accuracy,
            Metric::Top5Accuracy => last.top5_accuracy,
            Metric::TrainLoss => last.train_loss,
            Metric::ValLoss => last.val_loss,
            Metric::EpochSeconds => {
                r.epochs.iter().map(|e| e.epoch_seconds).sum::<f64>() / r.epochs.len() as f64
            }
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean and maximum of one metric over an activation's runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMax {
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub activation: String,
    pub runs: usize,
    pub diverged_runs: usize,
    pub metrics: BTreeMap<Metric, MeanMax>,
    pub min_lr: f64,
    pub max_lr: f64,
    /// 1-based rank among all rows, per metric.
    pub ranks: BTreeMap<Metric, usize>,
}

impl SummaryRow {
    pub fn mean(&self, m: Metric) -> f64 {
        self.metrics[&m].mean
    }
}

fn mean_max(values: &[f64]) -> MeanMax {
    if values.is_empty() {
        return MeanMax {
            mean: f64::NAN,
            max: f64::NAN,
        };
    }
    MeanMax {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Orders best-first; NaN sorts last.
fn compare(m: Metric, a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ if m.higher_is_better() => b.total_cmp(&a),
        _ => a.total_cmp(&b),
    }
}

/// Per-activation summary of `reports`, rows sorted by activation name.
/// Ranks are ordinal (ties broken by row order), so each metric's ranks
/// are a permutation of `1..=rows`.
pub fn aggregate(reports: &[RunReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(&r.activation).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|(activation, runs)| {
            let metrics = Metric::ALL
                .iter()
                .map(|&m| {
                    let v: Vec<f64> = runs.iter().filter_map(|r| m.of(r)).collect();
                    (m, mean_max(&v))
                })
                .collect();
            let lrs = runs.iter().map(|r| r.lr_used);
            SummaryRow {
                activation: activation.to_string(),
                runs: runs.len(),
                diverged_runs: runs.iter().filter(|r| r.diverged).count(),
                metrics,
                min_lr: lrs.clone().fold(f64::INFINITY, f64::min),
                max_lr: lrs.fold(f64::NEG_INFINITY, f64::max),
                ranks: BTreeMap::new(),
            }
        })
        .collect();
    for m in Metric::ALL {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| compare(m, rows[a].mean(m), rows[b].mean(m)));
        for (rank, i) in order.into_iter().enumerate() {
            rows[i].ranks.insert(m, rank + 1);
        }
    }
    rows
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let to_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long format: `activation,metric,mean,max,rank`.
pub fn write_aggregate_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let body = rows
        .iter()
        .flat_map(|r| {
            Metric::ALL.iter().map(move |&m| {
                let v = r.metrics[&m];
                vec![
                    r.activation.clone(),
                    m.name().to_string(),
                    v.mean.to_string(),
                    v.max.to_string(),
                    r.ranks[&m].to_string(),
                ]
            })
        })
        .collect();
    write_csv(path, &["activation", "metric", "mean", "max", "rank"], body)
}

/// Wide format, one row per activation, ranked by mean accuracy.
pub fn write_benchmark_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut header = vec!["rank", "activation", "runs", "diverged_runs"];
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    header.push("max_accuracy");
    let rank_names: Vec<String> = Metric::ALL
        .iter()
        .map(|m| format!("rank_{}", m.name()))
        .collect();
    header.extend(rank_names.iter().map(String::as_str));
    let mut ordered: Vec<&SummaryRow> = rows.iter().collect();
    ordered.sort_by_key(|r| r.ranks[&Metric::Accuracy]);
    let body = ordered
        .into_iter()
        .map(|r| {
            let mut v = vec![
                r.ranks[&Metric::Accuracy].to_string(),
                r.activation.clone(),
                r.runs.to_string(),
                r.diverged_runs.to_string(),
            ];
            v.extend(Metric::ALL.iter().map(|&m| r.mean(m).to_string()));
            v.push(r.metrics[&Metric::Accuracy].max.to_string());
            v.extend(Metric::ALL.iter().map(|m| r.ranks[m].to_string()));
            v
        })
        .collect();
    write_csv(path, &header, body)
}

/// `activation,min_lr,max_lr`: the learning rates used across seeds.
pub fn write_lr_ranges_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.activation.clone(),
                r.min_lr.to_string(),
                r.max_lr.to_string(),
            ]
        })
        .collect();
    write_csv(path, &["activation", "min_lr", "max_lr"], body)
}
