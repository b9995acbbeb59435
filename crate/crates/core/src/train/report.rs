use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::lr_find::{LrFindConfig, LrFindResult};
use super::schedule::Schedule;
use crate::activation::ActivationSpecRecord;
use crate::analysis::ParamSnapshot;
use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::models::Architecture;

/// Non-finite values are written as `null` and read back as NaN, since
/// JSON has no NaN or infinity.
pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Configuration echo stored in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub arch: Architecture,
    pub dataset: DatasetName,
    pub activation: ActivationSpecRecord,
    pub widen_factor: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_find: Option<LrFindConfig>,
    pub mixup: bool,
    pub augment: bool,
    pub schedule: Schedule,
    pub train_examples: usize,
    pub test_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(with = "finite_or_null")]
    pub train_loss: f64,
    #[serde(with = "finite_or_null")]
    pub val_loss: f64,
    pub accuracy: f64,
    pub top5_accuracy: f64,
    /// Wall-clock time; kept out of the report file (see [`RunReport::write`]).
    #[serde(skip)]
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub activation: String,
    pub seed: u64,
    pub config: ConfigEcho,
    pub lr_used: f64,
    pub lr_find: Option<LrFindResult>,
    /// Loss of the first training batch before any update.
    #[serde(with = "finite_or_null")]
    pub initial_loss: f64,
    pub diverged: bool,
    /// Updates skipped because a gradient was non-finite.
    pub skipped_steps: usize,
    pub epochs: Vec<EpochMetrics>,
    pub snapshot: Vec<ParamSnapshot>,
    /// Hash of every final parameter value, in hex.
    pub weights_fingerprint: String,
}

/// Wall-clock measurements of a run, stored next to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub epoch_seconds: Vec<f64>,
    pub lr_find_seconds: f64,
}

impl RunReport {
    /// `<arch>_<dataset>_<activation>_seed<seed>`.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_{}_seed{}",
            self.config.arch, self.config.dataset, self.activation, self.seed
        )
    }

    pub fn final_epoch(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    /// Writes `<stem>.json` and the timing sidecar `<stem>.timing.json`
    /// into `dir`. Timing lives apart so that the report itself is a pure
    /// function of configuration, seed and data.
    pub fn write(&self, dir: &Path, lr_find_seconds: f64) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.json", self.file_stem()));
        write_json(&path, self)?;
        let timing = Timing {
            epoch_seconds: self.epochs.iter().map(|e| e.epoch_seconds).collect(),
            lr_find_seconds,
        };
        write_json(
            &dir.join(format!("{}.timing.json", self.file_stem())),
            &timing,
        )?;
        Ok(path)
    }

    /// Reads a report, merging epoch times from its sidecar when present.
    pub fn read(path: &Path) -> Result<Self> {
        let mut report: RunReport = read_json(path)?;
        let timing_path = timing_path(path);
        if timing_path.exists() {
            let timing: Timing = read_json(&timing_path)?;
            for (e, s) in report.epochs.iter_mut().zip(timing.epoch_seconds) {
                e.epoch_seconds = s;
            }
        }
        Ok(report)
    }
}

fn timing_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    report.with_file_name(format!("{stem}.timing.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Every run report (`*.json`, excluding timing sidecars) in `dir`, sorted
/// by file name.
pub fn report_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            name.ends_with(".json") && !name.ends_with(".timing.json")
        })
        .collect();
    paths.sort();
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationSpec;

    fn report() -> RunReport {
        RunReport {
            activation: "dual_line".into(),
            seed: 4,
            config: ConfigEcho {
                arch: Architecture::Lenet5,
                dataset: DatasetName::Mnist,
                activation: (&ActivationSpec::dual_line()).into(),
                widen_factor: 1,
                epochs: 1,
                batch_size: 64,
                lr: 1e-3,
                lr_find: None,
                mixup: false,
                augment: false,
                schedule: Schedule::Constant,
                train_examples: 10,
                test_examples: 5,
            },
            lr_used: 1e-3,
            lr_find: None,
            initial_loss: f64::NAN,
            diverged: true,
            skipped_steps: 0,
            epochs: vec![EpochMetrics {
                epoch: 0,
                train_loss: 1.5,
                val_loss: f64::INFINITY,
                accuracy: 0.5,
                top5_accuracy: 0.9,
                epoch_seconds: 2.5,
            }],
            snapshot: Vec::new(),
            weights_fingerprint: "00".into(),
        }
    }

    #[test]
    fn write_read_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        let path = r.write(dir.path(), 0.0).unwrap();
        assert!(path.ends_with("lenet5_mnist_dual_line_seed4.json"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains("epoch_seconds"));
        let back = RunReport::read(&path).unwrap();
        assert_eq!(back.epochs[0].epoch_seconds, 2.5);
        assert!(back.initial_loss.is_nan());
        assert!(back.epochs[0].val_loss.is_nan());
        assert_eq!(report_paths(dir.path()).unwrap(), vec![path]);
    }

    #[test]
    fn malformed_json_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        fs::write(&p, "{").unwrap();
        let err = RunReport::read(&p).unwrap_err();
        assert!(err.to_string().contains("bad.json"));
    }
}
