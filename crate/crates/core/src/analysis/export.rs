use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::boxstats::BoxStats;
use super::grouping::{BlockGrid, PatternResult};
use super::snapshot::{ParamSnapshot, Slot};
use crate::activation::Envelope;
use crate::error::{Error, Result};

pub const POSITIONS_HEADER: [&str; 9] = [
    "run",
    "activation",
    "position_index",
    "block_index",
    "slot",
    "alpha",
    "beta",
    "mean_shift",
    "extra",
];
pub const BLOCKS_HEADER: [&str; 7] = ["param", "block_index", "slot", "n", "mean", "min", "max"];
pub const BOXSTATS_HEADER: [&str; 9] = [
    "param", "slot", "n", "min", "q1", "median", "q3", "max", "outliers",
];
pub const ENVELOPE_HEADER: [&str; 5] = ["activation", "x", "min", "max", "initial"];
pub const PATTERN_HEADER: [&str; 4] = ["block_index", "beta_a1", "beta_a2", "a1_greater"];

/// A snapshot tagged with the run (report file stem) it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSnapshot {
    pub run: String,
    pub snapshot: ParamSnapshot,
}

/// Box statistics of one parameter in one slot, pooled over blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotBox {
    pub param: String,
    pub slot: Slot,
    pub stats: BoxStats,
}

/// Response envelope of one activation together with its default-init curve.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedEnvelope {
    pub activation: String,
    pub envelope: Envelope,
    pub initial: Vec<f64>,
}

/// Per-block β means and the comparison derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRecord {
    pub beta_pairs: Vec<(f64, f64)>,
    pub result: PatternResult,
}

/// Everything `export_report` writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisOutput {
    pub snapshots: Vec<RunSnapshot>,
    /// `None` when the snapshots have no block structure.
    pub grid: Option<BlockGrid>,
    pub boxes: Vec<SlotBox>,
    pub envelopes: Vec<NamedEnvelope>,
    pub pattern: Option<PatternRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PositionRow {
    run: String,
    activation: String,
    position_index: usize,
    block_index: Option<usize>,
    slot: Slot,
    alpha: Option<f64>,
    beta: Option<f64>,
    mean_shift: Option<f64>,
    extra: String,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn join(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

fn encode_extra(extra: &BTreeMap<String, f64>) -> String {
    extra
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_extra(path: &Path, s: &str) -> Result<BTreeMap<String, f64>> {
    let bad = |m: String| Error::Format {
        path: path.to_path_buf(),
        message: m,
    };
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed extra parameter `{pair}`")))?;
            let v = v
                .parse()
                .map_err(|_| bad(format!("non-numeric extra parameter `{pair}`")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

struct Sheet {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Sheet {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| csv_err(&path, e))?;
        writer.write_record(header).map_err(|e| csv_err(&path, e))?;
        Ok(Sheet { path, writer })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| csv_err(&self.path, e))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_positions(dir: &Path, snapshots: &[RunSnapshot]) -> Result<PathBuf> {
    let mut sheet = Sheet::create(dir, "positions.csv", &POSITIONS_HEADER)?;
    for RunSnapshot { run, snapshot: s } in snapshots {
        sheet.row([
            run.clone(),
            s.activation.clone(),
            s.position_index.to_string(),
            opt(s.block_index),
            s.slot.to_string(),
            opt(s.alpha),
            opt(s.beta),
            opt(s.mean_shift),
            encode_extra(&s.extra),
        ])?;
    }
    sheet.finish()
}

fn write_blocks(dir: &Path, grid: Option<&BlockGrid>) -> Result<PathBuf> {
    let mut sheet = Sheet::create(dir, "blocks.csv", &BLOCKS_HEADER)?;
    if let Some(grid) = grid {
        for param in grid.param_names() {
            for ((block, slot), cell) in &grid.cells {
                let Some(values) = cell.get(&param) else {
                    continue;
                };
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                sheet.row([
                    param.clone(),
                    block.to_string(),
                    slot.to_string(),
                    values.len().to_string(),
                    mean.to_string(),
                    min.to_string(),
                    max.to_string(),
                ])?;
            }
        }
    }
    sheet.finish()
}

fn write_boxstats(dir: &Path, boxes: &[SlotBox]) -> Result<PathBuf> {
    let mut sheet = Sheet::create(dir, "boxstats.csv", &BOXSTATS_HEADER)?;
    for b in boxes {
        let s = &b.stats;
        sheet.row([
            b.param.clone(),
            b.slot.to_string(),
            s.n.to_string(),
            s.min.to_string(),
            s.q1.to_string(),
            s.median.to_string(),
            s.q3.to_string(),
            s.max.to_string(),
            join(&s.outliers, ";"),
        ])?;
    }
    sheet.finish()
}

fn write_envelopes(dir: &Path, envelopes: &[NamedEnvelope]) -> Result<PathBuf> {
    let mut sheet = Sheet::create(dir, "envelope.csv", &ENVELOPE_HEADER)?;
    for e in envelopes {
        let env = &e.envelope;
        for i in 0..env.x.len() {
            sheet.row([
                e.activation.clone(),
                env.x[i].to_string(),
                env.min[i].to_string(),
                env.max[i].to_string(),
                e.initial[i].to_string(),
            ])?;
        }
    }
    sheet.finish()
}

fn write_pattern(dir: &Path, pattern: &PatternRecord) -> Result<PathBuf> {
    let mut sheet = Sheet::create(dir, "pattern.csv", &PATTERN_HEADER)?;
    for (block, ((a1, a2), greater)) in pattern
        .beta_pairs
        .iter()
        .zip(&pattern.result.per_block)
        .enumerate()
    {
        sheet.row([
            block.to_string(),
            a1.to_string(),
            a2.to_string(),
            greater.to_string(),
        ])?;
    }
    sheet.finish()
}

/// Writes the analysis CSV files into `dir`, creating it if needed, and
/// returns the paths written.
///
/// `positions.csv` is always written. `blocks.csv`, `boxstats.csv` and
/// `envelope.csv` are written when a block grid exists, and as header-only
/// files when there are no snapshots at all. `pattern.csv` accompanies a
/// pattern record.
pub fn export_report(output: &AnalysisOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![write_positions(dir, &output.snapshots)?];
    if output.grid.is_some() || output.snapshots.is_empty() {
        written.push(write_blocks(dir, output.grid.as_ref())?);
        written.push(write_boxstats(dir, &output.boxes)?);
        written.push(write_envelopes(dir, &output.envelopes)?);
    }
    if let Some(p) = &output.pattern {
        written.push(write_pattern(dir, p)?);
    }
    Ok(written)
}

/// Parses a `positions.csv` written by [`export_report`].
pub fn read_positions(path: &Path) -> Result<Vec<RunSnapshot>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(POSITIONS_HEADER) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {header:?}"),
        });
    }
    reader
        .deserialize::<PositionRow>()
        .map(|row| {
            let row = row.map_err(|e| csv_err(path, e))?;
            Ok(RunSnapshot {
                run: row.run,
                snapshot: ParamSnapshot {
                    activation: row.activation,
                    position_index: row.position_index,
                    block_index: row.block_index,
                    slot: row.slot,
                    alpha: row.alpha,
                    beta: row.beta,
                    mean_shift: row.mean_shift,
                    extra: decode_extra(path, &row.extra)?,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_lines(p: &Path) -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn empty_output_gives_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let written = export_report(&AnalysisOutput::default(), dir.path()).unwrap();
        assert_eq!(written.len(), 4);
        for p in written {
            assert_eq!(read_lines(&p).len(), 1, "{}", p.display());
        }
        assert_eq!(
            read_lines(&dir.path().join("positions.csv"))[0],
            POSITIONS_HEADER.join(",")
        );
    }

    #[test]
    fn positions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut extra = BTreeMap::new();
        extra.insert("a".to_string(), 0.1 + 0.2);
        let snapshots = vec![
            RunSnapshot {
                run: "seed0".into(),
                snapshot: ParamSnapshot {
                    activation: "dual_line".into(),
                    position_index: 3,
                    block_index: Some(1),
                    slot: Slot::A2,
                    alpha: Some(0.0123456789012345),
                    beta: Some(1.0 / 3.0),
                    mean_shift: Some(-0.22),
                    extra: BTreeMap::new(),
                },
            },
            RunSnapshot {
                run: "seed1".into(),
                snapshot: ParamSnapshot {
                    activation: "pelu".into(),
                    position_index: 0,
                    block_index: None,
                    slot: Slot::Layer,
                    alpha: None,
                    beta: None,
                    mean_shift: None,
                    extra,
                },
            },
        ];
        let out = AnalysisOutput {
            snapshots: snapshots.clone(),
            ..Default::default()
        };
        export_report(&out, dir.path()).unwrap();
        let back = read_positions(&dir.path().join("positions.csv")).unwrap();
        assert_eq!(back, snapshots);
    }

    #[test]
    fn rows_match_header_width() {
        let dir = tempfile::tempdir().unwrap();
        let stats = super::super::box_stats(&[1.0, 2.0, 3.0, 40.0]).unwrap();
        let out = AnalysisOutput {
            boxes: vec![SlotBox {
                param: "beta".into(),
                slot: Slot::A1,
                stats,
            }],
            envelopes: vec![NamedEnvelope {
                activation: "dp_relu".into(),
                envelope: Envelope {
                    x: vec![-1.0, 1.0],
                    min: vec![-0.1, 0.5],
                    max: vec![-0.01, 2.0],
                },
                initial: vec![-0.01, 1.0],
            }],
            ..Default::default()
        };
        export_report(&out, dir.path()).unwrap();
        for (name, width) in [
            ("boxstats.csv", BOXSTATS_HEADER.len()),
            ("envelope.csv", ENVELOPE_HEADER.len()),
        ] {
            let mut r = csv::Reader::from_path(dir.path().join(name)).unwrap();
            assert_eq!(r.headers().unwrap().len(), width);
            for rec in r.records() {
                assert_eq!(rec.unwrap().len(), width);
            }
        }
    }
}
