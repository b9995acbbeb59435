//! Studies of learned activation parameters: per-position listings, block
//! grouping, box statistics, the A-1/A-2 β comparison and response
//! envelopes, exported as plot-ready CSV.

mod boxstats;
mod export;
mod grouping;
mod snapshot;

use std::collections::BTreeMap;

pub use boxstats::{box_stats, BoxStats};
pub use export::{
    export_report, read_positions, AnalysisOutput, NamedEnvelope, PatternRecord, RunSnapshot,
    SlotBox, BLOCKS_HEADER, BOXSTATS_HEADER, ENVELOPE_HEADER, PATTERN_HEADER, POSITIONS_HEADER,
};
pub use grouping::{block_grouping, pattern_test, BlockGrid, CellValues, Grouping, PatternResult};
pub use snapshot::{ParamSnapshot, Slot};

use crate::activation::{linspace, response_envelope, ActivationKind, ActivationSpec};
use crate::error::Result;

/// Range and resolution of the grid response envelopes are evaluated on.
pub const ENVELOPE_RANGE: (f64, f64) = (-5.0, 5.0);
pub const ENVELOPE_POINTS: usize = 201;

/// Response envelope of every learnable activation among `snapshots`, with
/// the default-initialized curve alongside.
pub fn envelopes(snapshots: &[RunSnapshot]) -> Result<Vec<NamedEnvelope>> {
    let mut by_name: BTreeMap<&str, Vec<&ParamSnapshot>> = BTreeMap::new();
    for s in snapshots {
        by_name
            .entry(&s.snapshot.activation)
            .or_default()
            .push(&s.snapshot);
    }
    let grid = linspace(ENVELOPE_RANGE.0, ENVELOPE_RANGE.1, ENVELOPE_POINTS);
    let mut out = Vec::new();
    for (name, snaps) in by_name {
        let Ok(kind) = ActivationKind::parse(name) else {
            continue;
        };
        if !kind.is_learnable() {
            continue;
        }
        let names = kind.param_names();
        let sets: Vec<Vec<f64>> = snaps.iter().filter_map(|s| s.values_for(&names)).collect();
        if sets.is_empty() {
            continue;
        }
        let init = ActivationSpec::new(kind).initial_params();
        out.push(NamedEnvelope {
            activation: name.to_string(),
            envelope: response_envelope(kind, &sets, &grid)?,
            initial: grid.iter().map(|&x| kind.eval(x, &init)).collect(),
        });
    }
    Ok(out)
}

/// Runs every analysis over `snapshots`. Without block structure only the
/// per-position listing is produced.
pub fn analyze(mut snapshots: Vec<RunSnapshot>) -> Result<AnalysisOutput> {
    for s in &snapshots {
        s.snapshot.validate()?;
    }
    snapshots.sort_by(|a, b| {
        (&a.run, a.snapshot.position_index).cmp(&(&b.run, b.snapshot.position_index))
    });
    let plain: Vec<ParamSnapshot> = snapshots.iter().map(|s| s.snapshot.clone()).collect();
    let grid = match block_grouping(&plain)? {
        Grouping::Blocks(grid) => grid,
        Grouping::PerPosition(_) => {
            return Ok(AnalysisOutput {
                snapshots,
                ..Default::default()
            })
        }
    };
    let mut boxes = Vec::new();
    for param in grid.param_names() {
        for slot in [Slot::A1, Slot::A2] {
            let values = grid.slot_values(&param, slot);
            if !values.is_empty() {
                boxes.push(SlotBox {
                    param: param.clone(),
                    slot,
                    stats: box_stats(&values)?,
                });
            }
        }
    }
    let pattern = grid.param_names().iter().any(|p| p == "beta").then(|| {
        let beta_pairs = grid.mean_pairs("beta");
        PatternRecord {
            result: pattern_test(&beta_pairs),
            beta_pairs,
        }
    });
    Ok(AnalysisOutput {
        envelopes: envelopes(&snapshots)?,
        snapshots,
        grid: Some(grid),
        boxes,
        pattern,
    })
}
