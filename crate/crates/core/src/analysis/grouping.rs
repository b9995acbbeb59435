use std::collections::BTreeMap;

use super::snapshot::{ParamSnapshot, Slot};
use crate::error::{Error, Result};

/// Values of every parameter collected for one `(block, slot)` cell.
pub type CellValues = BTreeMap<String, Vec<f64>>;

/// In-block sites arranged on a `blocks × {A-1, A-2}` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub num_blocks: usize,
    pub cells: BTreeMap<(usize, Slot), CellValues>,
    /// Number of snapshots placed on the grid.
    pub placed: usize,
}

impl BlockGrid {
    pub fn cell(&self, block: usize, slot: Slot) -> Option<&CellValues> {
        self.cells.get(&(block, slot))
    }

    /// All values of `param` in `slot`, across blocks in block order.
    pub fn slot_values(&self, param: &str, slot: Slot) -> Vec<f64> {
        (0..self.num_blocks)
            .filter_map(|b| self.cell(b, slot))
            .filter_map(|c| c.get(param))
            .flatten()
            .copied()
            .collect()
    }

    /// Per-block mean of `param` for `(A-1, A-2)`.
    pub fn mean_pairs(&self, param: &str) -> Vec<(f64, f64)> {
        let mean = |b: usize, s: Slot| {
            let v = self
                .cell(b, s)
                .and_then(|c| c.get(param))
                .cloned()
                .unwrap_or_default();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        (0..self.num_blocks)
            .map(|b| (mean(b, Slot::A1), mean(b, Slot::A2)))
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .cells
            .values()
            .flat_map(|c| c.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Result of [`block_grouping`].
#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    Blocks(BlockGrid),
    /// The network has no repeating blocks; sites listed by position.
    PerPosition(Vec<ParamSnapshot>),
}

fn named_values(s: &ParamSnapshot) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = [
        ("alpha", s.alpha),
        ("beta", s.beta),
        ("mean_shift", s.mean_shift),
    ]
    .into_iter()
    .filter_map(|(n, x)| x.map(|x| (n.to_string(), x)))
    .collect();
    v.extend(s.extra.iter().map(|(k, x)| (k.clone(), *x)));
    v
}

/// Places in-block snapshots on the block grid; stem and head sites are
/// left out. Snapshots from several runs of one model stack in each cell.
pub fn block_grouping(snapshots: &[ParamSnapshot]) -> Result<Grouping> {
    let in_block: Vec<&ParamSnapshot> = snapshots.iter().filter(|s| s.slot.in_block()).collect();
    if in_block.is_empty() {
        let mut listing = snapshots.to_vec();
        listing.sort_by_key(|s| s.position_index);
        return Ok(Grouping::PerPosition(listing));
    }
    let mut cells: BTreeMap<(usize, Slot), CellValues> = BTreeMap::new();
    for s in &in_block {
        let block = s.block_index.ok_or_else(|| {
            Error::Contract(format!(
                "in-block site {} lacks a block index",
                s.position_index
            ))
        })?;
        let cell = cells.entry((block, s.slot)).or_default();
        for (name, v) in named_values(s) {
            cell.entry(name).or_default().push(v);
        }
    }
    let num_blocks = cells.keys().map(|(b, _)| b + 1).max().unwrap_or(0);
    for b in 0..num_blocks {
        for slot in [Slot::A1, Slot::A2] {
            if !cells.contains_key(&(b, slot)) {
                return Err(Error::Contract(format!(
                    "block grid has no {slot} site in block {b}"
                )));
            }
        }
    }
    Ok(Grouping::Blocks(BlockGrid {
        num_blocks,
        cells,
        placed: in_block.len(),
    }))
}

/// Outcome of comparing `β(A-1) > β(A-2)` within every block.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternResult {
    pub per_block: Vec<bool>,
    /// Block 0, the one closest to the input, reported on its own.
    pub first_block: bool,
    /// How many of blocks 1.. satisfy the comparison.
    pub rest_satisfied: usize,
    pub rest_total: usize,
}

pub fn pattern_test(beta_pairs: &[(f64, f64)]) -> PatternResult {
    let per_block: Vec<bool> = beta_pairs.iter().map(|(a1, a2)| a1 > a2).collect();
    let rest = per_block.get(1..).unwrap_or(&[]);
    PatternResult {
        first_block: per_block.first().copied().unwrap_or(false),
        rest_satisfied: rest.iter().filter(|b| **b).count(),
        rest_total: rest.len(),
        per_block,
    }
}
