use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of the run spent warming up in the one-cycle policy.
pub const ONE_CYCLE_PCT_START: f64 = 0.25;
/// The one-cycle warm-up starts at `lr / ONE_CYCLE_DIV`.
pub const ONE_CYCLE_DIV: f64 = 25.0;
/// The one-cycle anneal ends at `lr / (ONE_CYCLE_DIV · ONE_CYCLE_FINAL_DIV)`.
pub const ONE_CYCLE_FINAL_DIV: f64 = 1e4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Cosine warm-up to the peak rate, then cosine annealing.
    OneCycle,
}

fn cosine(from: f64, to: f64, t: f64) -> f64 {
    to + (from - to) * (1.0 + (PI * t).cos()) / 2.0
}

impl Schedule {
    /// Learning rate for optimizer step `step` of `total` with peak `lr`.
    pub fn lr_at(self, lr: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => lr,
            Schedule::OneCycle => {
                let total = total.max(1) as f64;
                let t = step as f64 / total;
                let warm = ONE_CYCLE_PCT_START;
                let start = lr / ONE_CYCLE_DIV;
                if t < warm {
                    cosine(start, lr, t / warm)
                } else {
                    cosine(
                        lr,
                        start / ONE_CYCLE_FINAL_DIV,
                        ((t - warm) / (1.0 - warm)).min(1.0),
                    )
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Constant => "constant",
            Schedule::OneCycle => "one_cycle",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "one_cycle" => Ok(Schedule::OneCycle),
            other => Err(Error::Contract(format!(
                "unknown schedule `{other}`; available: constant, one_cycle"
            ))),
        }
    }
}
