use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ActivationSite;

/// Where an activation site sits relative to the residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    /// First activation inside a block.
    #[serde(rename = "A-1")]
    A1,
    /// Second activation inside a block.
    #[serde(rename = "A-2")]
    A2,
    #[serde(rename = "stem")]
    Stem,
    #[serde(rename = "head")]
    Head,
    /// Site of a network without repeating blocks.
    #[serde(rename = "layer")]
    Layer,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::A1 => "A-1",
            Slot::A2 => "A-2",
            Slot::Stem => "stem",
            Slot::Head => "head",
            Slot::Layer => "layer",
        }
    }

    pub fn in_block(self) -> bool {
        matches!(self, Slot::A1 | Slot::A2)
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Slot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A-1" => Ok(Slot::A1),
            "A-2" => Ok(Slot::A2),
            "stem" => Ok(Slot::Stem),
            "head" => Ok(Slot::Head),
            "layer" => Ok(Slot::Layer),
            other => Err(Error::Contract(format!("unknown slot `{other}`"))),
        }
    }
}

/// Learned parameter values of one activation site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub activation: String,
    pub position_index: usize,
    pub block_index: Option<usize>,
    pub slot: Slot,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mean_shift: Option<f64>,
    /// Parameters other than α, β and m (PELU's a/b, FReLU's bias, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl ParamSnapshot {
    pub(crate) fn from_values(site: &ActivationSite, values: &[f64]) -> Self {
        let mut snap = ParamSnapshot {
            activation: site.spec.name(),
            position_index: site.position_index,
            block_index: site.block_index,
            slot: site.slot,
            alpha: None,
            beta: None,
            mean_shift: None,
            extra: BTreeMap::new(),
        };
        for (name, &v) in site.spec.kind.param_names().iter().zip(values) {
            match *name {
                "alpha" => snap.alpha = Some(v),
                "beta" => snap.beta = Some(v),
                "mean_shift" => snap.mean_shift = Some(v),
                other => {
                    snap.extra.insert(other.to_string(), v);
                }
            }
        }
        snap
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "alpha" => self.alpha,
            "beta" => self.beta,
            "mean_shift" => self.mean_shift,
            other => self.extra.get(other).copied(),
        }
    }

    /// Parameter values in the storage order of `names`.
    pub fn values_for(&self, names: &[&str]) -> Option<Vec<f64>> {
        names.iter().map(|n| self.get(n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot.in_block() && self.block_index.is_none() {
            return Err(Error::Contract(format!(
                "site {} has slot {} but no block index",
                self.position_index, self.slot
            )));
        }
        let all = [self.alpha, self.beta, self.mean_shift]
            .into_iter()
            .flatten()
            .chain(self.extra.values().copied());
        for v in all {
            if !v.is_finite() {
                return Err(Error::Contract(format!(
                    "site {} has a non-finite parameter",
                    self.position_index
                )));
            }
        }
        Ok(())
    }
}
