use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Weight,
    Bias,
    BnScale,
    BnShift,
    /// Learnable scalar of the activation at site `site`.
    Activation {
        site: usize,
    },
}

impl ParamRole {
    pub fn is_activation(&self) -> bool {
        matches!(self, ParamRole::Activation { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Flat registry of every learnable tensor in a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, role: ParamRole, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Param {
            name: name.into(),
            role,
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn num_scalars_where(&self, pred: impl Fn(&ParamRole) -> bool) -> usize {
        self.params
            .iter()
            .filter(|p| pred(&p.role))
            .map(|p| p.value.len())
            .sum()
    }

    /// Adds every parameter to `graph`, as tracked leaves when `track` is set.
    pub fn bind(&self, graph: &mut Graph, track: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| {
                let t = p.value.clone();
                if track {
                    graph.param(t)
                } else {
                    graph.input(t)
                }
            })
            .collect()
    }

    /// Copies gradients out of `graph` into each parameter's grad buffer.
    pub fn collect_grads(&mut self, graph: &Graph, bound: &[NodeId]) {
        for (p, &id) in self.params.iter_mut().zip(bound) {
            match graph.grad(id) {
                Some(g) => p.grad.copy_from_slice(g),
                None => p.grad.iter_mut().for_each(|v| *v = 0.0),
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_scalars(), "flat value length");
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value
                .data_mut()
                .copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }

    /// FNV-1a over the bit patterns of every value; equal iff bit-identical
    /// (up to hash collisions).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.params.iter().flat_map(|p| p.value.data()) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}
