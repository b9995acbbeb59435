//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod optim;
mod params;

pub use gradcheck::{gradcheck, gradcheck_report, relative_error, GradcheckReport};
pub use graph::{BatchNormMode, BatchStats, Graph, NodeId, BN_EPS};
pub use optim::{adam_step, Adam, AdamState, StepOutcome};
pub use params::{Param, ParamId, ParamRole, ParamStore};
