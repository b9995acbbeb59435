use serde::{Deserialize, Serialize};

use super::kind::{ActivationKind, BaseKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_MEAN_SHIFT: f64 = -0.22;

/// An activation kind plus the initial values of its learnable parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub init_alpha: f64,
    pub init_beta: f64,
    pub init_mean_shift: f64,
    /// One parameter set per channel instead of one per site.
    pub per_channel: bool,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            kind,
            init_alpha: DEFAULT_ALPHA,
            init_beta: DEFAULT_BETA,
            init_mean_shift: DEFAULT_MEAN_SHIFT,
            per_channel: false,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ActivationKind::parse(name).map(Self::new)
    }

    pub fn dp_relu() -> Self {
        Self::new(ActivationKind::DpRelu)
    }

    pub fn dual_line() -> Self {
        Self::new(ActivationKind::DualLine)
    }

    pub fn base(kind: BaseKind) -> Self {
        Self::new(ActivationKind::Base(kind))
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.kind
            .initial_params(self.init_alpha, self.init_beta, self.init_mean_shift)
    }
}

impl Default for ActivationSpec {
    fn default() -> Self {
        Self::dual_line()
    }
}

/// Serialized form used in report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpecRecord {
    pub name: String,
    pub init_alpha: f64,
    pub init_beta: f64,
    pub init_mean_shift: f64,
    pub per_channel: bool,
}

impl From<&ActivationSpec> for ActivationSpecRecord {
    fn from(s: &ActivationSpec) -> Self {
        Self {
            name: s.name(),
            init_alpha: s.init_alpha,
            init_beta: s.init_beta,
            init_mean_shift: s.init_mean_shift,
            per_channel: s.per_channel,
        }
    }
}

impl TryFrom<&ActivationSpecRecord> for ActivationSpec {
    type Error = Error;

    fn try_from(r: &ActivationSpecRecord) -> Result<Self> {
        Ok(Self {
            kind: ActivationKind::parse(&r.name)?,
            init_alpha: r.init_alpha,
            init_beta: r.init_beta,
            init_mean_shift: r.init_mean_shift,
            per_channel: r.per_channel,
        })
    }
}

/// Replaces the positive half of a fixed activation `G` with a learnable
/// slope and adds a learnable shift to both halves.
pub fn wrap_activation(
    base: &ActivationSpec,
    beta: f64,
    mean_shift: f64,
) -> Result<ActivationSpec> {
    match base.kind {
        ActivationKind::Base(b) => Ok(ActivationSpec {
            kind: ActivationKind::Wrapped(b),
            init_beta: beta,
            init_mean_shift: mean_shift,
            ..*base
        }),
        other => Err(Error::Composition(format!(
            "cannot wrap `{other}`: only fixed base activations can be wrapped"
        ))),
    }
}

fn map(x: &Tensor, kind: ActivationKind, p: &[f64]) -> Tensor {
    let data = x.data().iter().map(|&v| kind.eval(v, p)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Gradients of one parameter-sharing activation application.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGrads {
    pub dx: Tensor,
    /// One entry per learnable parameter, reduced over all elements.
    pub dparams: Vec<f64>,
}

fn backward(
    x: &Tensor,
    kind: ActivationKind,
    p: &[f64],
    upstream: &Tensor,
) -> Result<ActivationGrads> {
    if x.shape() != upstream.shape() {
        return Err(Error::dim(format!(
            "upstream shape {:?} does not match input {:?}",
            upstream.shape(),
            x.shape()
        )));
    }
    let mut dparams = vec![0.0; p.len()];
    let mut local = vec![0.0; p.len()];
    let dx = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xi, &gi)| {
            let d = kind.grad(xi, p, &mut local);
            for (acc, l) in dparams.iter_mut().zip(&local) {
                *acc += gi * l;
            }
            gi * d
        })
        .collect();
    Ok(ActivationGrads {
        dx: Tensor::new(x.shape(), dx)?,
        dparams,
    })
}

pub fn dp_relu_forward(x: &Tensor, alpha: f64, beta: f64) -> Tensor {
    map(x, ActivationKind::DpRelu, &[alpha, beta])
}

/// Returns `(dx, dα, dβ)`.
pub fn dp_relu_backward(
    x: &Tensor,
    alpha: f64,
    beta: f64,
    upstream: &Tensor,
) -> Result<(Tensor, f64, f64)> {
    let g = backward(x, ActivationKind::DpRelu, &[alpha, beta], upstream)?;
    Ok((g.dx, g.dparams[0], g.dparams[1]))
}

pub fn dual_line_forward(x: &Tensor, alpha: f64, beta: f64, mean_shift: f64) -> Tensor {
    map(x, ActivationKind::DualLine, &[alpha, beta, mean_shift])
}

/// Returns `(dx, dα, dβ, dm)`.
pub fn dual_line_backward(
    x: &Tensor,
    alpha: f64,
    beta: f64,
    mean_shift: f64,
    upstream: &Tensor,
) -> Result<(Tensor, f64, f64, f64)> {
    let g = backward(
        x,
        ActivationKind::DualLine,
        &[alpha, beta, mean_shift],
        upstream,
    )?;
    Ok((g.dx, g.dparams[0], g.dparams[1], g.dparams[2]))
}

fn check_params(kind: ActivationKind, params: &[f64]) -> Result<()> {
    if params.len() != kind.num_params() {
        return Err(Error::Contract(format!(
            "`{kind}` takes {} parameters ({:?}), got {}",
            kind.num_params(),
            kind.param_names(),
            params.len()
        )));
    }
    Ok(())
}

/// Evaluates any registered activation by name-resolved kind.
pub fn eval_registry_activation(
    kind: ActivationKind,
    x: &Tensor,
    params: &[f64],
) -> Result<Tensor> {
    check_params(kind, params)?;
    Ok(map(x, kind, params))
}

pub fn registry_activation_backward(
    kind: ActivationKind,
    x: &Tensor,
    params: &[f64],
    upstream: &Tensor,
) -> Result<ActivationGrads> {
    check_params(kind, params)?;
    backward(x, kind, params, upstream)
}
