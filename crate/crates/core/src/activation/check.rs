//! Finite-difference verification of every activation's backward rule,
//! run through the graph op that training uses.

use rand::Rng;

use super::kind::{ActivationKind, BaseKind};
use crate::autograd::{gradcheck_report, Graph};
use crate::error::Result;
use crate::tensor::Tensor;

pub const GRADCHECK_EPSILON: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Minimum distance of a sampled point from any kink.
pub const KINK_MARGIN: f64 = 1e-3;
const POINTS_PER_DRAW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCheck {
    pub activation: String,
    pub points: usize,
    pub max_rel_error: f64,
    /// Human-readable description of the worst coordinate.
    pub worst: String,
}

impl ActivationCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn base_params<R: Rng>(b: BaseKind, rng: &mut R) -> Vec<f64> {
    match b {
        BaseKind::Prelu => vec![rng.random_range(-0.5..0.5)],
        BaseKind::Pelu => vec![rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)],
        BaseKind::Frelu => vec![rng.random_range(-1.0..1.0)],
        BaseKind::Trelu => vec![rng.random_range(-0.3..0.3)],
        _ => Vec::new(),
    }
}

/// Random learnable parameters in the range training typically visits.
pub fn random_params<R: Rng>(kind: ActivationKind, rng: &mut R) -> Vec<f64> {
    let alpha = rng.random_range(-0.5..0.5);
    let beta = rng.random_range(0.25..2.5);
    let m = rng.random_range(-1.0..1.0);
    match kind {
        ActivationKind::DpRelu => vec![alpha, beta],
        ActivationKind::DualLine => vec![alpha, beta, m],
        ActivationKind::Wrapped(b) => {
            let mut p = base_params(b, rng);
            p.extend([beta, m]);
            p
        }
        ActivationKind::Base(b) => base_params(b, rng),
    }
}

/// Uniform sample from `[-4, 4]` at least [`KINK_MARGIN`] from every kink.
pub fn kink_free_point<R: Rng>(kind: ActivationKind, params: &[f64], rng: &mut R) -> f64 {
    let kinks = kind.kinks(params);
    loop {
        let x: f64 = rng.random_range(-4.0..4.0);
        if kinks.iter().all(|k| (x - k).abs() > KINK_MARGIN) {
            return x;
        }
    }
}

/// `Σ wᵢ·f(xᵢ; p)` and its gradient with respect to `[x…, p…]`, computed
/// through [`Graph::activation`].
pub fn weighted_activation_loss(
    kind: ActivationKind,
    z: &Tensor,
    n_points: usize,
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(&[n_points], z.data()[..n_points].to_vec())?);
    let params: Vec<_> = z.data()[n_points..]
        .iter()
        .map(|&v| g.param(Tensor::scalar(v)))
        .collect();
    let y = g.activation(x, kind, &params, false)?;
    let w = g.input(Tensor::new(&[n_points], weights.to_vec())?);
    let yw = g.mul(y, w)?;
    let loss = g.sum(yw);
    g.backward(loss)?;
    let mut grad = g
        .grad(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; n_points]);
    for p in params {
        grad.push(g.grad(p).map_or(0.0, |d| d[0]));
    }
    Ok((g.value(loss).item(), grad))
}

/// Gradchecks `kind` at `points` random kink-free inputs, drawing fresh
/// parameters every ten points. `fault` scales the analytic gradient by
/// `1 + fault` to exercise the failure path.
pub fn check_activation<R: Rng>(
    kind: ActivationKind,
    points: usize,
    fault: f64,
    rng: &mut R,
) -> Result<ActivationCheck> {
    let mut result = ActivationCheck {
        activation: kind.name(),
        points: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    let names = kind.param_names();
    while result.points < points {
        let n = POINTS_PER_DRAW.min(points - result.points);
        let params = random_params(kind, rng);
        let xs: Vec<f64> = (0..n)
            .map(|_| kink_free_point(kind, &params, rng))
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut z = xs.clone();
        z.extend(&params);
        let z = Tensor::new(&[z.len()], z)?;
        let report = gradcheck_report(
            |t| {
                let (v, mut grad) = weighted_activation_loss(kind, t, n, &weights)?;
                grad.iter_mut().for_each(|g| *g *= 1.0 + fault);
                Ok((v, grad))
            },
            &z,
            GRADCHECK_EPSILON,
        )?;
        if report.max_rel_error >= result.max_rel_error {
            let i = report.worst_index;
            result.max_rel_error = report.max_rel_error;
            result.worst = if i < n {
                format!("d/dx at x={:.6}", xs[i])
            } else {
                format!("d/d{} at {:?}", names[i - n], params)
            };
        }
        result.points += n;
    }
    Ok(result)
}
