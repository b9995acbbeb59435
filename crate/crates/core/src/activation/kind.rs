//! Scalar forward and derivative rules for every supported activation.
//!
//! Each rule is a function of one input `x` and the activation's learnable
//! parameter slice `p`. [`ActivationKind::grad`] returns `∂f/∂x` and writes
//! `∂f/∂p[j]` into the caller's buffer, so the graph op can reduce parameter
//! gradients over every element that shares them.

use std::fmt;

use crate::error::{Error, Result};

const LEAK: f64 = 0.01;
const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const ARIA2_ALPHA: f64 = 1.5;
const ARIA2_BETA: f64 = 2.0;
const ISRLU_A: f64 = 1.0;
const GENERAL_RELU_SHIFT: f64 = -0.25;
const THRESHOLDED_RELU_THETA: f64 = 1.0;
const PELU_MIN: f64 = 0.1;

/// Activations with no slope on the positive axis of their own; these are
/// the functions that can be wrapped with a learnable `β`/`m` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseKind {
    Relu,
    LeakyRelu,
    Prelu,
    Gelu,
    Elu,
    Selu,
    Pelu,
    Silu,
    DSilu,
    Sigmoid,
    Tanh,
    Softplus,
    Tanhshrink,
    LogSigmoid,
    ThresholdedRelu,
    Frelu,
    Isrlu,
    Aria2,
    GeneralRelu,
    Trelu,
}

impl BaseKind {
    pub const ALL: [BaseKind; 20] = [
        BaseKind::Relu,
        BaseKind::LeakyRelu,
        BaseKind::Prelu,
        BaseKind::Gelu,
        BaseKind::Elu,
        BaseKind::Selu,
        BaseKind::Pelu,
        BaseKind::Silu,
        BaseKind::DSilu,
        BaseKind::Sigmoid,
        BaseKind::Tanh,
        BaseKind::Softplus,
        BaseKind::Tanhshrink,
        BaseKind::LogSigmoid,
        BaseKind::ThresholdedRelu,
        BaseKind::Frelu,
        BaseKind::Isrlu,
        BaseKind::Aria2,
        BaseKind::GeneralRelu,
        BaseKind::Trelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseKind::Relu => "relu",
            BaseKind::LeakyRelu => "leaky_relu",
            BaseKind::Prelu => "prelu",
            BaseKind::Gelu => "gelu",
            BaseKind::Elu => "elu",
            BaseKind::Selu => "selu",
            BaseKind::Pelu => "pelu",
            BaseKind::Silu => "silu",
            BaseKind::DSilu => "dsilu",
            BaseKind::Sigmoid => "sigmoid",
            BaseKind::Tanh => "tanh",
            BaseKind::Softplus => "softplus",
            BaseKind::Tanhshrink => "tanhshrink",
            BaseKind::LogSigmoid => "log_sigmoid",
            BaseKind::ThresholdedRelu => "thresholded_relu",
            BaseKind::Frelu => "frelu",
            BaseKind::Isrlu => "isrlu",
            BaseKind::Aria2 => "aria2",
            BaseKind::GeneralRelu => "general_relu",
            BaseKind::Trelu => "trelu",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            BaseKind::Prelu => &["alpha"],
            BaseKind::Pelu => &["pelu_a", "pelu_b"],
            BaseKind::Frelu => &["frelu_bias"],
            BaseKind::Trelu => &["threshold"],
            _ => &[],
        }
    }

    fn initial_params(self, init_alpha: f64) -> Vec<f64> {
        match self {
            BaseKind::Prelu => vec![init_alpha],
            BaseKind::Pelu => vec![1.0, 1.0],
            BaseKind::Frelu => vec![0.0],
            BaseKind::Trelu => vec![0.03],
            _ => Vec::new(),
        }
    }

    fn kinks(self, p: &[f64]) -> Vec<f64> {
        match self {
            BaseKind::ThresholdedRelu => vec![THRESHOLDED_RELU_THETA],
            BaseKind::Trelu => vec![p[0]],
            BaseKind::Relu
            | BaseKind::LeakyRelu
            | BaseKind::Prelu
            | BaseKind::Elu
            | BaseKind::Selu
            | BaseKind::Pelu
            | BaseKind::Frelu
            | BaseKind::Isrlu
            | BaseKind::GeneralRelu => vec![0.0],
            _ => Vec::new(),
        }
    }

    fn eval(self, x: f64, p: &[f64]) -> f64 {
        match self {
            BaseKind::Relu => x.max(0.0),
            BaseKind::LeakyRelu => leaky(x),
            BaseKind::Prelu => {
                if x >= 0.0 {
                    x
                } else {
                    p[0] * x
                }
            }
            BaseKind::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            BaseKind::Elu => elu(x),
            BaseKind::Selu => SELU_LAMBDA * if x >= 0.0 { x } else { SELU_ALPHA * x.exp_m1() },
            BaseKind::Pelu => {
                let (a, b) = (p[0], p[1]);
                if x >= 0.0 {
                    a / b * x
                } else {
                    a * (x / b).exp_m1()
                }
            }
            BaseKind::Silu => x * sigmoid(x),
            BaseKind::DSilu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            BaseKind::Sigmoid => sigmoid(x),
            BaseKind::Tanh => x.tanh(),
            BaseKind::Softplus => softplus(x),
            BaseKind::Tanhshrink => x - x.tanh(),
            BaseKind::LogSigmoid => -softplus(-x),
            BaseKind::ThresholdedRelu => {
                if x > THRESHOLDED_RELU_THETA {
                    x
                } else {
                    0.0
                }
            }
            BaseKind::Frelu => x.max(0.0) + p[0],
            BaseKind::Isrlu => {
                if x >= 0.0 {
                    x
                } else {
                    x / (1.0 + ISRLU_A * x * x).sqrt()
                }
            }
            BaseKind::Aria2 => (-ARIA2_ALPHA * softplus(-ARIA2_BETA * x)).exp(),
            BaseKind::GeneralRelu => leaky(x) + GENERAL_RELU_SHIFT,
            BaseKind::Trelu => {
                let t = p[0];
                if x > t {
                    x
                } else {
                    LEAK * (x - t)
                }
            }
        }
    }

    fn grad(self, x: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        match self {
            BaseKind::Relu => step(x),
            BaseKind::LeakyRelu | BaseKind::GeneralRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAK
                }
            }
            BaseKind::Prelu => {
                if x >= 0.0 {
                    dp[0] = 0.0;
                    1.0
                } else {
                    dp[0] = x;
                    p[0]
                }
            }
            BaseKind::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            BaseKind::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            BaseKind::Selu => SELU_LAMBDA * if x >= 0.0 { 1.0 } else { SELU_ALPHA * x.exp() },
            BaseKind::Pelu => {
                let (a, b) = (p[0], p[1]);
                if x >= 0.0 {
                    dp[0] = x / b;
                    dp[1] = -a * x / (b * b);
                    a / b
                } else {
                    let e = (x / b).exp();
                    dp[0] = e - 1.0;
                    dp[1] = -a * x * e / (b * b);
                    a / b * e
                }
            }
            BaseKind::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            BaseKind::DSilu => {
                let s = sigmoid(x);
                s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))
            }
            BaseKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            BaseKind::Tanh => 1.0 - x.tanh().powi(2),
            BaseKind::Softplus => sigmoid(x),
            BaseKind::Tanhshrink => x.tanh().powi(2),
            BaseKind::LogSigmoid => sigmoid(-x),
            BaseKind::ThresholdedRelu => {
                if x > THRESHOLDED_RELU_THETA {
                    1.0
                } else {
                    0.0
                }
            }
            BaseKind::Frelu => {
                dp[0] = 1.0;
                step(x)
            }
            BaseKind::Isrlu => {
                if x >= 0.0 {
                    1.0
                } else {
                    (1.0 + ISRLU_A * x * x).powf(-1.5)
                }
            }
            BaseKind::Aria2 => {
                let f = self.eval(x, p);
                ARIA2_ALPHA * ARIA2_BETA * f * sigmoid(-ARIA2_BETA * x)
            }
            BaseKind::Trelu => {
                if x > p[0] {
                    dp[0] = 0.0;
                    1.0
                } else {
                    dp[0] = -LEAK;
                    LEAK
                }
            }
        }
    }

    fn project(self, p: &mut [f64]) {
        if self == BaseKind::Pelu {
            for v in p.iter_mut() {
                *v = v.max(PELU_MIN);
            }
        }
    }
}

/// Every activation the engine can place at an activation site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    /// `α·x` for `x < 0`, `β·x` otherwise.
    DpRelu,
    /// `α·x + m` for `x < 0`, `β·x + m` otherwise.
    DualLine,
    /// `G(x) + m` for `x < 0`, `β·x + m` otherwise, for a base function `G`.
    Wrapped(BaseKind),
    Base(BaseKind),
}

impl ActivationKind {
    /// The default roster: DP ReLU, Dual Line, every base function and a
    /// handful of wrapped variants.
    pub fn registry() -> Vec<ActivationKind> {
        let mut kinds = vec![ActivationKind::DpRelu, ActivationKind::DualLine];
        kinds.extend(BaseKind::ALL.iter().map(|&b| ActivationKind::Base(b)));
        kinds.extend(
            [
                BaseKind::Relu,
                BaseKind::Elu,
                BaseKind::Gelu,
                BaseKind::Tanh,
                BaseKind::Silu,
            ]
            .map(ActivationKind::Wrapped),
        );
        kinds
    }

    /// Registry plus a wrapped variant of every base function.
    pub fn all_with_wrappers() -> Vec<ActivationKind> {
        let mut kinds = vec![ActivationKind::DpRelu, ActivationKind::DualLine];
        kinds.extend(BaseKind::ALL.iter().map(|&b| ActivationKind::Base(b)));
        kinds.extend(BaseKind::ALL.iter().map(|&b| ActivationKind::Wrapped(b)));
        kinds
    }

    pub fn registry_names() -> String {
        Self::registry()
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(", ")
            + ", wrapped_<base>"
    }

    pub fn parse(name: &str) -> Result<Self> {
        let unknown = || Error::UnknownActivation {
            name: name.to_string(),
            available: Self::registry_names(),
        };
        match name {
            "dp_relu" => return Ok(ActivationKind::DpRelu),
            "dual_line" => return Ok(ActivationKind::DualLine),
            _ => {}
        }
        if let Some(base) = name.strip_prefix("wrapped_") {
            let b = BaseKind::ALL
                .iter()
                .find(|b| b.name() == base)
                .ok_or_else(unknown)?;
            return Ok(ActivationKind::Wrapped(*b));
        }
        BaseKind::ALL
            .iter()
            .find(|b| b.name() == name)
            .map(|&b| ActivationKind::Base(b))
            .ok_or_else(unknown)
    }

    pub fn name(&self) -> String {
        match self {
            ActivationKind::DpRelu => "dp_relu".into(),
            ActivationKind::DualLine => "dual_line".into(),
            ActivationKind::Wrapped(b) => format!("wrapped_{}", b.name()),
            ActivationKind::Base(b) => b.name().into(),
        }
    }

    /// Names of the learnable parameters, in storage order.
    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            ActivationKind::DpRelu => vec!["alpha", "beta"],
            ActivationKind::DualLine => vec!["alpha", "beta", "mean_shift"],
            ActivationKind::Wrapped(b) => {
                let mut names = b.param_names().to_vec();
                names.extend(["beta", "mean_shift"]);
                names
            }
            ActivationKind::Base(b) => b.param_names().to_vec(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            ActivationKind::DpRelu => 2,
            ActivationKind::DualLine => 3,
            ActivationKind::Wrapped(b) => b.param_names().len() + 2,
            ActivationKind::Base(b) => b.param_names().len(),
        }
    }

    pub(crate) fn initial_params(&self, alpha: f64, beta: f64, mean_shift: f64) -> Vec<f64> {
        match self {
            ActivationKind::DpRelu => vec![alpha, beta],
            ActivationKind::DualLine => vec![alpha, beta, mean_shift],
            ActivationKind::Wrapped(b) => {
                let mut p = b.initial_params(alpha);
                p.extend([beta, mean_shift]);
                p
            }
            ActivationKind::Base(b) => b.initial_params(alpha),
        }
    }

    /// Points where the function is not differentiable for parameters `p`.
    pub fn kinks(&self, p: &[f64]) -> Vec<f64> {
        match self {
            ActivationKind::DpRelu | ActivationKind::DualLine => vec![0.0],
            ActivationKind::Wrapped(b) => {
                let nb = b.param_names().len();
                let mut k = b.kinks(&p[..nb]);
                k.retain(|&v| v < 0.0);
                k.push(0.0);
                k
            }
            ActivationKind::Base(b) => b.kinks(p),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, p: &[f64]) -> f64 {
        match self {
            ActivationKind::DpRelu => {
                if x < 0.0 {
                    p[0] * x
                } else {
                    p[1] * x
                }
            }
            ActivationKind::DualLine => {
                if x < 0.0 {
                    p[0] * x + p[2]
                } else {
                    p[1] * x + p[2]
                }
            }
            ActivationKind::Wrapped(b) => {
                let nb = b.param_names().len();
                let (beta, m) = (p[nb], p[nb + 1]);
                if x < 0.0 {
                    b.eval(x, &p[..nb]) + m
                } else {
                    beta * x + m
                }
            }
            ActivationKind::Base(b) => b.eval(x, p),
        }
    }

    /// Returns `∂f/∂x`; overwrites every entry of `dp` with `∂f/∂p[j]`.
    #[inline]
    pub fn grad(&self, x: f64, p: &[f64], dp: &mut [f64]) -> f64 {
        dp.iter_mut().for_each(|v| *v = 0.0);
        match self {
            ActivationKind::DpRelu => {
                if x < 0.0 {
                    dp[0] = x;
                    p[0]
                } else {
                    dp[1] = x;
                    p[1]
                }
            }
            ActivationKind::DualLine => {
                dp[2] = 1.0;
                if x < 0.0 {
                    dp[0] = x;
                    p[0]
                } else {
                    dp[1] = x;
                    p[1]
                }
            }
            ActivationKind::Wrapped(b) => {
                let nb = b.param_names().len();
                dp[nb + 1] = 1.0;
                if x < 0.0 {
                    b.grad(x, &p[..nb], &mut dp[..nb])
                } else {
                    dp[nb] = x;
                    p[nb]
                }
            }
            ActivationKind::Base(b) => b.grad(x, p, dp),
        }
    }

    /// Projects parameters back onto their feasible set after an optimizer step.
    pub fn project(&self, p: &mut [f64]) {
        match self {
            ActivationKind::Wrapped(b) => {
                let nb = b.param_names().len();
                b.project(&mut p[..nb]);
            }
            ActivationKind::Base(b) => b.project(p),
            _ => {}
        }
    }

    pub fn is_learnable(&self) -> bool {
        self.num_params() > 0
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[inline]
fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAK * x
    }
}

#[inline]
fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_parse() {
        for kind in ActivationKind::all_with_wrappers() {
            assert_eq!(ActivationKind::parse(&kind.name()).unwrap(), kind);
        }
    }

    #[test]
    fn unknown_name_lists_registry() {
        let err = ActivationKind::parse("bogus").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("dual_line") && msg.contains("gelu"));
        assert!(ActivationKind::parse("wrapped_bogus").is_err());
    }

    #[test]
    fn registry_has_at_least_sixteen_baselines() {
        let base = ActivationKind::registry()
            .into_iter()
            .filter(|k| matches!(k, ActivationKind::Base(_)))
            .count();
        assert!(base >= 16);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(ActivationKind::DpRelu.num_params(), 2);
        assert_eq!(ActivationKind::DualLine.num_params(), 3);
        assert_eq!(ActivationKind::Base(BaseKind::Relu).num_params(), 0);
        assert_eq!(ActivationKind::Wrapped(BaseKind::Elu).num_params(), 2);
        assert_eq!(ActivationKind::Wrapped(BaseKind::Pelu).num_params(), 4);
    }

    #[test]
    fn pelu_projection_clamps() {
        let mut p = [0.05, 2.0];
        ActivationKind::Base(BaseKind::Pelu).project(&mut p);
        assert_eq!(p, [0.1, 2.0]);
    }

    #[test]
    fn gelu_and_sigmoid_at_zero() {
        assert_eq!(ActivationKind::Base(BaseKind::Gelu).eval(0.0, &[]), 0.0);
        assert_eq!(ActivationKind::Base(BaseKind::Sigmoid).eval(0.0, &[]), 0.5);
    }

    #[test]
    fn stable_at_extremes() {
        for kind in ActivationKind::all_with_wrappers() {
            let p = kind.initial_params(0.01, 1.0, -0.22);
            for x in [-800.0, -50.0, 50.0, 800.0] {
                let y = kind.eval(x, &p);
                assert!(y.is_finite(), "{kind} at {x} gave {y}");
                let mut dp = vec![0.0; p.len()];
                assert!(kind.grad(x, &p, &mut dp).is_finite(), "{kind} grad at {x}");
            }
        }
    }
}
