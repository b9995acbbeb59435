//! Learnable-slope activations (DP ReLU, Dual Line, wrapped base functions)
//! and the baseline registry they are benchmarked against.

mod check;
mod envelope;
mod kind;
mod spec;

pub use check::{
    check_activation, kink_free_point, random_params, weighted_activation_loss, ActivationCheck,
    GRADCHECK_EPSILON, GRADCHECK_TOLERANCE, KINK_MARGIN,
};
pub use envelope::{linspace, response_envelope, Envelope};
pub use kind::{ActivationKind, BaseKind};
pub use spec::{
    dp_relu_backward, dp_relu_forward, dual_line_backward, dual_line_forward,
    eval_registry_activation, registry_activation_backward, wrap_activation, ActivationGrads,
    ActivationSpec, ActivationSpecRecord, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_MEAN_SHIFT,
};
