use super::{Architecture, Builder, Layer, Model, ModelConfig};
use crate::activation::ActivationSpec;
use crate::analysis::Slot;
use crate::error::Result;

/// conv(1→6, 5×5, pad 2) → act → pool → conv(6→16, 5×5) → act → pool →
/// 400 → 120 → act → 84 → act → 10. No batch norm.
pub fn build_lenet5(activation: ActivationSpec, seed: u64) -> Result<Model> {
    let mut b = Builder::new(ModelConfig::new(Architecture::Lenet5, activation), seed)?;
    let c1 = b.conv(1, 6, 5, 1, 2, true);
    let a1 = b.site(6, None, Slot::Layer);
    let c2 = b.conv(6, 16, 5, 1, 0, true);
    let a2 = b.site(16, None, Slot::Layer);
    let l1 = b.linear(400, 120);
    let a3 = b.site(120, None, Slot::Layer);
    let l2 = b.linear(120, 84);
    let a4 = b.site(84, None, Slot::Layer);
    let l3 = b.linear(84, 10);
    Ok(b.finish(vec![
        Layer::Conv(c1),
        Layer::Act(a1),
        Layer::MaxPool(2),
        Layer::Conv(c2),
        Layer::Act(a2),
        Layer::MaxPool(2),
        Layer::Flatten,
        Layer::Linear(l1),
        Layer::Act(a3),
        Layer::Linear(l2),
        Layer::Act(a4),
        Layer::Linear(l3),
    ]))
}

/// conv(1→4, 5×5, pad 2) → act → pool → conv(4→16, 5×5) → act → pool →
/// 400 → 120 → act → 10. No batch norm.
pub fn build_lenet4(activation: ActivationSpec, seed: u64) -> Result<Model> {
    let mut b = Builder::new(ModelConfig::new(Architecture::Lenet4, activation), seed)?;
    let c1 = b.conv(1, 4, 5, 1, 2, true);
    let a1 = b.site(4, None, Slot::Layer);
    let c2 = b.conv(4, 16, 5, 1, 0, true);
    let a2 = b.site(16, None, Slot::Layer);
    let l1 = b.linear(400, 120);
    let a3 = b.site(120, None, Slot::Layer);
    let l2 = b.linear(120, 10);
    Ok(b.finish(vec![
        Layer::Conv(c1),
        Layer::Act(a1),
        Layer::MaxPool(2),
        Layer::Conv(c2),
        Layer::Act(a2),
        Layer::MaxPool(2),
        Layer::Flatten,
        Layer::Linear(l1),
        Layer::Act(a3),
        Layer::Linear(l2),
    ]))
}
