use super::{Architecture, Builder, Layer, Model, ModelConfig, ResBlock};
use crate::activation::ActivationSpec;
use crate::analysis::Slot;
use crate::error::Result;

pub const GROUPS: usize = 3;
pub const BLOCKS_PER_GROUP: usize = 3;
const BASE_WIDTHS: [usize; GROUPS] = [16, 32, 64];

/// Stem conv(3→16), three groups of three pre-activation blocks
/// (bn → act → conv → bn → act → conv, plus shortcut), then
/// bn → act → global average pool → linear.
///
/// In-block sites take positions 0..18 as (block, A-1/A-2) pairs; the head
/// activation comes last.
pub fn build_mini_resnet(
    activation: ActivationSpec,
    widen_factor: usize,
    seed: u64,
) -> Result<Model> {
    let config =
        ModelConfig::new(Architecture::MiniResnet, activation).with_widen_factor(widen_factor);
    let mut b = Builder::new(config, seed)?;
    let mut layers = vec![Layer::Conv(b.conv(3, 16, 3, 1, 1, false))];
    let mut channels = 16;
    for (g, base) in BASE_WIDTHS.iter().enumerate() {
        let out = base * widen_factor;
        for i in 0..BLOCKS_PER_GROUP {
            let block_index = g * BLOCKS_PER_GROUP + i;
            let stride = if g > 0 && i == 0 { 2 } else { 1 };
            let bn1 = b.batch_norm(channels);
            let act1 = b.site(channels, Some(block_index), Slot::A1);
            let conv1 = b.conv(channels, out, 3, stride, 1, false);
            let bn2 = b.batch_norm(out);
            let act2 = b.site(out, Some(block_index), Slot::A2);
            let conv2 = b.conv(out, out, 3, 1, 1, false);
            let shortcut = (channels != out || stride != 1)
                .then(|| b.conv(channels, out, 1, stride, 0, false));
            layers.push(Layer::Block(ResBlock {
                bn1,
                act1,
                conv1,
                bn2,
                act2,
                conv2,
                shortcut,
            }));
            channels = out;
        }
    }
    let bn = b.batch_norm(channels);
    let head = b.site(channels, None, Slot::Head);
    let fc = b.linear(channels, 10);
    layers.extend([
        Layer::BatchNorm(bn),
        Layer::Act(head),
        Layer::GlobalAvgPool,
        Layer::Linear(fc),
    ]);
    Ok(b.finish(layers))
}
