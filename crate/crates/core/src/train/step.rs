use crate::autograd::{Adam, Graph, StepOutcome};
use crate::data::Batch;
use crate::error::Result;
use crate::models::{Mode, Model};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// Loss before the update.
    pub loss: f64,
    /// `None` when the loss was non-finite and no update was attempted.
    pub outcome: Option<StepOutcome>,
}

/// Forward, backward and one Adam update on `batch`, followed by the
/// activations' parameter projection. Mixed batches use the mixup loss.
pub fn train_step(model: &mut Model, adam: &mut Adam, batch: &Batch) -> Result<StepResult> {
    let mut graph = Graph::new();
    let fwd = model.forward(&mut graph, batch.images.clone(), Mode::Train)?;
    let loss = match &batch.mix {
        Some(mix) => {
            graph.mixup_cross_entropy(fwd.logits, &batch.labels, &mix.labels_b, mix.lambda)?
        }
        None => graph.softmax_cross_entropy(fwd.logits, &batch.labels)?,
    };
    let value = graph.value(loss).item();
    if !value.is_finite() {
        return Ok(StepResult {
            loss: value,
            outcome: None,
        });
    }
    graph.backward(loss)?;
    model.params_mut().collect_grads(&graph, &fwd.bound);
    let outcome = adam.step(model.params_mut())?;
    model.project_activation_params();
    Ok(StepResult {
        loss: value,
        outcome: Some(outcome),
    })
}
