//! LENET4, LENET5 and a nine-block pre-activation residual network, each
//! with one activation spec injected at every activation site.

mod lenet;
mod resnet;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use lenet::{build_lenet4, build_lenet5};
pub use resnet::build_mini_resnet;

use crate::activation::{ActivationKind, ActivationSpec};
use crate::analysis::{ParamSnapshot, Slot};
use crate::autograd::{BatchNormMode, Graph, NodeId, ParamId, ParamRole, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Lenet4,
    Lenet5,
    MiniResnet,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Lenet4 => "lenet4",
            Architecture::Lenet5 => "lenet5",
            Architecture::MiniResnet => "mini_resnet",
        }
    }

    pub fn input_shape(self) -> (usize, usize, usize) {
        match self {
            Architecture::Lenet4 | Architecture::Lenet5 => (1, 28, 28),
            Architecture::MiniResnet => (3, 32, 32),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lenet4" => Ok(Architecture::Lenet4),
            "lenet5" => Ok(Architecture::Lenet5),
            "mini_resnet" => Ok(Architecture::MiniResnet),
            other => Err(Error::Contract(format!(
                "unknown architecture `{other}`; available: lenet4, lenet5, mini_resnet"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub activation: ActivationSpec,
    pub num_classes: usize,
    /// Channel multiplier; only the residual network uses it.
    pub widen_factor: usize,
    pub input_shape: (usize, usize, usize),
}

impl ModelConfig {
    pub fn new(arch: Architecture, activation: ActivationSpec) -> Self {
        Self {
            arch,
            activation,
            num_classes: 10,
            widen_factor: 1,
            input_shape: arch.input_shape(),
        }
    }

    pub fn with_widen_factor(mut self, w: usize) -> Self {
        self.widen_factor = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape != self.arch.input_shape() {
            return Err(Error::Contract(format!(
                "{} requires input {:?}, config has {:?}",
                self.arch,
                self.arch.input_shape(),
                self.input_shape
            )));
        }
        if self.widen_factor == 0 {
            return Err(Error::Contract("widen_factor must be at least 1".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Contract("num_classes must be positive".into()));
        }
        Ok(())
    }
}

/// One insertion point of the activation function.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSite {
    pub spec: ActivationSpec,
    /// 0-based, counted from the input side of the network.
    pub position_index: usize,
    pub block_index: Option<usize>,
    pub slot: Slot,
    pub params: Vec<ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, gradients tracked.
    Train,
    /// Running statistics in batch norm, no gradients.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResBlock {
    pub bn1: usize,
    pub act1: usize,
    pub conv1: Conv,
    pub bn2: usize,
    pub act2: usize,
    pub conv2: Conv,
    pub shortcut: Option<Conv>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Conv(Conv),
    Linear(Linear),
    Act(usize),
    MaxPool(usize),
    Flatten,
    BatchNorm(usize),
    Block(ResBlock),
    GlobalAvgPool,
}

/// Output of [`Model::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: NodeId,
    /// Graph node bound to each parameter, in store order.
    pub bound: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    layers: Vec<Layer>,
    sites: Vec<ActivationSite>,
    norms: Vec<BatchNorm>,
}

/// Incremental model construction with a seeded initializer.
pub(crate) struct Builder {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub sites: Vec<ActivationSite>,
    pub norms: Vec<BatchNorm>,
    rng: ChaCha8Rng,
    n_conv: usize,
    n_linear: usize,
}

impl Builder {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        Ok(Self {
            config,
            store: ParamStore::new(),
            sites: Vec::new(),
            norms: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            n_conv: 0,
            n_linear: 0,
        })
    }

    /// Kaiming-uniform for fan-in `fan_in`: `U(−√(6/fan_in), √(6/fan_in))`.
    fn kaiming(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        Tensor::new(shape, data).expect("shape matches")
    }

    pub fn conv(
        &mut self,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Conv {
        let i = self.n_conv;
        self.n_conv += 1;
        let w = self.kaiming(&[cout, cin, k, k], cin * k * k);
        let weight = self
            .store
            .add(format!("conv{i}.weight"), ParamRole::Weight, w);
        let bias = bias.then(|| {
            self.store.add(
                format!("conv{i}.bias"),
                ParamRole::Bias,
                Tensor::zeros(&[cout]),
            )
        });
        Conv {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn linear(&mut self, fan_in: usize, fan_out: usize) -> Linear {
        let i = self.n_linear;
        self.n_linear += 1;
        let w = self.kaiming(&[fan_in, fan_out], fan_in);
        Linear {
            weight: self
                .store
                .add(format!("linear{i}.weight"), ParamRole::Weight, w),
            bias: self.store.add(
                format!("linear{i}.bias"),
                ParamRole::Bias,
                Tensor::zeros(&[fan_out]),
            ),
        }
    }

    pub fn batch_norm(&mut self, channels: usize) -> usize {
        let i = self.norms.len();
        let gamma = self.store.add(
            format!("bn{i}.weight"),
            ParamRole::BnScale,
            Tensor::full(&[channels], 1.0),
        );
        let beta = self.store.add(
            format!("bn{i}.bias"),
            ParamRole::BnShift,
            Tensor::zeros(&[channels]),
        );
        self.norms.push(BatchNorm {
            gamma,
            beta,
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        });
        i
    }

    /// Appends an activation site acting on `channels` channels.
    pub fn site(&mut self, channels: usize, block_index: Option<usize>, slot: Slot) -> usize {
        let spec = self.config.activation;
        let position_index = self.sites.len();
        let width = if spec.per_channel { channels } else { 1 };
        let params = spec
            .kind
            .param_names()
            .iter()
            .zip(spec.initial_params())
            .map(|(name, v)| {
                self.store.add(
                    format!("act{position_index}.{name}"),
                    ParamRole::Activation {
                        site: position_index,
                    },
                    Tensor::full(&[width], v),
                )
            })
            .collect();
        self.sites.push(ActivationSite {
            spec,
            position_index,
            block_index,
            slot,
            params,
        });
        position_index
    }

    pub fn finish(self, layers: Vec<Layer>) -> Model {
        Model {
            config: self.config,
            store: self.store,
            layers,
            sites: self.sites,
            norms: self.norms,
        }
    }
}

/// Builds the architecture named in `config` with initial weights drawn
/// from a generator seeded with `seed`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    match config.arch {
        Architecture::Lenet4 => build_lenet4(config.activation, seed),
        Architecture::Lenet5 => build_lenet5(config.activation, seed),
        Architecture::MiniResnet => build_mini_resnet(config.activation, config.widen_factor, seed),
    }
}

struct Ctx<'a> {
    graph: &'a mut Graph,
    bound: &'a [NodeId],
    mode: Mode,
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn activation_sites(&self) -> &[ActivationSite] {
        &self.sites
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn num_activation_params(&self) -> usize {
        self.store.num_scalars_where(ParamRole::is_activation)
    }

    pub fn num_weight_params(&self) -> usize {
        self.num_params() - self.num_activation_params()
    }

    /// Shapes of every non-activation parameter, in store order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.store
            .iter()
            .filter(|p| !p.role.is_activation())
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Block(_)))
            .count()
    }

    /// Current values of a site's learnable parameters, averaged over channels.
    pub fn site_params(&self, site: &ActivationSite) -> Vec<f64> {
        site.params
            .iter()
            .map(|&id| {
                let d = self.store.get(id).value.data();
                d.iter().sum::<f64>() / d.len() as f64
            })
            .collect()
    }

    /// Re-applies each activation's parameter constraints.
    pub fn project_activation_params(&mut self) {
        for site in &self.sites {
            let kind = site.spec.kind;
            let Some(&first) = site.params.first() else {
                continue;
            };
            let len = self.store.get(first).value.len();
            for c in 0..len {
                let mut p: Vec<f64> = site
                    .params
                    .iter()
                    .map(|&id| self.store.get(id).value.data()[c])
                    .collect();
                kind.project(&mut p);
                for (&id, v) in site.params.iter().zip(p) {
                    self.store.get_mut(id).value.data_mut()[c] = v;
                }
            }
        }
    }

    pub fn snapshot(&self) -> Vec<ParamSnapshot> {
        self.sites
            .iter()
            .map(|site| ParamSnapshot::from_values(site, &self.site_params(site)))
            .collect()
    }

    /// Records the forward pass of `input` (`[B, C, H, W]`) on `graph`.
    /// In [`Mode::Train`] batch-norm running statistics are updated.
    pub fn forward(&mut self, graph: &mut Graph, input: Tensor, mode: Mode) -> Result<Forward> {
        let (c, h, w) = self.config.input_shape;
        let s = input.shape();
        if s.len() != 4 || s[1..] != [c, h, w] {
            return Err(Error::dim(format!(
                "{} expects input [B, {c}, {h}, {w}], got {s:?}",
                self.config.arch
            )));
        }
        let bound = self.store.bind(graph, mode == Mode::Train);
        let x = graph.input(input);
        let layers = std::mem::take(&mut self.layers);
        let mut ctx = Ctx {
            graph,
            bound: &bound,
            mode,
        };
        let result = layers
            .iter()
            .try_fold(x, |x, layer| self.apply(&mut ctx, layer, x));
        self.layers = layers;
        Ok(Forward {
            logits: result?,
            bound,
        })
    }

    fn apply(&mut self, ctx: &mut Ctx<'_>, layer: &Layer, x: NodeId) -> Result<NodeId> {
        match layer {
            Layer::Conv(conv) => self.conv(ctx, conv, x),
            Layer::Linear(l) => {
                let y = ctx.graph.matmul(x, ctx.bound[l.weight.0])?;
                ctx.graph.add_bias(y, ctx.bound[l.bias.0])
            }
            Layer::Act(site) => self.act(ctx, *site, x),
            Layer::MaxPool(w) => ctx.graph.maxpool2d(x, *w),
            Layer::Flatten => ctx.graph.flatten(x),
            Layer::BatchNorm(i) => self.batch_norm(ctx, *i, x),
            Layer::GlobalAvgPool => ctx.graph.global_avg_pool(x),
            Layer::Block(b) => {
                let h = self.batch_norm(ctx, b.bn1, x)?;
                let h = self.act(ctx, b.act1, h)?;
                let y = self.conv(ctx, &b.conv1, h)?;
                let y = self.batch_norm(ctx, b.bn2, y)?;
                let y = self.act(ctx, b.act2, y)?;
                let y = self.conv(ctx, &b.conv2, y)?;
                let skip = match &b.shortcut {
                    Some(proj) => self.conv(ctx, proj, h)?,
                    None => x,
                };
                ctx.graph.add(y, skip)
            }
        }
    }

    fn conv(&self, ctx: &mut Ctx<'_>, conv: &Conv, x: NodeId) -> Result<NodeId> {
        ctx.graph.conv2d(
            x,
            ctx.bound[conv.weight.0],
            conv.bias.map(|b| ctx.bound[b.0]),
            conv.stride,
            conv.padding,
        )
    }

    fn act(&self, ctx: &mut Ctx<'_>, site: usize, x: NodeId) -> Result<NodeId> {
        let site = &self.sites[site];
        let params: Vec<NodeId> = site.params.iter().map(|p| ctx.bound[p.0]).collect();
        ctx.graph
            .activation(x, site.spec.kind, &params, site.spec.per_channel)
    }

    fn batch_norm(&mut self, ctx: &mut Ctx<'_>, i: usize, x: NodeId) -> Result<NodeId> {
        let bn = &self.norms[i];
        let (gamma, beta) = (ctx.bound[bn.gamma.0], ctx.bound[bn.beta.0]);
        let mode = match ctx.mode {
            Mode::Train => BatchNormMode::Train,
            Mode::Eval => BatchNormMode::Eval {
                running_mean: &bn.running_mean,
                running_var: &bn.running_var,
            },
        };
        let (y, stats) = ctx.graph.batch_norm(x, gamma, beta, mode)?;
        if let Some(stats) = stats {
            let bn = &mut self.norms[i];
            let n = stats.count as f64;
            let unbias = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
            for c in 0..bn.running_mean.len() {
                bn.running_mean[c] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[c] + BN_MOMENTUM * stats.mean[c];
                bn.running_var[c] =
                    (1.0 - BN_MOMENTUM) * bn.running_var[c] + BN_MOMENTUM * stats.var[c] * unbias;
            }
        }
        Ok(y)
    }

    /// Convenience: logits for `input` in eval mode.
    pub fn predict(&mut self, input: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, input, Mode::Eval)?;
        Ok(g.value(f.logits).clone())
    }

    pub fn activation_kind(&self) -> ActivationKind {
        self.config.activation.kind
    }
}
