//! Networks assembled from the `ops` kernels.
//!
//! A [`Network`] is an [`Architecture`] plus parameter storage. Training goes
//! through [`Network::forward_train`] / [`Network::backward`], which keep
//! per-layer caches; [`Network::predict`] is a read-only inference path.

mod build;
pub mod checkpoint;
mod spec;

pub use build::{
    build_baseline, build_multi_channel_dnn, build_presnet, build_single_channel_dnn, BaselineKind, FSL_BLOCKS,
    HIDDEN_LAYERS, MULTI_HEAD_UNITS,
};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use spec::{ArchKind, Architecture, LayerSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::{self, BatchNormCache, BatchNormParams, BnMode, Conv1dCache};
use crate::tensor::Tensor;

/// A trainable tensor and its gradient buffer (always the same shape).
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    fn zeros(shape: &[usize]) -> Self {
        Param { value: Tensor::zeros(shape), grad: Tensor::zeros(shape) }
    }

    fn set_grad(&mut self, grad: Tensor) {
        debug_assert!(grad.same_shape(&self.value));
        self.grad = grad;
    }
}

/// One stored tensor seen through [`Network::visit_params_mut`].
pub struct ParamSlot<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
    /// `None` for running statistics, which are state rather than parameters.
    pub grad: Option<&'a Tensor>,
    pub frozen: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub(crate) weight: Param,
    pub(crate) bias: Param,
    frozen: bool,
    cache: Option<Conv1dCache>,
}

#[derive(Clone, Debug)]
pub(crate) struct BnLayer {
    pub(crate) params: BatchNormParams,
    grad_gamma: Tensor,
    grad_beta: Tensor,
    frozen: bool,
    cache: Option<BatchNormCache>,
}

#[derive(Clone, Debug)]
pub(crate) struct DenseLayer {
    pub(crate) weight: Param,
    pub(crate) bias: Param,
    frozen: bool,
    cache: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub(crate) enum Node {
    Conv(ConvLayer),
    Bn(BnLayer),
    Relu(Option<Tensor>),
    Gap(Option<Vec<usize>>),
    Flatten(Option<Vec<usize>>),
    Dense(DenseLayer),
    Softmax,
    Residual(ResidualNode),
    Branches { branches: Vec<Vec<Node>>, cache: Option<(usize, usize)> },
}

/// A residual block: `body(x) + shortcut(x)`.
#[derive(Clone, Debug)]
pub(crate) struct ResidualNode {
    pub(crate) body: Vec<Node>,
    pub(crate) projection: Option<ConvLayer>,
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer} backward called without a forward cache"))
}

impl ConvLayer {
    fn new(in_channels: usize, filters: usize, kernel: usize) -> Self {
        ConvLayer {
            weight: Param::zeros(&[filters, in_channels, kernel]),
            bias: Param::zeros(&[filters]),
            frozen: false,
            cache: None,
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (out, cache) = ops::conv1d_forward_cached(x, &self.weight.value, &self.bias.value)?;
        self.cache = Some(cache);
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("conv1d"))?;
        let g = ops::conv1d_backward_cached(grad, &cache, &self.weight.value)?;
        self.weight.set_grad(g.weight);
        self.bias.set_grad(g.bias);
        Ok(g.input)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv1d(x, &self.weight.value, &self.bias.value)
    }

    fn visit(&mut self, path: &str, f: &mut dyn FnMut(ParamSlot<'_>)) {
        for (leaf, p) in [("weight", &mut self.weight), ("bias", &mut self.bias)] {
            f(ParamSlot {
                name: format!("{path}.{leaf}"),
                value: &mut p.value,
                grad: Some(&p.grad),
                frozen: self.frozen,
            });
        }
    }
}

impl BnLayer {
    fn new(channels: usize, epsilon: f64, momentum: f64) -> Self {
        let mut params = BatchNormParams::new(channels);
        params.epsilon = epsilon;
        params.momentum = momentum;
        BnLayer {
            params,
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            frozen: false,
            cache: None,
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        // A frozen batch-norm keeps its running statistics untouched.
        let mode = if self.frozen { BnMode::Infer } else { BnMode::Train };
        let (out, cache) = ops::batchnorm(x, &mut self.params, mode)?;
        self.cache = Some(cache);
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("batchnorm"))?;
        let g = ops::batchnorm_backward(grad, &cache, &self.params)?;
        self.grad_gamma = g.gamma;
        self.grad_beta = g.beta;
        Ok(g.input)
    }

    fn visit(&mut self, path: &str, f: &mut dyn FnMut(ParamSlot<'_>)) {
        let frozen = self.frozen;
        let p = &mut self.params;
        f(ParamSlot { name: format!("{path}.gamma"), value: &mut p.gamma, grad: Some(&self.grad_gamma), frozen });
        f(ParamSlot { name: format!("{path}.beta"), value: &mut p.beta, grad: Some(&self.grad_beta), frozen });
        f(ParamSlot { name: format!("{path}.running_mean"), value: &mut p.running_mean, grad: None, frozen });
        f(ParamSlot { name: format!("{path}.running_var"), value: &mut p.running_var, grad: None, frozen });
    }
}

impl DenseLayer {
    fn new(inputs: usize, units: usize) -> Self {
        DenseLayer { weight: Param::zeros(&[units, inputs]), bias: Param::zeros(&[units]), frozen: false, cache: None }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = ops::dense(x, &self.weight.value, &self.bias.value)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or_else(|| missing_cache("dense"))?;
        let g = ops::dense_backward(grad, &input, &self.weight.value)?;
        self.weight.set_grad(g.weight);
        self.bias.set_grad(g.bias);
        Ok(g.input)
    }

    fn visit(&mut self, path: &str, f: &mut dyn FnMut(ParamSlot<'_>)) {
        for (leaf, p) in [("weight", &mut self.weight), ("bias", &mut self.bias)] {
            f(ParamSlot {
                name: format!("{path}.{leaf}"),
                value: &mut p.value,
                grad: Some(&p.grad),
                frozen: self.frozen,
            });
        }
    }
}

impl ResidualNode {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let body = forward_all(&mut self.body, x)?;
        let shortcut = match &mut self.projection {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        ops::residual_add(&body, &shortcut)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (to_body, to_shortcut) = ops::residual_backward(grad);
        let mut gx = backward_all(&mut self.body, &to_body)?;
        let gs = match &mut self.projection {
            Some(p) => p.backward(&to_shortcut)?,
            None => to_shortcut,
        };
        gx.add_assign(&gs)?;
        Ok(gx)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let body = infer_all(&self.body, x)?;
        let shortcut = match &self.projection {
            Some(p) => p.infer(x)?,
            None => x.clone(),
        };
        ops::residual_add(&body, &shortcut)
    }

    /// Copies every stored tensor from `other`, which must be shape-identical.
    pub(crate) fn copy_from(&mut self, other: &ResidualNode) -> Result<()> {
        let mut src = Vec::new();
        let mut other = other.clone();
        other.visit("", &mut |slot| src.push((slot.name, slot.value.clone())));
        let mut dst = Vec::new();
        self.visit("", &mut |slot| dst.push((slot.name, slot.value.shape().to_vec())));
        if src.len() != dst.len()
            || src.iter().zip(&dst).any(|((sn, st), (dn, ds))| sn != dn || st.shape() != ds.as_slice())
        {
            return Err(Error::Transfer("residual blocks differ in structure or shape".into()));
        }
        let mut values = src.into_iter();
        self.visit("", &mut |slot| {
            if let Some((_, v)) = values.next() {
                *slot.value = v;
            }
        });
        Ok(())
    }

    fn visit(&mut self, path: &str, f: &mut dyn FnMut(ParamSlot<'_>)) {
        visit_all(&mut self.body, &format!("{path}.body"), f);
        if let Some(p) = &mut self.projection {
            p.visit(&format!("{path}.projection"), f);
        }
    }
}

impl Node {
    fn from_spec(spec: &LayerSpec) -> Node {
        match spec {
            LayerSpec::Conv1d { in_channels, filters, kernel } => {
                Node::Conv(ConvLayer::new(*in_channels, *filters, *kernel))
            }
            LayerSpec::BatchNorm { channels, epsilon, momentum } => {
                Node::Bn(BnLayer::new(*channels, *epsilon, *momentum))
            }
            LayerSpec::Relu => Node::Relu(None),
            LayerSpec::Gap => Node::Gap(None),
            LayerSpec::Flatten => Node::Flatten(None),
            LayerSpec::Dense { inputs, units } => Node::Dense(DenseLayer::new(*inputs, *units)),
            LayerSpec::Softmax => Node::Softmax,
            LayerSpec::Residual { body, projection } => Node::Residual(ResidualNode {
                body: body.iter().map(Node::from_spec).collect(),
                projection: projection.map(|(i, o)| ConvLayer::new(i, o, 1)),
            }),
            LayerSpec::Branches { count, body } => Node::Branches {
                branches: (0..*count).map(|_| body.iter().map(Node::from_spec).collect()).collect(),
                cache: None,
            },
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Node::Conv(c) => c.forward(x),
            Node::Bn(b) => b.forward(x),
            Node::Relu(cache) => {
                let y = ops::relu(x);
                *cache = Some(x.clone());
                Ok(y)
            }
            Node::Gap(cache) => {
                let y = ops::global_average_pool(x)?;
                *cache = Some(x.shape().to_vec());
                Ok(y)
            }
            Node::Flatten(cache) => {
                *cache = Some(x.shape().to_vec());
                flatten(x)
            }
            Node::Dense(d) => d.forward(x),
            Node::Softmax => ops::softmax(x),
            Node::Residual(r) => r.forward(x),
            Node::Branches { branches, cache } => {
                let (n, _, l) = ops::ncl(x)?;
                *cache = Some((n, l));
                let mut outs = Vec::with_capacity(branches.len());
                for (b, body) in branches.iter_mut().enumerate() {
                    outs.push(forward_all(body, &channel_slice(x, b)?)?);
                }
                concat_features(&outs)
            }
        }
    }

    /// `grad` for a trailing softmax is the fused cross-entropy gradient with
    /// respect to the logits, so it passes through unchanged.
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Node::Conv(c) => c.backward(grad),
            Node::Bn(b) => b.backward(grad),
            Node::Relu(cache) => {
                let x = cache.take().ok_or_else(|| missing_cache("relu"))?;
                ops::relu_backward(grad, &x)
            }
            Node::Gap(cache) => {
                let shape = cache.take().ok_or_else(|| missing_cache("gap"))?;
                ops::global_average_pool_backward(grad, &shape)
            }
            Node::Flatten(cache) => {
                let shape = cache.take().ok_or_else(|| missing_cache("flatten"))?;
                grad.clone().reshape(&shape)
            }
            Node::Dense(d) => d.backward(grad),
            Node::Softmax => Ok(grad.clone()),
            Node::Residual(r) => r.backward(grad),
            Node::Branches { branches, cache } => {
                let (n, l) = cache.take().ok_or_else(|| missing_cache("branches"))?;
                let count = branches.len();
                let (gn, width) = ops::nf(grad)?;
                if gn != n || width % count != 0 {
                    return Err(Error::shape("branch gradient does not match the forward output"));
                }
                let per = width / count;
                let mut gx = vec![0.0; n * count * l];
                for (b, body) in branches.iter_mut().enumerate() {
                    let mut part = Vec::with_capacity(n * per);
                    for row in grad.data().chunks(width) {
                        part.extend_from_slice(&row[b * per..(b + 1) * per]);
                    }
                    let g = backward_all(body, &Tensor::new(vec![n, per], part)?)?;
                    for s in 0..n {
                        gx[(s * count + b) * l..(s * count + b + 1) * l].copy_from_slice(&g.data()[s * l..(s + 1) * l]);
                    }
                }
                Tensor::new(vec![n, count, l], gx)
            }
        }
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Node::Conv(c) => c.infer(x),
            Node::Bn(b) => ops::batchnorm_infer(x, &b.params),
            Node::Relu(_) => Ok(ops::relu(x)),
            Node::Gap(_) => ops::global_average_pool(x),
            Node::Flatten(_) => flatten(x),
            Node::Dense(d) => ops::dense(x, &d.weight.value, &d.bias.value),
            Node::Softmax => ops::softmax(x),
            Node::Residual(r) => r.infer(x),
            Node::Branches { branches, .. } => {
                let outs = branches
                    .iter()
                    .enumerate()
                    .map(|(b, body)| infer_all(body, &channel_slice(x, b)?))
                    .collect::<Result<Vec<_>>>()?;
                concat_features(&outs)
            }
        }
    }

    fn visit(&mut self, path: &str, f: &mut dyn FnMut(ParamSlot<'_>)) {
        match self {
            Node::Conv(c) => c.visit(&format!("{path}.conv"), f),
            Node::Bn(b) => b.visit(&format!("{path}.bn"), f),
            Node::Dense(d) => d.visit(&format!("{path}.dense"), f),
            Node::Residual(r) => r.visit(&format!("{path}.residual"), f),
            Node::Branches { branches, .. } => {
                for (b, body) in branches.iter_mut().enumerate() {
                    visit_all(body, &format!("{path}.branch{b}"), f);
                }
            }
            Node::Relu(_) | Node::Gap(_) | Node::Flatten(_) | Node::Softmax => {}
        }
    }

    fn set_frozen(&mut self, frozen: bool) {
        match self {
            Node::Conv(c) => c.frozen = frozen,
            Node::Bn(b) => b.frozen = frozen,
            Node::Dense(d) => d.frozen = frozen,
            Node::Residual(r) => {
                r.body.iter_mut().for_each(|n| n.set_frozen(frozen));
                if let Some(p) = &mut r.projection {
                    p.frozen = frozen;
                }
            }
            Node::Branches { branches, .. } => {
                branches.iter_mut().flatten().for_each(|n| n.set_frozen(frozen));
            }
            Node::Relu(_) | Node::Gap(_) | Node::Flatten(_) | Node::Softmax => {}
        }
    }
}

fn forward_all(nodes: &mut [Node], x: &Tensor) -> Result<Tensor> {
    let mut h = x.clone();
    for node in nodes {
        h = node.forward(&h)?;
    }
    Ok(h)
}

fn backward_all(nodes: &mut [Node], grad: &Tensor) -> Result<Tensor> {
    let mut g = grad.clone();
    for node in nodes.iter_mut().rev() {
        g = node.backward(&g)?;
    }
    Ok(g)
}

fn infer_all(nodes: &[Node], x: &Tensor) -> Result<Tensor> {
    let mut h = x.clone();
    for node in nodes {
        h = node.infer(&h)?;
    }
    Ok(h)
}

fn visit_all(nodes: &mut [Node], prefix: &str, f: &mut dyn FnMut(ParamSlot<'_>)) {
    for (i, node) in nodes.iter_mut().enumerate() {
        let path = if prefix.is_empty() { i.to_string() } else { format!("{prefix}.{i}") };
        node.visit(&path, f);
    }
}

fn flatten(x: &Tensor) -> Result<Tensor> {
    let (n, c, l) = ops::ncl(x)?;
    x.clone().reshape(&[n, c * l])
}

/// `[N, C, L]` -> `[N, 1, L]` holding channel `c`.
fn channel_slice(x: &Tensor, c: usize) -> Result<Tensor> {
    let (n, channels, l) = ops::ncl(x)?;
    let mut data = Vec::with_capacity(n * l);
    for s in 0..n {
        data.extend_from_slice(&x.data()[(s * channels + c) * l..(s * channels + c + 1) * l]);
    }
    Tensor::new(vec![n, 1, l], data)
}

fn concat_features(parts: &[Tensor]) -> Result<Tensor> {
    let (n, f) = ops::nf(&parts[0])?;
    let mut data = Vec::with_capacity(n * f * parts.len());
    for s in 0..n {
        for p in parts {
            data.extend_from_slice(&p.data()[s * f..(s + 1) * f]);
        }
    }
    Tensor::new(vec![n, f * parts.len()], data)
}

/// Mean loss and correct-prediction count of one mini-batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchOutcome {
    pub loss: f64,
    pub correct: usize,
}

#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    seed: u64,
    pub(crate) nodes: Vec<Node>,
}

impl Network {
    /// Builds the network and draws its initial parameters from `seed`:
    /// He-uniform fan-in scaling for conv and dense weights, zero biases,
    /// unit gamma and zero beta for batch-norm.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let nodes = arch.layers.iter().map(Node::from_spec).collect();
        let mut net = Network { arch, seed, nodes };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        net.visit_params_mut(&mut |slot| {
            let shape = slot.value.shape().to_vec();
            if slot.name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt();
                for v in slot.value.data_mut() {
                    *v = rng.random_range(-limit..limit);
                }
            }
        });
        Ok(net)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    /// Input geometry `(channels, window)`.
    pub fn input_geometry(&self) -> (usize, usize) {
        (self.arch.channels, self.arch.window)
    }

    /// Number of stored values, batch-norm running statistics included.
    pub fn param_count(&self) -> usize {
        let mut net = self.clone();
        let mut total = 0;
        net.visit_params_mut(&mut |slot| total += slot.value.len());
        total
    }

    pub fn trainable_param_count(&self) -> usize {
        let mut net = self.clone();
        let mut total = 0;
        net.visit_params_mut(&mut |slot| {
            if slot.grad.is_some() && !slot.frozen {
                total += slot.value.len();
            }
        });
        total
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match *x.shape() {
            [n, c, l] if n >= 1 && c == self.arch.channels && l == self.arch.window => Ok(()),
            _ => Err(Error::shape(format!(
                "network expects [N, {}, {}], got {:?}",
                self.arch.channels,
                self.arch.window,
                x.shape()
            ))),
        }
    }

    /// Class probabilities `[N, classes]` in inference mode.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        infer_all(&self.nodes, x)
    }

    /// Output of the feature extractor (`[N, F]`) in inference mode: the
    /// pooled features for single-stack networks, the concatenated branch
    /// features for the multi-channel network.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        infer_all(&self.nodes[..self.head_start()], x)
    }

    /// Index of the first top-level layer after feature extraction.
    pub fn head_start(&self) -> usize {
        self.arch
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Gap | LayerSpec::Branches { .. } | LayerSpec::Flatten))
            .map_or(0, |i| i + 1)
    }

    /// Training-mode forward pass; keeps the caches `backward` needs.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        forward_all(&mut self.nodes, x)
    }

    /// Backpropagates the gradient with respect to the logits, storing
    /// parameter gradients. Returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        backward_all(&mut self.nodes, grad_logits)
    }

    /// Forward and backward for a labelled batch under mean (optionally
    /// class-weighted) categorical cross-entropy.
    pub fn loss_and_backward(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        class_weights: Option<&[f64]>,
    ) -> Result<BatchOutcome> {
        let probs = self.forward_train(x)?;
        let (grad, outcome) = cross_entropy_grad(&probs, labels, class_weights)?;
        self.backward(&grad)?;
        Ok(outcome)
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamSlot<'_>)) {
        visit_all(&mut self.nodes, "", f);
    }

    /// Every stored tensor by name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut net = self.clone();
        let mut out = Vec::new();
        net.visit_params_mut(&mut |slot| out.push((slot.name, slot.value.clone())));
        out
    }

    /// Freezes (or unfreezes) every layer before the head. Frozen layers get
    /// no optimizer updates and their batch-norms run on running statistics.
    pub fn freeze_feature_extractor(&mut self, frozen: bool) {
        let head = self.head_start();
        for node in &mut self.nodes[..head] {
            node.set_frozen(frozen);
        }
    }

    /// Freezes (or unfreezes) only the parallel branches of a multi-channel
    /// network.
    pub fn freeze_branches(&mut self, frozen: bool) {
        for node in &mut self.nodes {
            if matches!(node, Node::Branches { .. }) {
                node.set_frozen(frozen);
            }
        }
    }

    /// Residual blocks of the hidden stack, in order (single-stack networks).
    pub(crate) fn hidden_blocks(&self) -> Vec<&ResidualNode> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Residual(r) => Some(r),
                _ => None,
            })
            .collect()
    }

    /// Per-branch residual blocks of a multi-channel network.
    pub(crate) fn branch_blocks_mut(&mut self) -> Vec<Vec<&mut ResidualNode>> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            if let Node::Branches { branches, .. } = node {
                for body in branches {
                    out.push(
                        body.iter_mut()
                            .filter_map(|n| match n {
                                Node::Residual(r) => Some(r),
                                _ => None,
                            })
                            .collect(),
                    );
                }
            }
        }
        out
    }
}

/// Gradient of mean cross-entropy with respect to the logits, given softmax
/// outputs: `w_i (p_i - onehot_i) / N`.
pub fn cross_entropy_grad(
    probs: &Tensor,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(Tensor, BatchOutcome)> {
    let (n, c) = ops::nf(probs)?;
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for a batch of {n}", labels.len())));
    }
    let mut grad = probs.data().to_vec();
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::shape(format!("label {y} out of range for {c} classes")));
        }
        let w = class_weights.map_or(1.0, |cw| cw[y]);
        let row = &mut grad[i * c..(i + 1) * c];
        if crate::tensor::argmax(row) == y {
            correct += 1;
        }
        // Clamp keeps the loss finite for saturated probabilities.
        let p = row[y];
        loss -= w * if p.is_nan() { p } else { p.max(f64::MIN_POSITIVE) }.ln();
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= w / n as f64);
    }
    Ok((Tensor::new(vec![n, c], grad)?, BatchOutcome { loss: loss / n as f64, correct }))
}
