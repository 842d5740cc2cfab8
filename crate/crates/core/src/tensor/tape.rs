use std::collections::{BTreeMap, BTreeSet};

use super::ops;
use super::{Result, Tensor, TensorError};

/// Index of a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Conv2d,
    Relu,
    MaxPool2,
    Gap,
    Reshape,
    Linear,
    MatMul,
    Sigmoid,
    Tanh,
    Softmax,
    Bce,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    },
    Relu(NodeId),
    MaxPool2 {
        input: NodeId,
        argmax: Vec<u32>,
    },
    Gap(NodeId),
    Reshape(NodeId),
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    MatMul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    Bce {
        probs: NodeId,
        targets: Tensor,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Relu(_) => OpKind::Relu,
            Op::MaxPool2 { .. } => OpKind::MaxPool2,
            Op::Gap(_) => OpKind::Gap,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Linear { .. } => OpKind::Linear,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Bce { .. } => OpKind::Bce,
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, kernel, bias, ..
            } => vec![*input, *kernel, *bias],
            Op::Linear { input, weight, bias } => vec![*input, *weight, *bias],
            Op::MatMul(a, b) => vec![*a, *b],
            Op::Relu(x) | Op::Gap(x) | Op::Reshape(x) | Op::Sigmoid(x) | Op::Tanh(x) | Op::Softmax(x) => {
                vec![*x]
            }
            Op::MaxPool2 { input, .. } => vec![*input],
            Op::Bce { probs, .. } => vec![*probs],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// How ReLU nodes route gradients during [`Tape::backward_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReluRule {
    /// `g_in = g_out · 1[x > 0]`
    #[default]
    Standard,
    /// `g_in = g_out · 1[x > 0] · 1[g_out > 0]`
    Guided,
}

/// Gradients keyed by node id, one per requested node.
#[derive(Debug, Clone, Default)]
pub struct GradientSet {
    grads: BTreeMap<NodeId, Tensor>,
}

impl GradientSet {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }
}

/// Append-only record of a forward computation. Node inputs always refer to
/// earlier nodes, so reverse index order is a valid backward schedule.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::DanglingNode(id.0))
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn try_value(&self, id: NodeId) -> Result<&Tensor> {
        self.check(id)?;
        Ok(self.value(id))
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    /// Input node ids of `id`, in operand order.
    pub fn inputs(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        for id in [input, kernel, bias] {
            self.check(id)?;
        }
        let v = ops::conv2d(self.value(input), self.value(kernel), self.value(bias), stride, pad)?;
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                pad,
            },
            v,
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = ops::relu(self.value(x));
        Ok(self.push(Op::Relu(x), v))
    }

    pub fn maxpool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let (v, argmax) = ops::maxpool2(self.value(x))?;
        Ok(self.push(Op::MaxPool2 { input: x, argmax }, v))
    }

    pub fn gap(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = ops::gap(self.value(x))?;
        Ok(self.push(Op::Gap(x), v))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(x), v))
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        for id in [input, weight, bias] {
            self.check(id)?;
        }
        let v = ops::linear(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(Op::Linear { input, weight, bias }, v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = ops::sigmoid(self.value(x));
        Ok(self.push(Op::Sigmoid(x), v))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = ops::tanh(self.value(x));
        Ok(self.push(Op::Tanh(x), v))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = ops::softmax(self.value(x))?;
        Ok(self.push(Op::Softmax(x), v))
    }

    pub fn bce_loss(&mut self, probs: NodeId, targets: Tensor) -> Result<NodeId> {
        self.check(probs)?;
        let v = ops::bce_loss(self.value(probs), &targets)?;
        Ok(self.push(Op::Bce { probs, targets }, v))
    }

    /// Recompute every node from the leaf values currently on the tape.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                    pad,
                } => ops::conv2d(&vals[input.0], &vals[kernel.0], &vals[bias.0], *stride, *pad)?,
                Op::Relu(x) => ops::relu(&vals[x.0]),
                Op::MaxPool2 { input, .. } => ops::maxpool2(&vals[input.0])?.0,
                Op::Gap(x) => ops::gap(&vals[x.0])?,
                Op::Reshape(x) => vals[x.0].clone().reshape(node.value.shape())?,
                Op::Linear { input, weight, bias } => ops::linear(&vals[input.0], &vals[weight.0], &vals[bias.0])?,
                Op::MatMul(a, b) => ops::matmul(&vals[a.0], &vals[b.0])?,
                Op::Sigmoid(x) => ops::sigmoid(&vals[x.0]),
                Op::Tanh(x) => ops::tanh(&vals[x.0]),
                Op::Softmax(x) => ops::softmax(&vals[x.0])?,
                Op::Bce { probs, targets } => ops::bce_loss(&vals[probs.0], targets)?,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Reverse-mode gradients of `⟨seed, value(seed_node)⟩` with respect to
    /// every node in `wanted`.
    pub fn backward(&self, seed_node: NodeId, seed: &Tensor, wanted: &[NodeId]) -> Result<GradientSet> {
        self.backward_with(seed_node, seed, wanted, ReluRule::Standard, None)
    }

    /// Like [`backward`](Self::backward) with a selectable ReLU rule. When an
    /// observer is given it sees `(relu node, incoming grad, outgoing grad)`
    /// for every ReLU the backward pass crosses.
    pub fn backward_with(
        &self,
        seed_node: NodeId,
        seed: &Tensor,
        wanted: &[NodeId],
        rule: ReluRule,
        mut observer: Option<&mut dyn FnMut(NodeId, &Tensor, &Tensor)>,
    ) -> Result<GradientSet> {
        self.check(seed_node)?;
        for &w in wanted {
            self.check(w)?;
        }
        seed.expect_same_shape("backward", self.value(seed_node))?;

        let wanted_set: BTreeSet<NodeId> = wanted.iter().copied().collect();
        // needs[n]: n is wanted or depends on a wanted node.
        let mut needs = vec![false; seed_node.0 + 1];
        for i in 0..=seed_node.0 {
            let node = &self.nodes[i];
            needs[i] = wanted_set.contains(&NodeId(i)) || node.op.inputs().iter().any(|x| needs[x.0]);
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; seed_node.0 + 1];
        if needs[seed_node.0] {
            grads[seed_node.0] = Some(seed.clone());
        }

        for i in (0..=seed_node.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let out = &node.value;
            if wanted_set.contains(&NodeId(i)) {
                grads[i] = Some(g.clone());
            }
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                    pad,
                } => {
                    if needs[input.0] {
                        let gi = ops::conv2d_grad_input(
                            self.value(*input).shape(),
                            self.value(*kernel),
                            &g,
                            *stride,
                            *pad,
                        )?;
                        accumulate(&mut grads, *input, gi)?;
                    }
                    if needs[kernel.0] || needs[bias.0] {
                        let (gk, gb) =
                            ops::conv2d_grad_params(self.value(*input), self.value(*kernel).shape(), &g, *stride, *pad)?;
                        if needs[kernel.0] {
                            accumulate(&mut grads, *kernel, gk)?;
                        }
                        if needs[bias.0] {
                            let gb = gb.reshape(self.value(*bias).shape())?;
                            accumulate(&mut grads, *bias, gb)?;
                        }
                    }
                }
                Op::Relu(x) => {
                    if needs[x.0] {
                        let xin = self.value(*x);
                        let data = xin
                            .data()
                            .iter()
                            .zip(g.data())
                            .map(|(&xv, &gv)| {
                                let open = xv > 0.0 && (rule == ReluRule::Standard || gv > 0.0);
                                if open {
                                    gv
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        let gi = Tensor::new(xin.shape().to_vec(), data)?;
                        if let Some(obs) = observer.as_mut() {
                            obs(NodeId(i), &g, &gi);
                        }
                        accumulate(&mut grads, *x, gi)?;
                    }
                }
                Op::MaxPool2 { input, argmax } => {
                    if needs[input.0] {
                        let mut gi = Tensor::zeros(self.value(*input).shape());
                        let d = gi.data_mut();
                        for (&src, &gv) in argmax.iter().zip(g.data()) {
                            d[src as usize] += gv;
                        }
                        accumulate(&mut grads, *input, gi)?;
                    }
                }
                Op::Gap(x) => {
                    if needs[x.0] {
                        let xin = self.value(*x);
                        let [_, _, h, w] = xin.dims::<4>("gap")?;
                        let z = (h * w) as f32;
                        let mut data = Vec::with_capacity(xin.len());
                        for &gv in g.data() {
                            data.extend(std::iter::repeat_n(gv / z, h * w));
                        }
                        accumulate(&mut grads, *x, Tensor::new(xin.shape().to_vec(), data)?)?;
                    }
                }
                Op::Reshape(x) => {
                    if needs[x.0] {
                        let gi = g.clone().reshape(self.value(*x).shape())?;
                        accumulate(&mut grads, *x, gi)?;
                    }
                }
                Op::Linear { input, weight, bias } => {
                    let xv = self.value(*input);
                    let wv = self.value(*weight);
                    if needs[input.0] {
                        accumulate(&mut grads, *input, ops::matmul(&g, wv)?)?;
                    }
                    if needs[weight.0] {
                        accumulate(&mut grads, *weight, ops::matmul(&ops::transpose(&g)?, xv)?)?;
                    }
                    if needs[bias.0] {
                        let [n, c] = g.dims::<2>("linear")?;
                        let mut gb = vec![0.0f32; c];
                        for r in 0..n {
                            for (acc, &v) in gb.iter_mut().zip(&g.data()[r * c..][..c]) {
                                *acc += v;
                            }
                        }
                        let gb = Tensor::new(self.value(*bias).shape().to_vec(), gb)?;
                        accumulate(&mut grads, *bias, gb)?;
                    }
                }
                Op::MatMul(a, b) => {
                    if needs[a.0] {
                        let ga = ops::matmul(&g, &ops::transpose(self.value(*b))?)?;
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if needs[b.0] {
                        let gb = ops::matmul(&ops::transpose(self.value(*a))?, &g)?;
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Sigmoid(x) => {
                    if needs[x.0] {
                        let data = out.data().iter().zip(g.data()).map(|(&s, &gv)| gv * s * (1.0 - s)).collect();
                        accumulate(&mut grads, *x, Tensor::new(out.shape().to_vec(), data)?)?;
                    }
                }
                Op::Tanh(x) => {
                    if needs[x.0] {
                        let data = out.data().iter().zip(g.data()).map(|(&t, &gv)| gv * (1.0 - t * t)).collect();
                        accumulate(&mut grads, *x, Tensor::new(out.shape().to_vec(), data)?)?;
                    }
                }
                Op::Softmax(x) => {
                    if needs[x.0] {
                        let [_, c] = out.dims::<2>("softmax")?;
                        let mut data = Vec::with_capacity(out.len());
                        for (srow, grow) in out.data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
                            let dot: f32 = srow.iter().zip(grow).map(|(s, g)| s * g).sum();
                            data.extend(srow.iter().zip(grow).map(|(s, g)| s * (g - dot)));
                        }
                        accumulate(&mut grads, *x, Tensor::new(out.shape().to_vec(), data)?)?;
                    }
                }
                Op::Bce { probs, targets } => {
                    if needs[probs.0] {
                        let gp = ops::bce_grad(self.value(*probs), targets, g.item())?;
                        accumulate(&mut grads, *probs, gp)?;
                    }
                }
            }
        }

        let mut out = GradientSet::default();
        for &w in &wanted_set {
            let g = match grads.get_mut(w.0).and_then(Option::take) {
                Some(g) => g,
                // Wanted but not upstream of the seed: gradient is zero.
                None => Tensor::zeros(self.value(w).shape()),
            };
            out.grads.insert(w, g);
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) -> Result<()> {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
