//! Wengert-list tape for reverse-mode differentiation.
//!
//! Each operation validates its operands, computes its value eagerly, and
//! appends one node. [`Tape::backward_to_input`] walks the list in reverse
//! from a scalar node and accumulates gradients into every contributing node,
//! returning the gradient at a chosen input.
//!
//! Activation values can be released with [`Tape::forget_value`] once no
//! later forward step needs them. The backward pass only ever reads batch
//! norm outputs (to recover normalized values) and ReLU sign masks, so a
//! network can drop everything else and still differentiate; this is what
//! keeps a deep forward pass over a large batch inside a few hundred
//! megabytes instead of several gigabytes.

use std::sync::atomic::{AtomicU64, Ordering};

use super::init::{ConvParams, LinearParams, NormParams};
use super::kernels::{self, ConvShape};
use super::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE_TAG: AtomicU64 = AtomicU64::new(1);

/// Handle to one tape node. Ids are only meaningful on the tape that issued
/// them; using one on another tape is reported, not silently accepted.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

enum Op {
    Input,
    Conv2d { src: usize, shape: ConvShape, weight: Tensor },
    Relu { src: usize, mask: Vec<u64> },
    AvgPool { src: usize, kernel: usize, stride: usize, padding: usize },
    BatchNorm { src: usize, gamma: Vec<f64>, beta: Vec<f64>, inv_std: Vec<f64> },
    Linear { src: usize, weight: Tensor },
    GlobalAvgPool { src: usize },
    Add { srcs: Vec<usize> },
    ZeroLike,
    SumAll { src: usize },
}

struct Node {
    shape: Vec<usize>,
    value: Option<Tensor>,
    op: Op,
}

/// Append-only record of a forward computation.
pub struct Tape {
    tag: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { tag: NEXT_TAPE_TAG.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Tensor, op: Op) -> NodeId {
        let index = self.nodes.len();
        self.nodes.push(Node { shape, value: Some(value), op });
        NodeId { tape: self.tag, index }
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        if id.tape != self.tag {
            return Err(Error::Contract(format!(
                "node from tape {} used on tape {}",
                id.tape, self.tag
            )));
        }
        Ok(&self.nodes[id.index])
    }

    pub fn shape_of(&self, id: NodeId) -> Result<&[usize]> {
        Ok(&self.node(id)?.shape)
    }

    /// The value computed at `id`; an error if it was forgotten.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.node(id)?
            .value
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("value of node {} was forgotten", id.index)))
    }

    /// Releases the stored value at `id` if backward can do without it.
    /// Batch norm outputs are retained (backward reads them); for every
    /// other op this frees the activation buffer.
    pub fn forget_value(&mut self, id: NodeId) {
        if id.tape != self.tag {
            return;
        }
        let node = &mut self.nodes[id.index];
        if !matches!(node.op, Op::BatchNorm { .. }) {
            node.value = None;
        }
    }

    fn value_of(&self, index: usize, op: &'static str) -> Result<&Tensor> {
        self.nodes[index].value.as_ref().ok_or_else(|| {
            Error::Contract(format!("{op} reads node {index} whose value was forgotten"))
        })
    }

    fn dims4_of(&self, id: NodeId, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.node(id)?.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            ref s => Err(Error::ShapeMismatch {
                op,
                detail: format!("expected a rank-4 operand, got {s:?}"),
            }),
        }
    }

    /// Registers `value` as a differentiable input.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(shape, value, Op::Input)
    }

    /// 2-d convolution with square kernel of extent 1 or 3.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        params: &ConvParams,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (batch, in_ch, h, w) = self.dims4_of(x, "conv2d")?;
        let kernel = params.kernel();
        if kernel != 1 && kernel != 3 {
            return Err(Error::Contract(format!("conv2d supports kernels 1 and 3, got {kernel}")));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d stride must be positive".into()));
        }
        if params.in_ch() != in_ch {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!(
                    "weight expects {} input channels, operand has {in_ch}",
                    params.in_ch()
                ),
            });
        }
        if h + 2 * padding < kernel || w + 2 * padding < kernel {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("kernel {kernel} exceeds padded input {h}x{w} (padding {padding})"),
            });
        }
        let shape = ConvShape { batch, in_ch, h, w, out_ch: params.out_ch(), kernel, stride, padding };
        let y = kernels::conv2d_forward(
            self.value_of(x.index, "conv2d")?.data(),
            &shape,
            params.weight().data(),
            params.bias(),
        );
        let out_shape = vec![batch, shape.out_ch, shape.out_h(), shape.out_w()];
        let value = Tensor::new(out_shape.clone(), y)?;
        Ok(self.push(out_shape, value, Op::Conv2d { src: x.index, shape, weight: params.weight().clone() }))
    }

    /// Elementwise `max(x, 0)`. Only a sign bitmask is kept for backward.
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.node(x)?.shape.clone();
        let xv = self.value_of(x.index, "relu")?;
        let mut mask = vec![0u64; xv.numel().div_ceil(64)];
        let mut y = vec![0.0; xv.numel()];
        for (i, (&v, yo)) in xv.data().iter().zip(&mut y).enumerate() {
            if v > 0.0 {
                mask[i / 64] |= 1 << (i % 64);
                *yo = v;
            }
        }
        let value = Tensor::new(shape.clone(), y)?;
        Ok(self.push(shape, value, Op::Relu { src: x.index, mask }))
    }

    /// Average pooling with the fixed divisor `kernel * kernel`.
    pub fn avg_pool(
        &mut self,
        x: NodeId,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (batch, ch, h, w) = self.dims4_of(x, "avg_pool")?;
        if kernel == 0 || stride == 0 {
            return Err(Error::Contract("avg_pool kernel and stride must be positive".into()));
        }
        if padding >= kernel {
            return Err(Error::Contract(format!(
                "avg_pool padding {padding} must be smaller than kernel {kernel}"
            )));
        }
        if h + 2 * padding < kernel || w + 2 * padding < kernel {
            return Err(Error::ShapeMismatch {
                op: "avg_pool",
                detail: format!("kernel {kernel} exceeds padded input {h}x{w} (padding {padding})"),
            });
        }
        let xv = self.value_of(x.index, "avg_pool")?;
        let (y, oh, ow) = kernels::avg_pool_forward(xv.data(), batch, ch, h, w, kernel, stride, padding);
        let out_shape = vec![batch, ch, oh, ow];
        let value = Tensor::new(out_shape.clone(), y)?;
        Ok(self.push(out_shape, value, Op::AvgPool { src: x.index, kernel, stride, padding }))
    }

    /// The 3x3, stride-1, padding-1 pooling used on cell edges.
    pub fn avg_pool3x3(&mut self, x: NodeId) -> Result<NodeId> {
        self.avg_pool(x, 3, 1, 1)
    }

    /// Training-mode batch norm with batch statistics; see
    /// [`kernels::batchnorm_forward`] for the exact definition.
    pub fn batchnorm_train(&mut self, x: NodeId, params: &NormParams, eps: f64) -> Result<NodeId> {
        let (batch, ch, h, w) = self.dims4_of(x, "batchnorm")?;
        if !(eps > 0.0) {
            return Err(Error::Contract(format!("batchnorm eps must be positive, got {eps}")));
        }
        if params.channels() != ch {
            return Err(Error::ShapeMismatch {
                op: "batchnorm",
                detail: format!("params cover {} channels, operand has {ch}", params.channels()),
            });
        }
        let xv = self.value_of(x.index, "batchnorm")?;
        let (y, inv_std) =
            kernels::batchnorm_forward(xv.data(), batch, ch, h, w, params.gamma(), params.beta(), eps);
        let shape = vec![batch, ch, h, w];
        let value = Tensor::new(shape.clone(), y)?;
        Ok(self.push(
            shape,
            value,
            Op::BatchNorm {
                src: x.index,
                gamma: params.gamma().to_vec(),
                beta: params.beta().to_vec(),
                inv_std,
            },
        ))
    }

    /// Fully connected layer over `[batch, features]`.
    pub fn linear(&mut self, x: NodeId, params: &LinearParams) -> Result<NodeId> {
        let shape = self.node(x)?.shape.clone();
        let [batch, features] = shape[..] else {
            return Err(Error::ShapeMismatch {
                op: "linear",
                detail: format!("expected a rank-2 operand, got {shape:?}"),
            });
        };
        if params.features() != features {
            return Err(Error::ShapeMismatch {
                op: "linear",
                detail: format!("weight expects {} features, operand has {features}", params.features()),
            });
        }
        let xv = self.value_of(x.index, "linear")?;
        let y = kernels::linear_forward(xv.data(), batch, features, params.weight().data(), params.out(), params.bias());
        let out_shape = vec![batch, params.out()];
        let value = Tensor::new(out_shape.clone(), y)?;
        Ok(self.push(out_shape, value, Op::Linear { src: x.index, weight: params.weight().clone() }))
    }

    /// Collapses `[batch, ch, h, w]` to `[batch, ch]` spatial means.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (batch, ch, h, w) = self.dims4_of(x, "global_avg_pool")?;
        let xv = self.value_of(x.index, "global_avg_pool")?;
        let y = kernels::global_avg_pool_forward(xv.data(), batch, ch, h, w);
        let out_shape = vec![batch, ch];
        let value = Tensor::new(out_shape.clone(), y)?;
        Ok(self.push(out_shape, value, Op::GlobalAvgPool { src: x.index }))
    }

    /// Elementwise sum of identically shaped operands, added left to right
    /// in the order given.
    pub fn add(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let Some((&first, rest)) = xs.split_first() else {
            return Err(Error::Contract("add needs at least one operand".into()));
        };
        let shape = self.node(first)?.shape.clone();
        for &x in rest {
            let other = &self.node(x)?.shape;
            if **other != shape[..] {
                return Err(Error::ShapeMismatch {
                    op: "add",
                    detail: format!("operands {:?} and {shape:?} differ", other),
                });
            }
        }
        let mut acc = self.value_of(first.index, "add")?.data().to_vec();
        for &x in rest {
            for (a, v) in acc.iter_mut().zip(self.value_of(x.index, "add")?.data()) {
                *a += v;
            }
        }
        let value = Tensor::new(shape.clone(), acc)?;
        let srcs = xs.iter().map(|id| id.index).collect();
        Ok(self.push(shape, value, Op::Add { srcs }))
    }

    /// A zero tensor shaped like `x`; gradients do not flow through it.
    pub fn zero_like(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.node(x)?.shape.clone();
        let value = Tensor::zeros(shape.clone());
        Ok(self.push(shape, value, Op::ZeroLike))
    }

    /// Sums every element of `x` into a single scalar node.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value_of(x.index, "sum_all")?;
        let total: f64 = xv.data().iter().sum();
        Ok(self.push(vec![1], Tensor::scalar(total), Op::SumAll { src: x.index }))
    }

    /// Gradient of the scalar at `scalar` with respect to the tensor at
    /// `input`. Intermediate gradient buffers are freed as soon as their
    /// node has been processed.
    ///
    /// If no path connects `input` to `scalar` the gradient is genuinely
    /// zero, and a zero tensor is returned.
    pub fn backward_to_input(&self, scalar: NodeId, input: NodeId) -> Result<Tensor> {
        let scalar_node = self.node(scalar)?;
        if scalar_node.shape != [1] {
            return Err(Error::Contract(format!(
                "backward starts from a scalar node, got shape {:?}",
                scalar_node.shape
            )));
        }
        let input_node = self.node(input)?;
        if !matches!(input_node.op, Op::Input) {
            return Err(Error::Contract("gradient target must be an input node".into()));
        }
        let input_shape = input_node.shape.clone();

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; scalar.index + 1];
        grads[scalar.index] = Some(vec![1.0]);

        for i in (0..=scalar.index).rev() {
            if matches!(self.nodes[i].op, Op::Input) {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Input => unreachable!("inputs are skipped above"),
                Op::Conv2d { src, shape, weight } => {
                    let dx = kernels::conv2d_backward_input(&dy, shape, weight.data());
                    accumulate(&mut grads[*src], dx);
                }
                Op::Relu { src, mask } => {
                    let mut dx = dy;
                    for (j, v) in dx.iter_mut().enumerate() {
                        if mask[j / 64] & (1 << (j % 64)) == 0 {
                            *v = 0.0;
                        }
                    }
                    accumulate(&mut grads[*src], dx);
                }
                Op::AvgPool { src, kernel, stride, padding } => {
                    let [batch, ch, h, w] = self.nodes[*src].shape[..] else {
                        unreachable!("avg_pool source is rank 4 by construction");
                    };
                    let dx = kernels::avg_pool_backward(&dy, batch, ch, h, w, *kernel, *stride, *padding);
                    accumulate(&mut grads[*src], dx);
                }
                Op::BatchNorm { src, gamma, beta, inv_std } => {
                    let [batch, ch, h, w] = self.nodes[i].shape[..] else {
                        unreachable!("batchnorm output is rank 4 by construction");
                    };
                    let y = self.nodes[i]
                        .value
                        .as_ref()
                        .expect("batchnorm outputs are never forgotten");
                    let dx = kernels::batchnorm_backward(&dy, y.data(), batch, ch, h, w, gamma, beta, inv_std);
                    accumulate(&mut grads[*src], dx);
                }
                Op::Linear { src, weight } => {
                    let [batch, features] = self.nodes[*src].shape[..] else {
                        unreachable!("linear source is rank 2 by construction");
                    };
                    let out = self.nodes[i].shape[1];
                    let dx = kernels::linear_backward_input(&dy, batch, out, weight.data(), features);
                    accumulate(&mut grads[*src], dx);
                }
                Op::GlobalAvgPool { src } => {
                    let [_, _, h, w] = self.nodes[*src].shape[..] else {
                        unreachable!("global_avg_pool source is rank 4 by construction");
                    };
                    let dx = kernels::global_avg_pool_backward(&dy, h, w);
                    accumulate(&mut grads[*src], dx);
                }
                Op::Add { srcs } => {
                    // The last operand can take the buffer; earlier ones copy.
                    for (k, src) in srcs.iter().enumerate() {
                        if k + 1 == srcs.len() {
                            accumulate(&mut grads[*src], dy);
                            break;
                        }
                        accumulate(&mut grads[*src], dy.clone());
                    }
                }
                Op::ZeroLike => {}
                Op::SumAll { src } => {
                    let n: usize = self.nodes[*src].shape.iter().product();
                    accumulate(&mut grads[*src], vec![dy[0]; n]);
                }
            }
        }

        match grads[input.index].take() {
            Some(g) => Tensor::new(input_shape, g),
            None => Ok(Tensor::zeros(input_shape)),
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(&contribution) {
                *a += v;
            }
        }
        None => *slot = Some(contribution),
    }
}
