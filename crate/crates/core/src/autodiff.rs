//! Reverse-mode differentiation over the tensor kernels.
//!
//! A [`Tape`] records every operation as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is already a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use crate::corner_pooling::{pool_with_argmax, PoolDirection};
use crate::correlation::{depthwise_correlate, depthwise_correlate_grads};
use crate::error::{shape_err, Error, Result};
use crate::targets::{self, LossWeights};
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Pool {
        input: Var,
        argmax: Vec<usize>,
    },
    Correlate {
        template: Var,
        search: Var,
    },
    GlobalAvgPool(Var),
    FocalLoss {
        pred: Var,
        target: Tensor,
        weights: LossWeights,
        k: usize,
    },
    OffsetLoss {
        pred: Var,
        cells: Vec<(usize, usize, usize)>,
        targets: Vec<[f64; 2]>,
        k: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: bool,
    /// Depends on at least one parameter, so it receives a gradient.
    tracked: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { input, kernel, bias, .. } => vec![*input, *kernel, *bias],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Correlate { template, search } => vec![*template, *search],
            Op::Relu(x) | Op::Sigmoid(x) | Op::Scale(x, _) | Op::Sum(x) | Op::GlobalAvgPool(x) => vec![*x],
            Op::Pool { input, .. } => vec![*input],
            Op::FocalLoss { pred, .. } | Op::OffsetLoss { pred, .. } => vec![*pred],
        }
    }
}

#[derive(Debug, Default)]
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let tracked = op.inputs().iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node { value, op, param: false, tracked });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf; its gradient is always reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].param = true;
        self.nodes[v.0].tracked = true;
        v
    }

    /// A leaf that is not reported as a parameter.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn params(&self) -> impl Iterator<Item = Var> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.param)
            .map(|(i, _)| Var(i))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let out = tensor::conv2d(self.value(input), self.value(kernel), self.value(bias).data(), stride, padding)?;
        Ok(self.push(out, Op::Conv2d { input, kernel, bias, stride, padding }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = tensor::relu(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = tensor::sigmoid(self.value(x));
        self.push(out, Op::Sigmoid(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    pub fn pool(&mut self, x: Var, dir: PoolDirection) -> Var {
        let (out, argmax) = pool_with_argmax(self.value(x), dir);
        self.push(out, Op::Pool { input: x, argmax })
    }

    pub fn correlate(&mut self, template: Var, search: Var) -> Result<Var> {
        let out = depthwise_correlate(self.value(template), self.value(search))?;
        Ok(self.push(out, Op::Correlate { template, search }))
    }

    /// Spatial mean per sample and channel, giving `[n, c, 1, 1]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [n, c, h, w] = t.shape();
        let area = (h * w) as f64;
        let data = (0..n * c)
            .map(|p| t.data()[p * h * w..][..h * w].iter().sum::<f64>() / area)
            .collect();
        let out = Tensor::new([n, c, 1, 1], data).expect("pooled shape");
        self.push(out, Op::GlobalAvgPool(x))
    }

    /// Focal heatmap loss of probabilities `pred` against `target`.
    pub fn focal_loss(&mut self, pred: Var, target: &Tensor, weights: &LossWeights, k: usize) -> Result<Var> {
        let v = targets::focal_loss(self.value(pred), target, weights, k)?;
        Ok(self.push(
            Tensor::scalar(v),
            Op::FocalLoss { pred, target: target.clone(), weights: *weights, k },
        ))
    }

    /// Smooth-L1 offset loss read from a 2-channel offset map at `cells`.
    pub fn offset_loss(
        &mut self,
        pred: Var,
        cells: &[(usize, usize, usize)],
        targets_: &[[f64; 2]],
        k: usize,
    ) -> Result<Var> {
        let map = self.value(pred);
        if map.channels() != 2 {
            return Err(shape_err!("offset map needs 2 channels, has {}", map.channels()));
        }
        let gathered = targets::gather_offsets(map, cells);
        let v = targets::offset_loss(&gathered, targets_, k)?;
        Ok(self.push(
            Tensor::scalar(v),
            Op::OffsetLoss { pred, cells: cells.to_vec(), targets: targets_.to_vec(), k },
        ))
    }

    /// Gradient of the scalar `loss` with respect to every node that depends
    /// on a parameter; constants and their descendants are skipped.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node has shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        let tracked: Vec<bool> = self.nodes.iter().map(|n| n.tracked).collect();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let accumulate = |grads: &mut [Option<Tensor>], v: Var, g: Tensor| {
                if tracked[v.0] {
                    accumulate(grads, v, g);
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { input, kernel, bias, stride, padding } => {
                    let k = self.value(*kernel);
                    if self.nodes[input.0].tracked {
                        let gi = tensor::conv2d_grad_input(&g, k, self.value(*input).shape(), *stride, *padding);
                        accumulate(&mut grads, *input, gi);
                    }
                    if self.nodes[kernel.0].tracked || self.nodes[bias.0].tracked {
                        let (gk, gb) = tensor::conv2d_grad_params(&g, self.value(*input), k.shape(), *stride, *padding);
                        accumulate(&mut grads, *kernel, gk);
                        let bshape = self.value(*bias).shape();
                        accumulate(&mut grads, *bias, Tensor::new(bshape, gb)?);
                    }
                }
                Op::Relu(x) => {
                    // subgradient 0 at the kink
                    let gx = g.zip_map(self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |g, s| g * s * (1.0 - s))?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |g, y| g * y)?;
                    let gb = g.zip_map(self.value(*a), |g, x| g * x)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    accumulate(&mut grads, *x, g.map(|v| v * f));
                }
                Op::Sum(x) => {
                    let s = g.data()[0];
                    accumulate(&mut grads, *x, Tensor::full(self.value(*x).shape(), s));
                }
                Op::Pool { input, argmax } => {
                    let mut gx = Tensor::zeros(self.value(*input).shape());
                    let dst = gx.data_mut();
                    for (o, &src) in argmax.iter().enumerate() {
                        dst[src] += g.data()[o];
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::Correlate { template, search } => {
                    let (gt, gs) = depthwise_correlate_grads(&g, self.value(*template), self.value(*search));
                    accumulate(&mut grads, *template, gt);
                    accumulate(&mut grads, *search, gs);
                }
                Op::GlobalAvgPool(x) => {
                    let shape = self.value(*x).shape();
                    let area = (shape[2] * shape[3]) as f64;
                    let gx = Tensor::from_fn(shape, |n, c, _, _| g.at(n, c, 0, 0) / area);
                    accumulate(&mut grads, *x, gx);
                }
                Op::FocalLoss { pred, target, weights, k } => {
                    let s = g.data()[0];
                    let gp = targets::focal_loss_grad(self.value(*pred), target, weights, *k)?.map(|v| v * s);
                    accumulate(&mut grads, *pred, gp);
                }
                Op::OffsetLoss { pred, cells, targets: tg, k } => {
                    let s = g.data()[0];
                    let map = self.value(*pred);
                    let gathered = targets::gather_offsets(map, cells);
                    let per = targets::offset_loss_grad(&gathered, tg, *k)?;
                    let mut gp = Tensor::zeros(map.shape());
                    for (&(n, y, x), d) in cells.iter().zip(per) {
                        let i0 = gp.offset(n, 0, y, x);
                        let i1 = gp.offset(n, 1, y, x);
                        gp.data_mut()[i0] += s * d[0];
                        gp.data_mut()[i1] += s * d[1];
                    }
                    accumulate(&mut grads, *pred, gp);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    shapes: Vec<[usize; 4]>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` did not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0]))
    }

    pub fn get_ref(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

/// Worst disagreement between an analytic gradient and central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub max_abs_err: f64,
    /// `|analytic - numeric| / max(1, |analytic|, |numeric|)`, maximised.
    pub max_rel_err: f64,
    /// Flat index of the coordinate with the largest relative error.
    pub worst_index: usize,
    pub coordinates: usize,
}

impl GradientReport {
    fn empty() -> Self {
        Self { max_abs_err: 0.0, max_rel_err: 0.0, worst_index: 0, coordinates: 0 }
    }

    fn record(&mut self, index: usize, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(1.0);
        self.max_abs_err = self.max_abs_err.max(abs);
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst_index = index;
        }
        self.coordinates += 1;
    }

    /// Combines reports of several parameter tensors.
    pub fn merge(mut self, other: &GradientReport) -> Self {
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst_index = other.worst_index;
        }
        self.coordinates += other.coordinates;
        self
    }
}

/// Compares the tape gradient of `f` at `point` against central differences
/// `(f(x+h) - f(x-h)) / 2h` on every coordinate.
///
/// `f` records its computation on the supplied tape, starting from the input
/// variable, and returns a scalar node.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<GradientReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Param(format!("grad_check: step must be positive, got {step}")));
    }
    let eval = |x: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let out = f(&mut tape, v)?;
        let val = tape.value(out);
        if val.len() != 1 {
            return Err(Error::Contract("grad_check: function must return a scalar".into()));
        }
        let y = val.data()[0];
        if !y.is_finite() {
            return Err(Error::Numeric(format!("grad_check: function value {y} is not finite")));
        }
        Ok(y)
    };

    let mut tape = Tape::new();
    let input = tape.param(point.clone());
    let out = f(&mut tape, input)?;
    eval(point)?;
    let analytic = tape.backward(out)?.get(input);

    let mut report = GradientReport::empty();
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        report.record(i, analytic.data()[i], (up - down) / (2.0 * step));
    }
    Ok(report)
}
