//! Recorded forward pass over a closed set of ops.
//!
//! A [`Graph`] stores every intermediate value together with the op that
//! produced it. [`Graph::backward`] walks the record in reverse and calls the
//! hand-written adjoint of each op; there is no generic differentiation.

use super::kernels;
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::dwt::{self, Band};
use crate::error::{Error, Result};

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    graph: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Dense { x: Var, w: Var, b: Var },
    Relu(Var),
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2x(Var),
    Concat(Vec<Var>),
    DwtBand { x: Var, band: Band },
    MaxOverPoints { x: Var, argmax: Vec<usize> },
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    SquaredError { x: Var, target: Tensor },
    Scale { x: Var, factor: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn next_graph_id() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: next_graph_id(),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::NoForward);
        }
        Ok(())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.graph, self.id, "variable belongs to another graph");
        &self.nodes[v.index].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        for v in [x, w, b] {
            self.check(v)?;
        }
        let y = kernels::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(y, Op::Conv2d { x, w, b, stride, pad }))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        for v in [x, w, b] {
            self.check(v)?;
        }
        let y = kernels::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = kernels::relu(self.value(x));
        Ok(self.push(y, Op::Relu(x)))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let (y, argmax) = kernels::maxpool2x2(self.value(x))?;
        Ok(self.push(y, Op::MaxPool2 { x, argmax }))
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = kernels::upsample_bilinear2x(self.value(x))?;
        Ok(self.push(y, Op::Upsample2x(x)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let y = kernels::concat_channels(&refs)?;
        Ok(self.push(y, Op::Concat(parts.to_vec())))
    }

    pub fn dwt_band(&mut self, x: Var, band: Band) -> Result<Var> {
        self.check(x)?;
        let y = dwt::dwt_band(self.value(x), band)?;
        Ok(self.push(y, Op::DwtBand { x, band }))
    }

    pub fn max_over_points(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        self.check(x)?;
        let (y, argmax) = kernels::max_over_points(self.value(x), mask)?;
        Ok(self.push(y, Op::MaxOverPoints { x, argmax }))
    }

    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let (loss, probs) = kernels::softmax_ce(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// `0.5 * sum((x - target)^2)`.
    pub fn squared_error(&mut self, x: Var, target: Tensor) -> Result<Var> {
        self.check(x)?;
        if self.value(x).shape() != target.shape() {
            return Err(Error::shape(
                "squared_error",
                format!("{:?} vs target {:?}", self.value(x).shape(), target.shape()),
            ));
        }
        let loss = 0.5
            * self
                .value(x)
                .data()
                .iter()
                .zip(target.data())
                .map(|(a, t)| (a - t) * (a - t))
                .sum::<f64>();
        Ok(self.push(Tensor::scalar(loss), Op::SquaredError { x, target }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.check(x)?;
        let mut y = self.value(x).clone();
        y.scale_assign(factor);
        Ok(self.push(y, Op::Scale { x, factor }))
    }

    /// Back-propagates from the scalar `loss` and adds parameter gradients
    /// into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.check(loss)?;
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, t: Tensor| match &mut grads[v.index] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    if p.grad.shape() != g.shape() {
                        return Err(Error::shape("backward", format!("parameter `{}` changed shape", p.name)));
                    }
                    p.grad.add_assign(&g);
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) = kernels::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        self.value(*b),
                        *stride,
                        *pad,
                        &g,
                    )?;
                    send(*x, dx);
                    send(*w, dw);
                    send(*b, db);
                }
                Op::Dense { x, w, b } => {
                    let (dx, dw, db) = kernels::dense_backward(self.value(*x), self.value(*w), &g);
                    send(*x, dx);
                    send(*w, dw);
                    send(*b, db);
                }
                Op::Relu(x) => send(*x, kernels::relu_backward(self.value(*x), &g)),
                Op::MaxPool2 { x, argmax } => {
                    send(*x, kernels::maxpool2x2_backward(self.value(*x).shape(), argmax, &g))
                }
                Op::Upsample2x(x) => {
                    send(*x, kernels::upsample_bilinear2x_backward(self.value(*x).shape(), &g))
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let piece = g.data()[offset..offset + n].to_vec();
                        send(p, Tensor::from_raw(self.value(p).shape().to_vec(), piece));
                        offset += n;
                    }
                }
                Op::DwtBand { x, band } => send(*x, dwt::dwt_band_adjoint(&g, *band)?),
                Op::MaxOverPoints { x, argmax } => {
                    send(*x, kernels::max_over_points_backward(self.value(*x).shape(), argmax, &g))
                }
                Op::SoftmaxCe { logits, labels, probs } => send(
                    *logits,
                    kernels::softmax_ce_backward(self.value(*logits).shape(), probs, labels, g.data()[0]),
                ),
                Op::SquaredError { x, target } => {
                    let s = g.data()[0];
                    let d = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(a, t)| s * (a - t))
                        .collect();
                    send(*x, Tensor::from_raw(target.shape().to_vec(), d));
                }
                Op::Scale { x, factor } => {
                    let mut d = g;
                    d.scale_assign(*factor);
                    send(*x, d);
                }
            }
        }
        Ok(())
    }
}
