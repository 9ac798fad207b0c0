//! Dense matrices with recorded operations for reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable row-major matrix plus the operation that
//! produced it. Calling [`backward`] on a 1x1 tensor walks the recorded graph
//! in reverse topological order and accumulates gradients into every tensor
//! that requires one. Gradients accumulate across calls; use
//! [`Tensor::zero_grad`] to reset.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

pub(crate) enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    Mul(Tensor, Tensor),
    MulCol(Tensor, Tensor),
    Scale(Tensor, f64),
    Relu(Tensor),
    Sigmoid(Tensor),
    SoftmaxRows(Tensor),
    LayerNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        normalized: Array2<f64>,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: Tensor,
        label: usize,
        probs: Array2<f64>,
    },
    Transpose(Tensor),
    SliceCols(Tensor, usize),
    ConcatCols(Vec<Tensor>),
    ConcatRows(Vec<Tensor>),
    SelectRows(Tensor, Vec<usize>),
    SumSquares(Tensor),
    Sum(Tensor),
}

pub(crate) struct Node {
    value: Array2<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Array2<f64>>>,
    op: Op,
}

/// Handle to a node in a recorded computation. Cloning is cheap.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .field("value", &self.0.value)
            .finish()
    }
}

impl Tensor {
    pub fn new(value: Array2<f64>, requires_grad: bool) -> Self {
        Self::from_op(value, requires_grad, Op::Leaf)
    }

    /// Trainable leaf.
    pub fn param(value: Array2<f64>) -> Self {
        Self::new(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(value: Array2<f64>) -> Self {
        Self::new(value, false)
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        let n = values.len();
        let arr =
            Array2::from_shape_vec((rows, cols), values).map_err(|_| Error::shape("from_vec", (rows, cols), (n, 1)))?;
        Ok(Self::new(arr, requires_grad))
    }

    pub(crate) fn from_op(value: Array2<f64>, requires_grad: bool, op: Op) -> Self {
        Tensor(Rc::new(Node {
            value,
            requires_grad,
            grad: RefCell::new(None),
            op,
        }))
    }

    pub fn value(&self) -> &Array2<f64> {
        &self.0.value
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.value.dim()
    }

    pub fn rows(&self) -> usize {
        self.0.value.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.value.ncols()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        self.0.value[[0, 0]]
    }

    pub fn grad(&self) -> Option<Ref<'_, Array2<f64>>> {
        let g = self.0.grad.borrow();
        if g.is_some() {
            Some(Ref::map(g, |g| g.as_ref().unwrap()))
        } else {
            None
        }
    }

    /// Gradient as an owned array, zeros if nothing has been accumulated.
    pub fn grad_or_zeros(&self) -> Array2<f64> {
        match self.0.grad.borrow().as_ref() {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shape()),
        }
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn op(&self) -> &Op {
        &self.0.op
    }

    fn key(&self) -> *const Node {
        Rc::as_ptr(&self.0)
    }

    /// Detached copy of the value: same numbers, no history, no gradient.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.0.value.clone())
    }

    pub fn backward(&self) -> Result<()> {
        backward(self)
    }
}

fn parents(op: &Op) -> Vec<&Tensor> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) | Op::MulCol(a, b) => {
            vec![a, b]
        }
        Op::Scale(a, _)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::SoftmaxRows(a)
        | Op::Transpose(a)
        | Op::SliceCols(a, _)
        | Op::SelectRows(a, _)
        | Op::SumSquares(a)
        | Op::Sum(a) => vec![a],
        Op::LayerNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
        Op::CrossEntropy { logits, .. } => vec![logits],
        Op::ConcatCols(ts) | Op::ConcatRows(ts) => ts.iter().collect(),
    }
}

fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = std::collections::HashSet::new();
    // (node, children already pushed)
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.key()) {
            continue;
        }
        stack.push((t.clone(), true));
        for p in parents(t.op()) {
            if p.requires_grad() && !visited.contains(&p.key()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

fn accumulate(map: &mut HashMap<*const Node, Array2<f64>>, t: &Tensor, g: Array2<f64>) {
    if !t.requires_grad() {
        return;
    }
    match map.get_mut(&t.key()) {
        Some(acc) => *acc += &g,
        None => {
            map.insert(t.key(), g);
        }
    }
}

/// Reverse-mode pass from a scalar output.
///
/// Every tensor reachable from `output` with `requires_grad` set ends up with
/// a populated grad buffer, zero if it did not influence the output. Results
/// are added to whatever the buffers held before.
pub fn backward(output: &Tensor) -> Result<()> {
    if output.shape() != (1, 1) {
        return Err(Error::NonScalar(output.shape()));
    }
    if !output.requires_grad() {
        return Ok(());
    }
    let order = topo_order(output);
    let mut grads: HashMap<*const Node, Array2<f64>> = HashMap::new();
    grads.insert(output.key(), Array2::from_elem((1, 1), 1.0));

    for t in order.iter().rev() {
        let Some(g) = grads.get(&t.key()).cloned() else {
            continue;
        };
        propagate(t, &g, &mut grads);
    }

    for t in &order {
        let g = grads.remove(&t.key()).unwrap_or_else(|| Array2::zeros(t.shape()));
        let mut slot = t.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => *acc += &g,
            None => *slot = Some(g),
        }
    }
    Ok(())
}

fn propagate(t: &Tensor, g: &Array2<f64>, grads: &mut HashMap<*const Node, Array2<f64>>) {
    match t.op() {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if a.requires_grad() {
                accumulate(grads, a, g.dot(&b.value().t()));
            }
            if b.requires_grad() {
                accumulate(grads, b, a.value().t().dot(g));
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, a, g.clone());
            accumulate(grads, b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, a, g.clone());
            if b.requires_grad() {
                accumulate(grads, b, -g);
            }
        }
        Op::AddRow(a, row) => {
            accumulate(grads, a, g.clone());
            if row.requires_grad() {
                accumulate(grads, row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                accumulate(grads, a, g * b.value());
            }
            if b.requires_grad() {
                accumulate(grads, b, g * a.value());
            }
        }
        Op::MulCol(a, col) => {
            if a.requires_grad() {
                accumulate(grads, a, g * col.value());
            }
            if col.requires_grad() {
                let gc = (g * a.value()).sum_axis(Axis(1)).insert_axis(Axis(1));
                accumulate(grads, col, gc);
            }
        }
        Op::Scale(a, k) => accumulate(grads, a, g * *k),
        Op::Relu(a) => {
            let mut ga = g.clone();
            ga.zip_mut_with(a.value(), |gi, &x| {
                if x <= 0.0 {
                    *gi = 0.0;
                }
            });
            accumulate(grads, a, ga);
        }
        Op::Sigmoid(a) => {
            let y = t.value();
            let mut ga = g.clone();
            ga.zip_mut_with(y, |gi, &yi| *gi *= yi * (1.0 - yi));
            accumulate(grads, a, ga);
        }
        Op::SoftmaxRows(a) => {
            let y = t.value();
            let mut ga = g * y;
            for (mut row, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                let dot: f64 = row.sum();
                row.zip_mut_with(&yrow, |v, &yi| *v -= yi * dot);
            }
            accumulate(grads, a, ga);
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            normalized,
            inv_std,
        } => {
            if gamma.requires_grad() {
                let gg = (g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
                accumulate(grads, gamma, gg);
            }
            if beta.requires_grad() {
                accumulate(grads, beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            if x.requires_grad() {
                let cols = normalized.ncols() as f64;
                let mut gx = g * gamma.value();
                for ((mut row, xhat), &s) in gx.rows_mut().into_iter().zip(normalized.rows()).zip(inv_std.iter()) {
                    let mean_g = row.sum() / cols;
                    let mean_gx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / cols;
                    row.zip_mut_with(&xhat, |v, &xh| *v = s * (*v - mean_g - xh * mean_gx));
                }
                accumulate(grads, x, gx);
            }
        }
        Op::CrossEntropy { logits, label, probs } => {
            let mut gl = probs.clone();
            gl[[0, *label]] -= 1.0;
            accumulate(grads, logits, gl * g[[0, 0]]);
        }
        Op::Transpose(a) => accumulate(grads, a, g.t().to_owned()),
        Op::SliceCols(a, start) => {
            if a.requires_grad() {
                let mut ga = Array2::zeros(a.shape());
                let w = g.ncols();
                ga.slice_mut(s![.., *start..*start + w]).assign(g);
                accumulate(grads, a, ga);
            }
        }
        Op::ConcatCols(parts) => {
            let mut off = 0;
            for p in parts {
                let w = p.cols();
                if p.requires_grad() {
                    accumulate(grads, p, g.slice(s![.., off..off + w]).to_owned());
                }
                off += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for p in parts {
                let h = p.rows();
                if p.requires_grad() {
                    accumulate(grads, p, g.slice(s![off..off + h, ..]).to_owned());
                }
                off += h;
            }
        }
        Op::SelectRows(a, idx) => {
            if a.requires_grad() {
                let mut ga = Array2::zeros(a.shape());
                for (r, &i) in idx.iter().enumerate() {
                    let mut dst = ga.row_mut(i);
                    dst += &g.row(r);
                }
                accumulate(grads, a, ga);
            }
        }
        Op::SumSquares(a) => accumulate(grads, a, a.value() * (2.0 * g[[0, 0]])),
        Op::Sum(a) => accumulate(grads, a, Array2::from_elem(a.shape(), g[[0, 0]])),
    }
}
