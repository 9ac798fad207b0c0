//! Adam (with decoupled weight decay) and plain gradient descent.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Gd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_count: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Per-parameter moment buffers; empty until the first Adam step.
    pub first_moment: Vec<Array2<f64>>,
    pub second_moment: Vec<Array2<f64>>,
}

impl OptimizerState {
    pub fn adam(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            step_count: 0,
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn gd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Gd,
            step_count: 0,
            learning_rate,
            weight_decay: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

fn check_shapes(params: &[Array2<f64>], grads: &[Array2<f64>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("optimizer", (params.len(), 0), (grads.len(), 0)));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.dim() != g.dim() {
            return Err(Error::shape("optimizer", p.dim(), g.dim()));
        }
    }
    Ok(())
}

/// One Adam step. Weight decay is decoupled: `p ← p − lr·wd·p` is applied
/// before the moment update, and never enters the moments.
pub fn adam_step(params: &mut [Array2<f64>], grads: &[Array2<f64>], state: &mut OptimizerState) -> Result<()> {
    if state.kind != OptimizerKind::Adam {
        return Err(Error::InvalidArgument("adam_step on a non-Adam state".into()));
    }
    check_shapes(params, grads)?;
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| Array2::zeros(p.dim())).collect();
        state.second_moment = state.first_moment.clone();
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        if p.dim() != m.dim() {
            return Err(Error::shape("adam moments", p.dim(), m.dim()));
        }
    }
    if state.first_moment.len() != params.len() {
        return Err(Error::shape(
            "adam moments",
            (params.len(), 0),
            (state.first_moment.len(), 0),
        ));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (lr, wd, b1, b2, eps) = (
        state.learning_rate,
        state.weight_decay,
        state.beta1,
        state.beta2,
        state.epsilon,
    );
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * wd;

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *p *= decay;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        });
    }
    Ok(())
}

/// `p ← p − lr·g`.
pub fn gd_step(params: &mut [Array2<f64>], grads: &[Array2<f64>], state: &mut OptimizerState) -> Result<()> {
    if state.kind != OptimizerKind::Gd {
        return Err(Error::InvalidArgument("gd_step on a non-GD state".into()));
    }
    check_shapes(params, grads)?;
    state.step_count += 1;
    let lr = state.learning_rate;
    for (p, g) in params.iter_mut().zip(grads) {
        p.scaled_add(-lr, g);
    }
    Ok(())
}
