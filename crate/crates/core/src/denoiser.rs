//! Untrained-prior denoising of node signals.
//!
//! For each input signal `x` (N×d) a fresh graph-convolutional generator
//! `f_θ(z|G)` is built with random `θ` and a fixed random input `z`
//! (N×hidden). `θ` is fitted to `½‖x − f_θ(z|G)‖²` by full-batch gradient
//! descent and stopped early; the generator output at the last evaluated `θ`
//! is the denoised signal. Low-frequency structure on the graph is fitted
//! well before noise, which is what early stopping exploits.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gcn::gcn_forward;
use crate::numcore::{gd_step, scale, sub, sum_squares, OptimizerState, Tensor};
use crate::util::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub hidden_width: usize,
    pub n_layers: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    /// Relative loss improvement below which an iteration counts toward the plateau.
    pub stop_rel_tol: f64,
    /// Consecutive plateau iterations before stopping; 0 disables plateau stopping.
    pub stop_patience: usize,
    pub z_std: f64,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            hidden_width: 256,
            n_layers: 2,
            max_iters: 200,
            learning_rate: 0.01,
            stop_rel_tol: 1e-4,
            stop_patience: 10,
            z_std: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Plateau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    pub x_denoised: Array2<f64>,
    pub iterations_run: usize,
    pub loss_history: Vec<f64>,
    pub stop_reason: StopReason,
}

/// Layer widths `hidden → … → hidden → d` for `n_layers` layers.
fn generator_dims(config: &DenoiserConfig, d: usize) -> Vec<usize> {
    let mut dims = vec![config.hidden_width; config.n_layers];
    dims.push(d);
    dims
}

/// Random generator weights, zero-mean Gaussian with Glorot variance
/// `2/(fan_in+fan_out)`.
pub fn init_generator(dims: &[usize], rng: &mut impl Rng) -> Vec<Array2<f64>> {
    dims.windows(2)
        .map(|p| {
            let std = (2.0 / (p[0] + p[1]) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            Array2::from_shape_simple_fn((p[0], p[1]), || normal.sample(rng))
        })
        .collect()
}

/// `f_θ(z|G)`: graph convolutions with ReLU between layers and a linear last layer.
pub fn generator_forward(z: &Tensor, a_norm: &Tensor, theta: &[&Tensor]) -> Result<Tensor> {
    gcn_forward(z, a_norm, theta)
}

/// `½‖x − f‖²` as a scalar tensor.
pub fn fit_loss(x: &Tensor, f: &Tensor) -> Result<Tensor> {
    Ok(scale(&sum_squares(&sub(x, f)?), 0.5))
}

pub fn fit_denoise(x: &Array2<f64>, a_norm: &Array2<f64>, config: &DenoiserConfig) -> Result<DenoiseResult> {
    let (n, d) = x.dim();
    if a_norm.dim() != (n, n) {
        return Err(Error::shape("fit_denoise adjacency", a_norm.dim(), x.dim()));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("denoiser input"));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if config.n_layers == 0 || config.hidden_width < d {
        return Err(Error::InvalidArgument(format!(
            "generator needs at least one layer and hidden width >= {d}"
        )));
    }

    let mut r = rng(config.seed);
    let z_dist = Normal::new(0.0, config.z_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let z = Tensor::constant(Array2::from_shape_simple_fn((n, config.hidden_width), || {
        z_dist.sample(&mut r)
    }));
    let mut theta = init_generator(&generator_dims(config, d), &mut r);

    let a = Tensor::constant(a_norm.clone());
    let target = Tensor::constant(x.clone());
    let mut opt = OptimizerState::gd(config.learning_rate);
    let mut history = Vec::with_capacity(config.max_iters);
    let mut flat_run = 0usize;

    loop {
        let leaves: Vec<Tensor> = theta.iter().map(|w| Tensor::param(w.clone())).collect();
        let refs: Vec<&Tensor> = leaves.iter().collect();
        let out = generator_forward(&z, &a, &refs)?;
        let loss = fit_loss(&target, &out)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite("denoiser loss"));
        }
        if let Some(&prev) = history.last() {
            let rel = (prev - value) / f64::max(prev, f64::MIN_POSITIVE);
            if rel < config.stop_rel_tol {
                flat_run += 1;
            } else {
                flat_run = 0;
            }
        }
        history.push(value);

        let plateau = config.stop_patience > 0 && flat_run >= config.stop_patience;
        if plateau || history.len() == config.max_iters {
            return Ok(DenoiseResult {
                x_denoised: out.value().clone(),
                iterations_run: history.len(),
                loss_history: history,
                stop_reason: if plateau {
                    StopReason::Plateau
                } else {
                    StopReason::Budget
                },
            });
        }

        loss.backward()?;
        let grads: Vec<Array2<f64>> = leaves.iter().map(Tensor::grad_or_zeros).collect();
        gd_step(&mut theta, &grads, &mut opt)?;
    }
}
