//! Stacked graph convolutions `H_{l+1} = σ(Â H_l W_l)`, ReLU between layers
//! and no nonlinearity after the last one. No bias terms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{matmul, relu, BoundParams, ParamSet, Tensor};
use crate::util::glorot_uniform;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcnParams {
    /// `[d_in, hidden..., d_out]`; one weight per consecutive pair.
    pub dims: Vec<usize>,
}

impl Default for GcnParams {
    fn default() -> Self {
        Self {
            dims: vec![64, 128, 128],
        }
    }
}

impl GcnParams {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad GCN dims {dims:?}")));
        }
        Ok(Self { dims })
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("non-empty")
    }

    pub fn weight_name(layer: usize) -> String {
        format!("gcn.{layer}.w")
    }

    pub fn init(&self, rng: &mut impl Rng, params: &mut ParamSet) {
        for (l, pair) in self.dims.windows(2).enumerate() {
            params.insert(Self::weight_name(l), glorot_uniform(pair[0], pair[1], rng));
        }
    }

    pub fn layer_weights<'a>(&self, bound: &'a BoundParams) -> Result<Vec<&'a Tensor>> {
        (0..self.n_layers())
            .map(|l| bound.try_get(&Self::weight_name(l)))
            .collect()
    }
}

/// One propagation step `σ(Â·H·W)`.
pub fn gcn_layer(h: &Tensor, a_norm: &Tensor, w: &Tensor, apply_nonlin: bool) -> Result<Tensor> {
    if a_norm.rows() != a_norm.cols() || a_norm.cols() != h.rows() {
        return Err(Error::shape("gcn_layer adjacency", a_norm.shape(), h.shape()));
    }
    if h.cols() != w.rows() {
        return Err(Error::shape("gcn_layer weight", h.shape(), w.shape()));
    }
    // multiply in the cheaper order; both are Â·H·W
    let out = if w.cols() <= w.rows() {
        matmul(a_norm, &matmul(h, w)?)?
    } else {
        matmul(&matmul(a_norm, h)?, w)?
    };
    Ok(if apply_nonlin { relu(&out) } else { out })
}

/// Applies every layer in turn; the result is the node embedding matrix.
pub fn gcn_forward(features: &Tensor, a_norm: &Tensor, weights: &[&Tensor]) -> Result<Tensor> {
    let first = weights
        .first()
        .ok_or_else(|| Error::InvalidArgument("GCN with no layers".into()))?;
    if features.cols() != first.rows() {
        return Err(Error::shape("gcn_forward input", features.shape(), first.shape()));
    }
    let mut h = features.clone();
    for (l, w) in weights.iter().enumerate() {
        h = gcn_layer(&h, a_norm, w, l + 1 < weights.len())?;
    }
    Ok(h)
}
