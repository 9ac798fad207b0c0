//! The full classifier: GCN, optional denoiser, top-k pool, transformer.

use crate::denoiser::{fit_denoise, DenoiserConfig};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, GcnParams};
use crate::graphbuild::PatchGraph;
use crate::numcore::{add, BoundParams, ParamSet, Tensor};
use crate::pooltrans::{classify, topk_pool, PoolParams, TransformerParams, POOL_SCORE};
use crate::util::{derive_seed, glorot_uniform, rng};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelConfig {
    pub gcn: GcnParams,
    pub pool: PoolParams,
    pub transformer: TransformerParams,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        GcnParams::new(self.gcn.dims.clone())?;
        self.transformer.validate()?;
        if self.gcn.out_dim() != self.transformer.model_dim {
            return Err(Error::InvalidArgument(format!(
                "GCN output width {} differs from transformer width {}",
                self.gcn.out_dim(),
                self.transformer.model_dim
            )));
        }
        if self.pool.n_keep == 0 {
            return Err(Error::InvalidArgument("n_keep must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.gcn.dims[0]
    }

    pub fn n_classes(&self) -> usize {
        self.transformer.n_classes
    }

    /// Fresh parameters: GCN weights, then the pool scorer, then the transformer.
    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        self.validate()?;
        let mut r = rng(seed);
        let mut ps = ParamSet::new();
        self.gcn.init(&mut r, &mut ps);
        ps.insert(POOL_SCORE, glorot_uniform(self.gcn.out_dim(), 1, &mut r));
        self.transformer.init(&mut r, &mut ps);
        Ok(ps)
    }

    /// Logits `1xC` for one graph.
    ///
    /// With a denoiser the pooled embedding is `H + sg(D(H) − H)`: the values
    /// are the denoised ones while gradients pass to `H` unchanged.
    pub fn forward(
        &self,
        graph: &PatchGraph,
        bound: &BoundParams,
        denoiser: Option<&DenoiserConfig>,
    ) -> Result<Tensor> {
        if graph.feature_dim() != self.input_dim() {
            return Err(Error::shape(
                "model input",
                graph.features.dim(),
                (graph.n_nodes(), self.input_dim()),
            ));
        }
        let x = Tensor::constant(graph.features.clone());
        let a = Tensor::constant(graph.adjacency_norm.clone());
        let mut h = gcn_forward(&x, &a, &self.gcn.layer_weights(bound)?)?;
        if let Some(cfg) = denoiser {
            let cfg = DenoiserConfig {
                seed: derive_seed(cfg.seed, &graph.id),
                ..cfg.clone()
            };
            let den = fit_denoise(h.value(), &graph.adjacency_norm, &cfg)?;
            h = add(&h, &Tensor::constant(den.x_denoised - h.value()))?;
        }
        let pooled = topk_pool(&h, bound.try_get(POOL_SCORE)?, self.pool)?;
        classify(&pooled.tokens, &pooled.mask, &self.transformer, bound)
    }
}

/// Index of the largest logit, ties to the smaller class.
pub fn argmax(logits: &Tensor) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in logits.value().iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn tiny() -> ModelConfig {
        ModelConfig {
            gcn: GcnParams::new(vec![3, 8, 8]).unwrap(),
            pool: PoolParams { n_keep: 4 },
            transformer: TransformerParams {
                n_layers: 1,
                n_heads: 2,
                model_dim: 8,
                mlp_ratio: 2,
                n_classes: 3,
            },
        }
    }

    fn graph() -> PatchGraph {
        PatchGraph::new(
            "g",
            1,
            array![[0.1, 0.5, 0.2], [0.9, 0.1, 0.4], [0.3, 0.3, 0.3]],
            vec![(0, 0), (1, 0), (0, 1)],
            vec![(0, 1), (0, 2)],
        )
        .unwrap()
    }

    #[test]
    fn argmax_ties_to_smaller() {
        assert_eq!(argmax(&Tensor::constant(array![[1.0, 3.0, 3.0]])), 1);
        assert_eq!(argmax(&Tensor::constant(array![[2.0, 2.0]])), 0);
    }

    #[test]
    fn forward_shapes_and_width_checks() {
        let m = tiny();
        let ps = m.init_params(1).unwrap();
        let logits = m.forward(&graph(), &ps.bind(), None).unwrap();
        assert_eq!(logits.shape(), (1, 3));
        let mut g = graph();
        g.features = Array2::zeros((3, 4));
        assert!(m.forward(&g, &ps.bind(), None).is_err());
        let bad = ModelConfig {
            gcn: GcnParams::new(vec![3, 4]).unwrap(),
            ..tiny()
        };
        assert!(bad.init_params(0).is_err());
    }

    #[test]
    fn denoiser_changes_activations_not_gradient_set() {
        let m = tiny();
        let ps = m.init_params(2).unwrap();
        let den = DenoiserConfig {
            hidden_width: 16,
            max_iters: 20,
            ..Default::default()
        };
        let grads_with = |d: Option<&DenoiserConfig>| {
            let b = ps.bind();
            let loss = crate::numcore::cross_entropy(&m.forward(&graph(), &b, d).unwrap(), 1).unwrap();
            loss.backward().unwrap();
            b.tensors().iter().map(|t| t.grad().is_some()).collect::<Vec<_>>()
        };
        assert_eq!(grads_with(None), grads_with(Some(&den)));
        let a = m.forward(&graph(), &ps.bind(), None).unwrap();
        let b = m.forward(&graph(), &ps.bind(), Some(&den)).unwrap();
        assert_ne!(a.value(), b.value());
    }
}
