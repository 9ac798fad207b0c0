//! Top-k node pooling followed by a CLS-token transformer classifier.

mod pool;
mod transformer;

pub use pool::{top_k_indices, topk_pool, PoolOutput, PoolParams, POOL_SCORE};
pub use transformer::{
    attention_probs, classify, mha, transformer_layer, LayerWeights, TransformerParams, CLS, LN_EPS,
};
