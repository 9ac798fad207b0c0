use crate::error::{Error, Result};
use crate::numcore::{concat_rows, matmul, mul_col, select_rows, sigmoid, Tensor};

pub const POOL_SCORE: &str = "pool.score";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolParams {
    pub n_keep: usize,
}

impl Default for PoolParams {
    fn default() -> Self {
        Self { n_keep: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct PoolOutput {
    /// `n_keep x d`: kept rows in descending score order, then zero padding.
    pub tokens: Tensor,
    /// `true` for real rows, `false` for padding.
    pub mask: Vec<bool>,
    /// Source node of each kept row.
    pub selected: Vec<usize>,
}

/// Indices of the `k` largest scores, descending, ties to the smaller index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Learned-score top-k pooling with sigmoid gating.
///
/// Scores are `h·w`; the `n_keep` best rows are gated by `sigmoid(score)`.
/// Graphs with fewer nodes are padded with masked zero rows.
pub fn topk_pool(h: &Tensor, score_weight: &Tensor, params: PoolParams) -> Result<PoolOutput> {
    if params.n_keep == 0 {
        return Err(Error::InvalidArgument("n_keep must be at least 1".into()));
    }
    if score_weight.shape() != (h.cols(), 1) {
        return Err(Error::shape("topk_pool", h.shape(), score_weight.shape()));
    }
    let scores = matmul(h, score_weight)?;
    let flat: Vec<f64> = scores.value().iter().copied().collect();
    let selected = top_k_indices(&flat, params.n_keep);
    let rows = select_rows(h, &selected)?;
    let gate = sigmoid(&select_rows(&scores, &selected)?);
    let mut tokens = mul_col(&rows, &gate)?;
    let mut mask = vec![true; selected.len()];
    let pad = params.n_keep - selected.len();
    if pad > 0 {
        let zeros = Tensor::constant(ndarray::Array2::zeros((pad, h.cols())));
        tokens = concat_rows(&[tokens, zeros])?;
        mask.extend(std::iter::repeat_n(false, pad));
    }
    Ok(PoolOutput { tokens, mask, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn argsort_oracle() {
        assert_eq!(top_k_indices(&[5.0, 1.0, 4.0, 2.0, 3.0], 2), vec![0, 2]);
        assert_eq!(top_k_indices(&[1.0, 3.0, 3.0, 0.0], 3), vec![1, 2, 0]);
    }

    #[test]
    fn selects_gates_and_orders() {
        // one feature column so the score equals the feature
        let h = Tensor::constant(array![[5.0], [1.0], [4.0], [2.0], [3.0]]);
        let w = Tensor::constant(array![[1.0]]);
        let out = topk_pool(&h, &w, PoolParams { n_keep: 2 }).unwrap();
        assert_eq!(out.selected, vec![0, 2]);
        assert_eq!(out.mask, vec![true, true]);
        let v = out.tokens.value();
        assert!((v[[0, 0]] - 5.0 * sig(5.0)).abs() < 1e-15);
        assert!((v[[1, 0]] - 4.0 * sig(4.0)).abs() < 1e-15);
    }

    #[test]
    fn keeps_everything_when_sizes_match() {
        let h = Tensor::constant(array![[0.1, 2.0], [1.0, -1.0], [0.3, 0.3]]);
        let w = Tensor::constant(array![[1.0], [0.5]]);
        let out = topk_pool(&h, &w, PoolParams { n_keep: 3 }).unwrap();
        // scores 1.1, 0.5, 0.45
        assert_eq!(out.selected, vec![0, 1, 2]);
        assert!(out.mask.iter().all(|&m| m));
    }

    #[test]
    fn pads_small_graphs() {
        let h = Tensor::constant(Array2::from_elem((3, 4), 0.5));
        let w = Tensor::constant(Array2::ones((4, 1)));
        let out = topk_pool(&h, &w, PoolParams::default()).unwrap();
        assert_eq!(out.tokens.shape(), (100, 4));
        assert_eq!(out.mask.iter().filter(|&&m| m).count(), 3);
        assert!(out.tokens.value().slice(ndarray::s![3.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_shape_checked() {
        let h = Tensor::constant(Array2::zeros((3, 4)));
        assert!(topk_pool(&h, &Tensor::constant(Array2::zeros((3, 1))), PoolParams::default()).is_err());
    }
}
