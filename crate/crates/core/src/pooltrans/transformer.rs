//! Pre-norm transformer over `[CLS; H_pool]` with an MLP head on the CLS row.
//!
//! Each layer computes
//!
//! ```text
//! t' = MHA(LN(t)) + t
//! t  = MLP(LN(t')) + t'
//! ```
//!
//! with `MHA = Concat[A_1..A_h]·W_O` and
//! `A_i = softmax(Q_i K_iᵀ/√d_k + mask)·V_i`, `d_k = d/h`. Queries, keys and
//! values have no bias. There are no positional encodings.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{
    add, add_row, concat_cols, concat_rows, layer_norm, matmul, relu, scale, select_rows, slice_cols, softmax_rows,
    transpose, BoundParams, ParamSet, Tensor,
};
use crate::util::glorot_uniform;

pub const LN_EPS: f64 = 1e-5;
pub const CLS: &str = "cls";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformerParams {
    pub n_layers: usize,
    pub n_heads: usize,
    pub model_dim: usize,
    pub mlp_ratio: usize,
    pub n_classes: usize,
}

impl Default for TransformerParams {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_heads: 4,
            model_dim: 128,
            mlp_ratio: 4,
            n_classes: 5,
        }
    }
}

/// Borrowed weights of one transformer layer.
pub struct LayerWeights<'a> {
    pub wq: &'a Tensor,
    pub wk: &'a Tensor,
    pub wv: &'a Tensor,
    pub wo: &'a Tensor,
    pub ln1_g: &'a Tensor,
    pub ln1_b: &'a Tensor,
    pub ln2_g: &'a Tensor,
    pub ln2_b: &'a Tensor,
    pub mlp_w1: &'a Tensor,
    pub mlp_b1: &'a Tensor,
    pub mlp_w2: &'a Tensor,
    pub mlp_b2: &'a Tensor,
}

const LAYER_TENSORS: [&str; 12] = [
    "wq", "wk", "wv", "wo", "ln1.g", "ln1.b", "ln2.g", "ln2.b", "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2",
];

impl TransformerParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || !self.model_dim.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidArgument(format!(
                "model dim {} not divisible by {} heads",
                self.model_dim, self.n_heads
            )));
        }
        if self.n_classes == 0 || self.mlp_ratio == 0 {
            return Err(Error::InvalidArgument("empty head or MLP".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }

    pub fn tensor_name(layer: usize, tensor: &str) -> String {
        format!("tf.{layer}.{tensor}")
    }

    pub fn init(&self, rng: &mut impl Rng, params: &mut ParamSet) {
        let d = self.model_dim;
        let hidden = d * self.mlp_ratio;
        for l in 0..self.n_layers {
            let n = |t: &str| Self::tensor_name(l, t);
            params.insert(n("wq"), glorot_uniform(d, d, rng));
            params.insert(n("wk"), glorot_uniform(d, d, rng));
            params.insert(n("wv"), glorot_uniform(d, d, rng));
            params.insert(n("wo"), glorot_uniform(d, d, rng));
            params.insert(n("ln1.g"), Array2::ones((1, d)));
            params.insert(n("ln1.b"), Array2::zeros((1, d)));
            params.insert(n("ln2.g"), Array2::ones((1, d)));
            params.insert(n("ln2.b"), Array2::zeros((1, d)));
            params.insert(n("mlp.w1"), glorot_uniform(d, hidden, rng));
            params.insert(n("mlp.b1"), Array2::zeros((1, hidden)));
            params.insert(n("mlp.w2"), glorot_uniform(hidden, d, rng));
            params.insert(n("mlp.b2"), Array2::zeros((1, d)));
        }
        params.insert(CLS, glorot_uniform(1, d, rng));
        params.insert("head.0.w", glorot_uniform(d, d, rng));
        params.insert("head.0.b", Array2::zeros((1, d)));
        params.insert("head.1.w", glorot_uniform(d, self.n_classes, rng));
        params.insert("head.1.b", Array2::zeros((1, self.n_classes)));
    }

    pub fn layer<'a>(&self, bound: &'a BoundParams, l: usize) -> Result<LayerWeights<'a>> {
        let mut ts = LAYER_TENSORS
            .iter()
            .map(|t| bound.try_get(&Self::tensor_name(l, t)))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || ts.next().expect("fixed count");
        Ok(LayerWeights {
            wq: next(),
            wk: next(),
            wv: next(),
            wo: next(),
            ln1_g: next(),
            ln1_b: next(),
            ln2_g: next(),
            ln2_b: next(),
            mlp_w1: next(),
            mlp_b1: next(),
            mlp_w2: next(),
            mlp_b2: next(),
        })
    }
}

/// Additive attention bias: `-inf` in every masked-out key column.
fn mask_bias(tokens: usize, mask: &[bool]) -> Option<Tensor> {
    if mask.iter().all(|&m| m) {
        return None;
    }
    let mut b = Array2::zeros((tokens, tokens));
    for (j, &keep) in mask.iter().enumerate() {
        if !keep {
            b.column_mut(j).fill(f64::NEG_INFINITY);
        }
    }
    Some(Tensor::constant(b))
}

/// `softmax(QKᵀ/√d_k + bias)` for one head.
pub fn attention_probs(q: &Tensor, k: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if mask.len() != k.rows() {
        return Err(Error::shape("attention mask", (mask.len(), 1), k.shape()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::InvalidArgument("attention with every key masked".into()));
    }
    let scores = scale(&matmul(q, &transpose(k))?, 1.0 / (q.cols() as f64).sqrt());
    let scores = match mask_bias(q.rows(), mask) {
        Some(b) => add(&scores, &b)?,
        None => scores,
    };
    Ok(softmax_rows(&scores))
}

/// Multi-head self-attention. `W_Q`, `W_K`, `W_V` are `d x d`; head `i` uses
/// columns `i·d_k..(i+1)·d_k` of each.
pub fn mha(t: &Tensor, w: &LayerWeights<'_>, n_heads: usize, mask: &[bool]) -> Result<Tensor> {
    let d = t.cols();
    if w.wq.shape() != (d, d) {
        return Err(Error::shape("mha", t.shape(), w.wq.shape()));
    }
    if mask.len() != t.rows() {
        return Err(Error::shape("mha mask", (mask.len(), 1), t.shape()));
    }
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(Error::InvalidArgument(format!("{d} not divisible by {n_heads} heads")));
    }
    let dk = d / n_heads;
    let q = matmul(t, w.wq)?;
    let k = matmul(t, w.wk)?;
    let v = matmul(t, w.wv)?;
    let heads = (0..n_heads)
        .map(|i| {
            let qi = slice_cols(&q, i * dk, dk)?;
            let ki = slice_cols(&k, i * dk, dk)?;
            let vi = slice_cols(&v, i * dk, dk)?;
            matmul(&attention_probs(&qi, &ki, mask)?, &vi)
        })
        .collect::<Result<Vec<_>>>()?;
    let cat = if heads.len() == 1 {
        heads[0].clone()
    } else {
        concat_cols(&heads)?
    };
    matmul(&cat, w.wo)
}

fn mlp(x: &Tensor, w: &LayerWeights<'_>) -> Result<Tensor> {
    let h = relu(&add_row(&matmul(x, w.mlp_w1)?, w.mlp_b1)?);
    add_row(&matmul(&h, w.mlp_w2)?, w.mlp_b2)
}

pub fn transformer_layer(t: &Tensor, w: &LayerWeights<'_>, n_heads: usize, mask: &[bool]) -> Result<Tensor> {
    let t1 = add(&mha(&layer_norm(t, w.ln1_g, w.ln1_b, LN_EPS)?, w, n_heads, mask)?, t)?;
    add(&mlp(&layer_norm(&t1, w.ln2_g, w.ln2_b, LN_EPS)?, w)?, &t1)
}

/// Logits (1xC) for pooled node tokens.
///
/// Masked rows are dropped before the layer stack. A masked key gets zero
/// attention weight and every other step is row-wise, so this gives the same
/// CLS output as running the stack on the padded sequence with the mask.
pub fn classify(h_pool: &Tensor, mask: &[bool], params: &TransformerParams, bound: &BoundParams) -> Result<Tensor> {
    params.validate()?;
    if h_pool.cols() != params.model_dim {
        return Err(Error::shape(
            "classify",
            h_pool.shape(),
            (h_pool.rows(), params.model_dim),
        ));
    }
    if mask.len() != h_pool.rows() {
        return Err(Error::shape("classify mask", (mask.len(), 1), h_pool.shape()));
    }
    let cls = bound.try_get(CLS)?;
    let mut tokens = concat_rows(&[cls.clone(), h_pool.clone()])?;
    if mask.iter().any(|&m| !m) {
        let keep: Vec<usize> = std::iter::once(0)
            .chain(mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i + 1))
            .collect();
        tokens = select_rows(&tokens, &keep)?;
    }
    let full = vec![true; tokens.rows()];
    for l in 0..params.n_layers {
        tokens = transformer_layer(&tokens, &params.layer(bound, l)?, params.n_heads, &full)?;
    }
    let cls_out = select_rows(&tokens, &[0])?;
    let h = relu(&add_row(
        &matmul(&cls_out, bound.try_get("head.0.w")?)?,
        bound.try_get("head.0.b")?,
    )?);
    add_row(&matmul(&h, bound.try_get("head.1.w")?)?, bound.try_get("head.1.b")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng;
    use ndarray::{array, Array2};
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, r: &mut impl Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(r))
    }

    fn small(d: usize, heads: usize, layers: usize, seed: u64) -> (TransformerParams, ParamSet) {
        let tp = TransformerParams {
            n_layers: layers,
            n_heads: heads,
            model_dim: d,
            mlp_ratio: 2,
            n_classes: 3,
        };
        let mut ps = ParamSet::new();
        tp.init(&mut rng(seed), &mut ps);
        (tp, ps)
    }

    fn scalar_mha(
        t: &Array2<f64>,
        wq: &Array2<f64>,
        wk: &Array2<f64>,
        wv: &Array2<f64>,
        wo: &Array2<f64>,
        h: usize,
        mask: &[bool],
    ) -> Array2<f64> {
        let (n, d) = t.dim();
        let dk = d / h;
        let proj = |w: &Array2<f64>| {
            let mut o = Array2::<f64>::zeros((n, d));
            for i in 0..n {
                for j in 0..d {
                    o[[i, j]] = (0..d).map(|k| t[[i, k]] * w[[k, j]]).sum();
                }
            }
            o
        };
        let (q, k, v) = (proj(wq), proj(wk), proj(wv));
        let mut cat = Array2::<f64>::zeros((n, d));
        for head in 0..h {
            let c0 = head * dk;
            for i in 0..n {
                let mut s = vec![f64::NEG_INFINITY; n];
                for j in (0..n).filter(|&j| mask[j]) {
                    s[j] = (0..dk).map(|c| q[[i, c0 + c]] * k[[j, c0 + c]]).sum::<f64>() / (dk as f64).sqrt();
                }
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..dk {
                    cat[[i, c0 + c]] = (0..n).map(|j| e[j] / z * v[[j, c0 + c]]).sum();
                }
            }
        }
        let mut out = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                out[[i, j]] = (0..d).map(|k| cat[[i, k]] * wo[[k, j]]).sum();
            }
        }
        out
    }

    #[test]
    fn mha_matches_loop_oracle() {
        for heads in [1, 2, 4] {
            let (tp, ps) = small(8, heads, 1, 3 + heads as u64);
            let b = ps.bind();
            let w = tp.layer(&b, 0).unwrap();
            let t = randn(4, 8, &mut rng(99));
            let mask = [true, true, false, true];
            let got = mha(&Tensor::constant(t.clone()), &w, heads, &mask).unwrap();
            let want = scalar_mha(&t, w.wq.value(), w.wk.value(), w.wv.value(), w.wo.value(), heads, &mask);
            for (a, e) in got.value().iter().zip(want.iter()) {
                assert!((a - e).abs() < 1e-10, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn zero_query_key_gives_masked_mean() {
        let t = array![[1.0, 2.0], [3.0, -1.0], [100.0, 100.0]];
        let z = Tensor::constant(Array2::zeros((2, 2)));
        let eye = Tensor::constant(Array2::eye(2));
        let ones = Tensor::constant(Array2::ones((1, 2)));
        let w = LayerWeights {
            wq: &z,
            wk: &z,
            wv: &eye,
            wo: &eye,
            ln1_g: &ones,
            ln1_b: &z,
            ln2_g: &ones,
            ln2_b: &z,
            mlp_w1: &z,
            mlp_b1: &z,
            mlp_w2: &z,
            mlp_b2: &z,
        };
        let out = mha(&Tensor::constant(t), &w, 1, &[true, true, false]).unwrap();
        for row in out.value().rows() {
            assert!((row[0] - 2.0).abs() < 1e-12 && (row[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut r = rng(5);
        let q = Tensor::constant(randn(5, 3, &mut r));
        let k = Tensor::constant(randn(5, 3, &mut r));
        let mask = [true, false, true, true, false];
        let p = attention_probs(&q, &k, &mask).unwrap();
        for row in p.value().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert_eq!(row[1], 0.0);
            assert_eq!(row[4], 0.0);
        }
        assert!(attention_probs(&q, &k, &[false; 5]).is_err());
    }

    #[test]
    fn zero_blocks_are_identity() {
        let (tp, mut ps) = small(4, 2, 1, 1);
        for name in ["wo", "mlp.w2", "mlp.b2"] {
            let v = ps.get(&TransformerParams::tensor_name(0, name)).unwrap().clone();
            ps.insert(TransformerParams::tensor_name(0, name), Array2::zeros(v.dim()));
        }
        let b = ps.bind();
        let t = randn(3, 4, &mut rng(2));
        let out = transformer_layer(&Tensor::constant(t.clone()), &tp.layer(&b, 0).unwrap(), 2, &[true; 3]).unwrap();
        assert_eq!(out.value(), &t);
    }

    #[test]
    fn masked_token_has_no_influence() {
        let (tp, ps) = small(8, 2, 1, 4);
        let b = ps.bind();
        let w = tp.layer(&b, 0).unwrap();
        let mut t = randn(4, 8, &mut rng(8));
        let mask = [true, true, true, false];
        let a = transformer_layer(&Tensor::constant(t.clone()), &w, 2, &mask).unwrap();
        t.row_mut(3).fill(42.0);
        let c = transformer_layer(&Tensor::constant(t), &w, 2, &mask).unwrap();
        for i in 0..3 {
            assert_eq!(a.value().row(i), c.value().row(i));
        }
    }

    #[test]
    fn classify_shape_permutation_and_padding() {
        let tp = TransformerParams::default();
        let mut ps = ParamSet::new();
        tp.init(&mut rng(7), &mut ps);
        let b = ps.bind();
        let h = randn(6, 128, &mut rng(10));
        let logits = classify(&Tensor::constant(h.clone()), &[true; 6], &tp, &b).unwrap();
        assert_eq!(logits.shape(), (1, 5));

        let perm = [3, 0, 5, 1, 4, 2];
        let hp = h.select(ndarray::Axis(0), &perm);
        let lp = classify(&Tensor::constant(hp), &[true; 6], &tp, &b).unwrap();
        for (x, y) in logits.value().iter().zip(lp.value().iter()) {
            assert!((x - y).abs() < 1e-9);
        }

        let mut padded = Array2::zeros((10, 128));
        padded.slice_mut(ndarray::s![..6, ..]).assign(&h);
        let mut mask = vec![true; 6];
        mask.extend([false; 4]);
        let lpad = classify(&Tensor::constant(padded), &mask, &tp, &b).unwrap();
        for (x, y) in logits.value().iter().zip(lpad.value().iter()) {
            assert!((x - y).abs() < 1e-9);
        }

        let again = classify(&Tensor::constant(h), &[true; 6], &tp, &b).unwrap();
        assert_eq!(again.value(), logits.value());
    }

    #[test]
    fn compaction_matches_masked_stack() {
        let (tp, ps) = small(8, 2, 2, 12);
        let b = ps.bind();
        let mut r = rng(13);
        let real = randn(3, 8, &mut r);
        let cls = b.get(CLS).value().clone();
        let mut padded = Array2::zeros((6, 8));
        padded.row_mut(0).assign(&cls.row(0));
        padded.slice_mut(ndarray::s![1..4, ..]).assign(&real);
        let mask = [true, true, true, true, false, false];
        let mut t = Tensor::constant(padded);
        for l in 0..tp.n_layers {
            t = transformer_layer(&t, &tp.layer(&b, l).unwrap(), tp.n_heads, &mask).unwrap();
        }
        let mut compact = Tensor::constant(ndarray::concatenate![ndarray::Axis(0), cls, real]);
        for l in 0..tp.n_layers {
            compact = transformer_layer(&compact, &tp.layer(&b, l).unwrap(), tp.n_heads, &[true; 4]).unwrap();
        }
        for (x, y) in t.value().row(0).iter().zip(compact.value().row(0).iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn head_count_must_divide() {
        let tp = TransformerParams {
            n_heads: 3,
            ..Default::default()
        };
        assert!(tp.validate().is_err());
    }
}
