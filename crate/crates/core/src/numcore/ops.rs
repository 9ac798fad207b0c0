//! Differentiable operations on [`Tensor`]s.

use ndarray::{concatenate, s, Array2, Axis};

use super::tensor::{Op, Tensor};
use crate::error::{Error, Result};

fn any_grad(ts: &[&Tensor]) -> bool {
    ts.iter().any(|t| t.requires_grad())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.rows() {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let v = a.value().dot(b.value());
    Ok(Tensor::from_op(v, any_grad(&[a, b]), Op::MatMul(a.clone(), b.clone())))
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let v = a.value() + b.value();
    Ok(Tensor::from_op(v, any_grad(&[a, b]), Op::Add(a.clone(), b.clone())))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let v = a.value() - b.value();
    Ok(Tensor::from_op(v, any_grad(&[a, b]), Op::Sub(a.clone(), b.clone())))
}

/// `a + 1·row`: adds a 1xC row to every row of `a`.
pub fn add_row(a: &Tensor, row: &Tensor) -> Result<Tensor> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(Error::shape("add_row", a.shape(), row.shape()));
    }
    let v = a.value() + row.value();
    Ok(Tensor::from_op(
        v,
        any_grad(&[a, row]),
        Op::AddRow(a.clone(), row.clone()),
    ))
}

/// Elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let v = a.value() * b.value();
    Ok(Tensor::from_op(v, any_grad(&[a, b]), Op::Mul(a.clone(), b.clone())))
}

/// Scales row i of `a` by `col[i]` where `col` is Nx1.
pub fn mul_col(a: &Tensor, col: &Tensor) -> Result<Tensor> {
    if col.cols() != 1 || col.rows() != a.rows() {
        return Err(Error::shape("mul_col", a.shape(), col.shape()));
    }
    let v = a.value() * col.value();
    Ok(Tensor::from_op(
        v,
        any_grad(&[a, col]),
        Op::MulCol(a.clone(), col.clone()),
    ))
}

pub fn scale(a: &Tensor, k: f64) -> Tensor {
    Tensor::from_op(a.value() * k, a.requires_grad(), Op::Scale(a.clone(), k))
}

/// Elementwise `max(0, x)`; the subgradient at 0 is 0.
pub fn relu(x: &Tensor) -> Tensor {
    let v = x.value().mapv(|e| if e > 0.0 { e } else { 0.0 });
    Tensor::from_op(v, x.requires_grad(), Op::Relu(x.clone()))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let v = x.value().mapv(|e| {
        if e >= 0.0 {
            1.0 / (1.0 + (-e).exp())
        } else {
            let z = e.exp();
            z / (1.0 + z)
        }
    });
    Tensor::from_op(v, x.requires_grad(), Op::Sigmoid(x.clone()))
}

fn softmax_rows_array(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

/// Per-row softmax with max subtraction. Entries of `-inf` get probability 0
/// as long as the row has at least one finite entry.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let v = softmax_rows_array(x.value());
    Tensor::from_op(v, x.requires_grad(), Op::SoftmaxRows(x.clone()))
}

/// Row-wise layer normalization with population variance, then
/// `gamma ⊙ x̂ + beta`. `gamma` and `beta` are 1xC.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let c = x.cols();
    if gamma.shape() != (1, c) {
        return Err(Error::shape("layer_norm gamma", x.shape(), gamma.shape()));
    }
    if beta.shape() != (1, c) {
        return Err(Error::shape("layer_norm beta", x.shape(), beta.shape()));
    }
    let mut normalized = x.value().clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for mut row in normalized.rows_mut() {
        let mean = row.sum() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let is = 1.0 / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * is);
        inv_std.push(is);
    }
    let out = &normalized * gamma.value() + beta.value();
    Ok(Tensor::from_op(
        out,
        any_grad(&[x, gamma, beta]),
        Op::LayerNorm {
            x: x.clone(),
            gamma: gamma.clone(),
            beta: beta.clone(),
            normalized,
            inv_std,
        },
    ))
}

/// `-log softmax(logits)[label]` for a 1xC logits row, evaluated as
/// `logsumexp(logits) - logits[label]`.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<Tensor> {
    if logits.rows() != 1 {
        return Err(Error::shape("cross_entropy", logits.shape(), (1, logits.cols())));
    }
    let c = logits.cols();
    if label >= c {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let row = logits.value().row(0);
    let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let loss = (lse - row[label]).max(0.0);
    let probs = logits.value().mapv(|v| (v - lse).exp());
    Ok(Tensor::from_op(
        Array2::from_elem((1, 1), loss),
        logits.requires_grad(),
        Op::CrossEntropy {
            logits: logits.clone(),
            label,
            probs,
        },
    ))
}

pub fn transpose(a: &Tensor) -> Tensor {
    Tensor::from_op(a.value().t().to_owned(), a.requires_grad(), Op::Transpose(a.clone()))
}

/// Columns `start..start+len`.
pub fn slice_cols(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if start + len > a.cols() {
        return Err(Error::shape("slice_cols", a.shape(), (start, len)));
    }
    let v = a.value().slice(s![.., start..start + len]).to_owned();
    Ok(Tensor::from_op(v, a.requires_grad(), Op::SliceCols(a.clone(), start)))
}

pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat_cols of nothing".into()))?;
    for p in parts {
        if p.rows() != first.rows() {
            return Err(Error::shape("concat_cols", first.shape(), p.shape()));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.value().view()).collect();
    let v = concatenate(Axis(1), &views).expect("row counts checked");
    let rg = parts.iter().any(|p| p.requires_grad());
    Ok(Tensor::from_op(v, rg, Op::ConcatCols(parts.to_vec())))
}

pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat_rows of nothing".into()))?;
    for p in parts {
        if p.cols() != first.cols() {
            return Err(Error::shape("concat_rows", first.shape(), p.shape()));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.value().view()).collect();
    let v = concatenate(Axis(0), &views).expect("column counts checked");
    let rg = parts.iter().any(|p| p.requires_grad());
    Ok(Tensor::from_op(v, rg, Op::ConcatRows(parts.to_vec())))
}

/// Gathers rows in the given order. Indices may repeat.
pub fn select_rows(a: &Tensor, idx: &[usize]) -> Result<Tensor> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows()) {
        return Err(Error::shape("select_rows", a.shape(), (bad, 0)));
    }
    let v = a.value().select(Axis(0), idx);
    Ok(Tensor::from_op(
        v,
        a.requires_grad(),
        Op::SelectRows(a.clone(), idx.to_vec()),
    ))
}

/// Sum of squared entries, as a 1x1 tensor.
pub fn sum_squares(a: &Tensor) -> Tensor {
    let v = a.value().iter().map(|x| x * x).sum::<f64>();
    Tensor::from_op(
        Array2::from_elem((1, 1), v),
        a.requires_grad(),
        Op::SumSquares(a.clone()),
    )
}

pub fn sum(a: &Tensor) -> Tensor {
    Tensor::from_op(
        Array2::from_elem((1, 1), a.value().sum()),
        a.requires_grad(),
        Op::Sum(a.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn t(a: Array2<f64>) -> Tensor {
        Tensor::param(a)
    }

    #[test]
    fn matmul_identity_and_reference() {
        let m = array![[1.5, -2.0, 0.25], [3.0, 4.0, -1.0]];
        let i2 = Array2::eye(2);
        let out = matmul(&t(i2), &t(m.clone())).unwrap();
        assert_eq!(out.value(), &m);

        let out = matmul(&t(array![[1.0, 2.0], [3.0, 4.0]]), &t(array![[5.0], [6.0]])).unwrap();
        assert_eq!(out.value(), &array![[17.0], [39.0]]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = t(Array2::zeros((2, 3)));
        let err = matmul(&a, &a).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
        assert!(matches!(
            err,
            Error::Shape {
                lhs: (2, 3),
                rhs: (2, 3),
                ..
            }
        ));
    }

    #[test]
    fn relu_values_and_subgradient() {
        let x = t(array![[-1.0, 0.0, 2.0]]);
        let y = relu(&x);
        assert_eq!(y.value(), &array![[0.0, 0.0, 2.0]]);
        sum(&y).backward().unwrap();
        assert_eq!(*x.grad().unwrap(), array![[0.0, 0.0, 1.0]]);

        let pos = array![[0.5, 3.0], [1.0, 7.0]];
        assert_eq!(relu(&t(pos.clone())).value(), &pos);
    }

    #[test]
    fn softmax_known_rows() {
        let y = softmax_rows(&t(array![[0.0, 0.0, 0.0]]));
        for v in y.value() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let y = softmax_rows(&t(array![[1f64.ln(), 2f64.ln(), 3f64.ln()]]));
        let expected = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (v, e) in y.value().iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
        let x = array![[0.3, -1.2, 2.5, 0.0]];
        let a = softmax_rows(&t(x.clone()));
        let b = softmax_rows(&t(x.mapv(|v| v + 17.5)));
        for (p, q) in a.value().iter().zip(b.value()) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_ignores_neg_infinity() {
        let y = softmax_rows(&t(array![[0.0, f64::NEG_INFINITY, 0.0]]));
        assert_eq!(y.value(), &array![[0.5, 0.0, 0.5]]);
    }

    #[test]
    fn layer_norm_cases() {
        let ones = t(array![[1.0, 1.0]]);
        let zeros = t(array![[0.0, 0.0]]);
        let y = layer_norm(&t(array![[4.0, 4.0]]), &ones, &zeros, 1e-5).unwrap();
        assert!(y.value().iter().all(|v| v.abs() <= 1e-12));

        let y = layer_norm(&t(array![[1.0, 3.0]]), &ones, &zeros, 0.0).unwrap();
        assert_eq!(y.value(), &array![[-1.0, 1.0]]);

        let b = t(array![[0.7, 0.7, 0.7]]);
        let g0 = t(array![[0.0, 0.0, 0.0]]);
        let y = layer_norm(&t(array![[1.0, -2.0, 9.0]]), &g0, &b, 1e-5).unwrap();
        assert!(y.value().iter().all(|&v| v == 0.7));

        let err = layer_norm(&t(array![[1.0, 2.0]]), &t(array![[1.0]]), &zeros, 1e-5).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn cross_entropy_cases() {
        let l = cross_entropy(&t(Array2::zeros((1, 5))), 2).unwrap();
        assert!((l.item() - 5f64.ln()).abs() < 1e-15);

        let l = cross_entropy(&t(array![[2.0, 0.0]]), 0).unwrap();
        assert!((l.item() - (1.0 + (-2f64).exp()).ln()).abs() < 1e-15);

        let l = cross_entropy(&t(array![[800.0, 0.0, 0.0]]), 0).unwrap();
        assert!(l.item() < 1e-300);

        let err = cross_entropy(&t(array![[0.0, 1.0]]), 2).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, classes: 2 }));
    }

    #[test]
    fn backward_constant_and_linear() {
        let x = t(array![[1.3]]);
        let c = Tensor::constant(array![[4.0]]);
        // f(x) = 0*x + c
        let f = add(&scale(&x, 0.0), &c).unwrap();
        f.backward().unwrap();
        assert_eq!(x.grad().unwrap()[[0, 0]], 0.0);

        let x = t(array![[1.3]]);
        let f = scale(&x, -2.75);
        f.backward().unwrap();
        assert_eq!(x.grad().unwrap()[[0, 0]], -2.75);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = t(array![[1.0, 2.0]]);
        assert!(matches!(x.backward(), Err(Error::NonScalar((1, 2)))));
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let x = t(array![[2.0]]);
        let f = scale(&x, 3.0);
        f.backward().unwrap();
        f.backward().unwrap();
        assert_eq!(x.grad().unwrap()[[0, 0]], 6.0);
        x.zero_grad();
        assert!(x.grad().is_none());
        f.backward().unwrap();
        assert_eq!(x.grad().unwrap()[[0, 0]], 3.0);
    }

    #[test]
    fn unused_param_gets_zero_grad() {
        let x = t(array![[2.0, 1.0]]);
        let y = t(array![[5.0, 5.0]]);
        // y enters the graph but is multiplied by zero
        let f = sum(&add(&x, &scale(&y, 0.0)).unwrap());
        f.backward().unwrap();
        assert_eq!(*y.grad().unwrap(), array![[0.0, 0.0]]);
    }
}
