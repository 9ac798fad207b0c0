//! Confusion matrices, accuracy and quadratic-weighted kappa.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Identifies one experiment cell a report belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub fraction: f64,
    pub kinds: String,
    pub denoiser: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub kappa_quadratic: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Array2<u64>,
    /// Mean train loss per epoch; empty for pure evaluations.
    pub loss_history: Vec<f64>,
    pub cell: Option<Cell>,
}

impl MetricsReport {
    pub fn from_predictions(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Self> {
        let confusion = confusion_matrix(truth, pred, n_classes)?;
        Ok(Self {
            accuracy: accuracy(&confusion)?,
            kappa_quadratic: quadratic_kappa(&confusion)?,
            confusion,
            loss_history: Vec::new(),
            cell: None,
        })
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Array2<u64>> {
    if truth.len() != pred.len() {
        return Err(Error::shape("confusion_matrix", (truth.len(), 1), (pred.len(), 1)));
    }
    let mut m = Array2::zeros((n_classes, n_classes));
    for (&t, &p) in truth.iter().zip(pred) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: n_classes,
                });
            }
        }
        m[[t, p]] += 1;
    }
    Ok(m)
}

/// `trace / total`.
pub fn accuracy(confusion: &Array2<u64>) -> Result<f64> {
    let total: u64 = confusion.sum();
    if total == 0 {
        return Err(Error::DegenerateConfusion("no samples"));
    }
    Ok(confusion.diag().sum() as f64 / total as f64)
}

fn is_diagonal(m: &Array2<u64>) -> bool {
    m.indexed_iter().all(|((i, j), &v)| i == j || v == 0)
}

/// Cohen's kappa with weights `(i-j)²/(C-1)²`.
///
/// When the expected disagreement is zero the value is 1.0 for a diagonal
/// matrix and an error otherwise.
pub fn quadratic_kappa(confusion: &Array2<u64>) -> Result<f64> {
    let (c, c2) = confusion.dim();
    if c != c2 {
        return Err(Error::shape("quadratic_kappa", (c, c2), (c2, c)));
    }
    let total = confusion.sum() as f64;
    if total == 0.0 {
        return Err(Error::DegenerateConfusion("all-zero matrix"));
    }
    let rows: Vec<f64> = confusion.rows().into_iter().map(|r| r.sum() as f64).collect();
    let cols: Vec<f64> = confusion.columns().into_iter().map(|r| r.sum() as f64).collect();
    let scale = ((c.max(2) - 1) * (c.max(2) - 1)) as f64;
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..c {
        for j in 0..c {
            let w = ((i as f64) - (j as f64)).powi(2) / scale;
            observed += w * confusion[[i, j]] as f64;
            expected += w * rows[i] * cols[j] / total;
        }
    }
    if expected == 0.0 {
        return if is_diagonal(confusion) {
            Ok(1.0)
        } else {
            Err(Error::DegenerateConfusion("zero expected disagreement"))
        };
    }
    Ok(1.0 - observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_and_degenerate() {
        assert_eq!(quadratic_kappa(&array![[3, 0, 0], [0, 1, 0], [0, 0, 7]]).unwrap(), 1.0);
        assert_eq!(quadratic_kappa(&array![[1, 0], [0, 0]]).unwrap(), 1.0);
        assert_eq!(quadratic_kappa(&array![[4]]).unwrap(), 1.0);
        assert!(quadratic_kappa(&array![[0, 0], [0, 0]]).is_err());
    }

    #[test]
    fn two_by_two_hand_value() {
        // w = [[0,1],[1,0]]; observed 2, expected 3*3/6*2 = 3
        let k = quadratic_kappa(&array![[2, 1], [1, 2]]).unwrap();
        assert!((k - (1.0 - 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_is_not_better_than_chance() {
        let truth: Vec<usize> = (0..5).flat_map(|c| [c; 4]).collect();
        let pred = vec![2; truth.len()];
        let r = MetricsReport::from_predictions(&truth, &pred, 5).unwrap();
        assert!(r.kappa_quadratic <= 0.0);
        assert_eq!(r.accuracy, 0.2);
        for (c, row) in r.confusion.rows().into_iter().enumerate() {
            assert_eq!(row.sum(), truth.iter().filter(|&&t| t == c).count() as u64);
        }
    }

    #[test]
    fn perfect_predictor() {
        let truth = [0, 1, 2, 3, 4, 4];
        let r = MetricsReport::from_predictions(&truth, &truth, 5).unwrap();
        assert_eq!((r.accuracy, r.kappa_quadratic), (1.0, 1.0));
    }

    #[test]
    fn labels_checked() {
        assert!(confusion_matrix(&[0, 5], &[0, 1], 5).is_err());
        assert!(confusion_matrix(&[0], &[0, 1], 5).is_err());
    }
}
