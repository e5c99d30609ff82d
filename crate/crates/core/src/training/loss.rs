//! Masked regression loss over the seen-class rows.

use super::{SeenMask, TrainingError};
use crate::sparse::DenseMatrix;

/// Mean squared error over the masked rows,
/// `L = 1/(2M) * sum_i sum_j (W_ij - W~_ij)^2`,
/// together with its gradient with respect to the full prediction matrix.
///
/// Both the selected prediction rows and the targets are expected to be
/// L2-row-normalized already. The gradient is `(W~ - W) / M` on masked rows
/// and zero elsewhere.
pub fn masked_mse_loss(
    pred: &DenseMatrix,
    target: &DenseMatrix,
    mask: &SeenMask,
) -> Result<(f64, DenseMatrix), TrainingError> {
    if mask.len() != target.n_rows() {
        return Err(TrainingError::MaskTargetMismatch {
            mask_rows: mask.len(),
            target_rows: target.n_rows(),
        });
    }
    if pred.n_cols() != target.n_cols() {
        return Err(TrainingError::WidthMismatch {
            pred_cols: pred.n_cols(),
            target_cols: target.n_cols(),
        });
    }
    let m = mask.len() as f64;
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(pred.n_rows(), pred.n_cols());
    for (row_in_target, &node) in mask.indices().iter().enumerate() {
        let p = pred.row(node);
        let t = target.row(row_in_target);
        let g = grad.row_mut(node);
        for ((gv, &pv), &tv) in g.iter_mut().zip(p).zip(t) {
            let diff = pv - tv;
            loss += diff * diff;
            *gv = diff / m;
        }
    }
    Ok((loss / (2.0 * m), grad))
}
