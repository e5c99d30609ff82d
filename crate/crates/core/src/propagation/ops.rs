//! Elementwise building blocks: distance softmax, leaky ReLU, inverted
//! dropout, and row-wise L2 normalization.

use rand::Rng;

use super::PropagationError;
use crate::sparse::DenseMatrix;

/// Whether a forward pass applies dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Softmax over the K+1 hop weights, computed with max-subtraction.
///
/// Output entries are positive and sum to 1.
pub fn distance_softmax(w: &[f64]) -> Result<Vec<f64>, PropagationError> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(PropagationError::NonFiniteWeights);
    }
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = w.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Pulls a gradient on the softmax outputs back to the logits:
/// `dL/dw_i = alpha_i (g_i - sum_j alpha_j g_j)`.
pub(crate) fn softmax_logit_grad(alpha: &[f64], grad_alpha: &[f64]) -> Vec<f64> {
    let weighted: f64 = alpha.iter().zip(grad_alpha).map(|(&a, &g)| a * g).sum();
    alpha
        .iter()
        .zip(grad_alpha)
        .map(|(&a, &g)| a * (g - weighted))
        .collect()
}

/// Elementwise `max(x, slope * x)`.
pub fn leaky_relu(x: &DenseMatrix, negative_slope: f64) -> DenseMatrix {
    x.map(|v| v.max(negative_slope * v))
}

/// Gradient through the activation, evaluated at the pre-activation values.
pub(crate) fn leaky_relu_backward(
    pre: &DenseMatrix,
    grad: &DenseMatrix,
    negative_slope: f64,
) -> DenseMatrix {
    assert_eq!(pre.data().len(), grad.data().len());
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&z, &g)| if z >= 0.0 { g } else { negative_slope * g })
        .collect();
    DenseMatrix::from_vec(pre.n_rows(), pre.n_cols(), data)
}

/// Keep/drop pattern recorded by a dropout application.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
    active: bool,
}

impl DropoutMask {
    /// An all-keep mask (inference or rate 0).
    fn identity(len: usize) -> Self {
        Self {
            keep: vec![true; len],
            scale: 1.0,
            active: false,
        }
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len().max(1) as f64
    }

    pub(crate) fn len(&self) -> usize {
        self.keep.len()
    }
}

/// Inverted dropout: kept entries are scaled by `1/(1-rate)` so the expected
/// value of each entry is unchanged. Identity when `rate == 0` or in
/// inference mode.
pub fn dropout_apply(
    x: &DenseMatrix,
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(DenseMatrix, DropoutMask), PropagationError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(PropagationError::InvalidDropoutRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::identity(x.data().len())));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut keep = Vec::with_capacity(x.data().len());
    let data = x
        .data()
        .iter()
        .map(|&v| {
            let kept = rng.random::<f64>() >= rate;
            keep.push(kept);
            if kept {
                v * scale
            } else {
                0.0
            }
        })
        .collect();
    Ok((
        DenseMatrix::from_vec(x.n_rows(), x.n_cols(), data),
        DropoutMask {
            keep,
            scale,
            active: true,
        },
    ))
}

/// Routes the gradient through the recorded mask with the same scaling.
pub(crate) fn dropout_backward(grad: &DenseMatrix, mask: &DropoutMask) -> DenseMatrix {
    if !mask.active {
        return grad.clone();
    }
    assert_eq!(grad.data().len(), mask.len());
    let data = grad
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&g, &k)| if k { g * mask.scale } else { 0.0 })
        .collect();
    DenseMatrix::from_vec(grad.n_rows(), grad.n_cols(), data)
}

/// Euclidean norm of each row.
pub(crate) fn row_norms(x: &DenseMatrix) -> Vec<f64> {
    (0..x.n_rows())
        .map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

const NORM_GUARD: f64 = 1e-12;

/// Divides each row by its Euclidean norm; rows with norm below 1e-12 are
/// left unchanged.
pub fn l2_normalize_rows(x: &DenseMatrix) -> DenseMatrix {
    let norms = row_norms(x);
    let mut out = x.clone();
    for (r, &n) in norms.iter().enumerate() {
        if n >= NORM_GUARD {
            for v in out.row_mut(r) {
                *v /= n;
            }
        }
    }
    out
}

/// Gradient through row normalization, given the pre-normalization rows and
/// their norms: `dL/dh = (g - (g . u) u) / n` with `u = h / n`.
pub(crate) fn l2_normalize_backward(
    pre: &DenseMatrix,
    norms: &[f64],
    grad_out: &DenseMatrix,
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(pre.n_rows(), pre.n_cols());
    for r in 0..pre.n_rows() {
        let n = norms[r];
        let g = grad_out.row(r);
        let row = out.row_mut(r);
        if n < NORM_GUARD {
            row.copy_from_slice(g);
            continue;
        }
        let h = pre.row(r);
        let g_dot_u: f64 = g.iter().zip(h).map(|(&gv, &hv)| gv * hv / n).sum();
        for ((o, &gv), &hv) in row.iter_mut().zip(g).zip(h) {
            *o = (gv - g_dot_u * hv / n) / n;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_uniform_and_analytic() {
        let u = distance_softmax(&[0.0; 5]).unwrap();
        for &v in &u {
            assert!((v - 0.2).abs() < 1e-15);
        }
        let a = distance_softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert!((a[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            distance_softmax(&[f64::NAN, 0.0]),
            Err(PropagationError::NonFiniteWeights)
        ));
        assert!(distance_softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn leaky_relu_cases() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0, 3.0]]);
        assert_eq!(leaky_relu(&x, 0.2), x);
        let neg = DenseMatrix::from_rows(&[vec![-1.0]]);
        assert_eq!(leaky_relu(&neg, 0.2).get(0, 0), -0.2);
        let any = DenseMatrix::from_rows(&[vec![-2.5, 0.0, 4.0]]);
        assert_eq!(leaky_relu(&any, 1.0), any);
    }

    #[test]
    fn dropout_rate_zero_and_infer_are_identity() {
        let x = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (y, mask) = dropout_apply(&x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(y, x);
        assert_eq!(mask.keep_fraction(), 1.0);
        let (y, _) = dropout_apply(&x, 0.9, Mode::Infer, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let x = DenseMatrix::zeros(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout_apply(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        // Monte-Carlo oracle: the average of many dropout draws should match
        // the input within three standard errors.
        let x = DenseMatrix::from_rows(&[vec![2.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let (y, _) = dropout_apply(&x, 0.5, Mode::Train, &mut rng).unwrap();
            sum += y.get(0, 0);
        }
        let mean = sum / draws as f64;
        // Each draw is 0 or 4 with equal probability: std = 2.
        let stderr = 2.0 / (draws as f64).sqrt();
        assert!(
            (mean - 2.0).abs() < 3.0 * stderr,
            "mean {mean} outside 3 standard errors"
        );
    }

    #[test]
    fn l2_rows_unit_norm_and_zero_guard() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]);
        let y = l2_normalize_rows(&x);
        assert!((y.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((y.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(y.row(1), &[0.0, 0.0]);
    }
}
