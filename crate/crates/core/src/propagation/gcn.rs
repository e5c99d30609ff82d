//! The L-layer GCN baseline.
//!
//! Each layer applies dropout (train mode), propagates over the normalized
//! adjacency, multiplies by that layer's weight matrix, and applies a leaky
//! ReLU. The final output is L2-row-normalized. Layers carry no bias terms.

use rand::Rng;

use super::ops::{
    dropout_apply, dropout_backward, l2_normalize_backward, l2_normalize_rows, leaky_relu,
    leaky_relu_backward, row_norms, DropoutMask, Mode,
};
use super::{GraphOperator, Normalization, PropagationError};
use crate::sparse::DenseMatrix;

/// Stack of per-layer weight matrices for the GCN propagation rule.
#[derive(Debug, Clone)]
pub struct GcnStack {
    layers: Vec<DenseMatrix>,
    normalization: Normalization,
    negative_slope: f64,
    dropout_rate: f64,
}

/// Intermediates recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct GcnTrace {
    masks: Vec<DropoutMask>,
    /// Propagated, dropped-out input of each layer (`A_hat * drop(H)`).
    propagated: Vec<DenseMatrix>,
    /// Pre-activation of each layer.
    pre_act: Vec<DenseMatrix>,
    /// Post-activation of the last layer, before row normalization.
    pre_norm: DenseMatrix,
    norms: Vec<f64>,
    layer_dims: Vec<(usize, usize)>,
}

impl GcnTrace {
    /// Replays the final normalization; bit-identical to the forward output.
    pub fn replay_output(&self) -> DenseMatrix {
        l2_normalize_rows(&self.pre_norm)
    }
}

/// Parameter gradients for a `GcnStack`, one matrix per layer.
#[derive(Debug, Clone)]
pub struct GcnGrads {
    pub layers: Vec<DenseMatrix>,
}

impl GcnStack {
    /// Builds a stack from explicit weight matrices. Consecutive layer
    /// dimensions must chain.
    pub fn new(
        layers: Vec<DenseMatrix>,
        normalization: Normalization,
        negative_slope: f64,
        dropout_rate: f64,
    ) -> Result<Self, PropagationError> {
        if layers.is_empty() {
            return Err(PropagationError::EmptyStack);
        }
        for i in 1..layers.len() {
            if layers[i - 1].n_cols() != layers[i].n_rows() {
                return Err(PropagationError::LayerChainMismatch {
                    layer: i,
                    prev_cols: layers[i - 1].n_cols(),
                    next_rows: layers[i].n_rows(),
                });
            }
        }
        Ok(Self {
            layers,
            normalization,
            negative_slope,
            dropout_rate,
        })
    }

    /// Glorot-uniform initialization for the dimension chain `dims`
    /// (input width, hidden widths..., output width).
    pub fn glorot(
        dims: &[usize],
        normalization: Normalization,
        negative_slope: f64,
        dropout_rate: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, PropagationError> {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let layers = dims
            .windows(2)
            .map(|w| glorot_uniform(w[0], w[1], rng))
            .collect();
        Self::new(layers, normalization, negative_slope, dropout_rate)
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.layers
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn negative_slope(&self) -> f64 {
        self.negative_slope
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_cols()
    }

    /// Total trainable scalar count; no bias terms.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.n_rows() * l.n_cols()).sum()
    }

    /// Runs the stack over the graph. `a_norm` must already be normalized
    /// and square over the graph's nodes.
    pub fn forward(
        &self,
        a_norm: &GraphOperator,
        x: &DenseMatrix,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(DenseMatrix, GcnTrace), PropagationError> {
        if x.n_rows() != a_norm.node_count() {
            return Err(PropagationError::NodeCountMismatch {
                expected: a_norm.node_count(),
                found: x.n_rows(),
            });
        }
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut propagated = Vec::with_capacity(self.layers.len());
        let mut pre_act = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (l, theta) in self.layers.iter().enumerate() {
            if h.n_cols() != theta.n_rows() {
                return Err(PropagationError::LayerDimMismatch {
                    layer: l,
                    expected: theta.n_rows(),
                    found: h.n_cols(),
                });
            }
            let (dropped, mask) = dropout_apply(&h, self.dropout_rate, mode, rng)?;
            let prop = a_norm.propagate(&dropped)?;
            let z = prop.matmul(theta);
            h = leaky_relu(&z, self.negative_slope);
            masks.push(mask);
            propagated.push(prop);
            pre_act.push(z);
        }
        let norms = row_norms(&h);
        let out = l2_normalize_rows(&h);
        let trace = GcnTrace {
            masks,
            propagated,
            pre_act,
            pre_norm: h,
            norms,
            layer_dims: self.layers.iter().map(|l| (l.n_rows(), l.n_cols())).collect(),
        };
        Ok((out, trace))
    }

    /// Exact gradients of every layer given the gradient of the normalized
    /// output.
    pub fn backward(
        &self,
        a_norm: &GraphOperator,
        trace: &GcnTrace,
        grad_out: &DenseMatrix,
    ) -> Result<GcnGrads, PropagationError> {
        if trace.layer_dims.len() != self.layers.len()
            || trace
                .layer_dims
                .iter()
                .zip(&self.layers)
                .any(|(&(r, c), l)| r != l.n_rows() || c != l.n_cols())
        {
            return Err(PropagationError::TraceMismatch(
                "layer shapes differ from the traced forward pass",
            ));
        }
        if grad_out.n_rows() != trace.pre_norm.n_rows()
            || grad_out.n_cols() != trace.pre_norm.n_cols()
        {
            return Err(PropagationError::TraceMismatch(
                "output gradient shape differs from the traced output",
            ));
        }
        let mut grads = vec![DenseMatrix::zeros(0, 0); self.layers.len()];
        let mut g = l2_normalize_backward(&trace.pre_norm, &trace.norms, grad_out);
        for l in (0..self.layers.len()).rev() {
            let g_z = leaky_relu_backward(&trace.pre_act[l], &g, self.negative_slope);
            grads[l] = trace.propagated[l].transpose().matmul(&g_z);
            if l > 0 {
                let g_prop = g_z.matmul(&self.layers[l].transpose());
                let g_dropped = a_norm.propagate_adjoint(&g_prop)?;
                g = dropout_backward(&g_dropped, &trace.masks[l]);
            }
        }
        Ok(GcnGrads { layers: grads })
    }
}

/// Uniform draw over +-sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    DenseMatrix::from_vec(fan_in, fan_out, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_op(n: usize) -> GraphOperator {
        GraphOperator::from_normalized(SparseMatrix::identity(n))
    }

    #[test]
    fn identity_everything_reduces_to_row_normalization() {
        let theta = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let stack = GcnStack::new(vec![theta], Normalization::NonSym, 0.2, 0.0).unwrap();
        let x = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 0.0], vec![2.0, 2.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = stack
            .forward(&identity_op(3), &x, Mode::Infer, &mut rng)
            .unwrap();
        assert_eq!(out, l2_normalize_rows(&x));
    }

    #[test]
    fn three_node_path_matches_dense_oracle() {
        // Path 0-1-2 with self-loops, row-normalized by hand.
        let adj = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 1.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        let op = GraphOperator::normalize(&adj, Normalization::NonSym).unwrap();
        let theta = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let stack = GcnStack::new(vec![theta.clone()], Normalization::NonSym, 0.2, 0.0).unwrap();
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (out, _) = stack.forward(&op, &x, Mode::Infer, &mut rng).unwrap();

        // Dense oracle computed with plain loops.
        let a_dense = op.matrix().to_dense();
        let z = a_dense.matmul(&x).matmul(&theta);
        let oracle = l2_normalize_rows(&leaky_relu(&z, 0.2));
        for (a, b) in out.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_shape_contract_two_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stack =
            GcnStack::glorot(&[5, 7, 4], Normalization::NonSym, 0.2, 0.5, &mut rng).unwrap();
        // Ring graph with self-loops.
        let n = 20;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 1.0));
            triplets.push((i, (i + 1) % n, 1.0));
            triplets.push(((i + 1) % n, i, 1.0));
        }
        let adj = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let op = GraphOperator::normalize(&adj, Normalization::NonSym).unwrap();
        let x = DenseMatrix::from_vec(n, 5, (0..n * 5).map(|i| (i as f64).sin()).collect());
        let (out, trace) = stack.forward(&op, &x, Mode::Train, &mut rng).unwrap();
        assert_eq!((out.n_rows(), out.n_cols()), (n, 4));
        assert!(out.is_finite());
        assert_eq!(trace.replay_output(), out);
    }

    #[test]
    fn mismatched_layer_width_names_layer() {
        let theta0 = DenseMatrix::zeros(5, 7);
        let stack = GcnStack::new(vec![theta0], Normalization::NonSym, 0.2, 0.0).unwrap();
        let x = DenseMatrix::zeros(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = stack
            .forward(&identity_op(3), &x, Mode::Infer, &mut rng)
            .unwrap_err();
        assert!(matches!(err, PropagationError::LayerDimMismatch { layer: 0, .. }));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack =
            GcnStack::glorot(&[4, 6, 3], Normalization::NonSym, 0.2, 0.0, &mut rng).unwrap();
        let x = DenseMatrix::from_vec(5, 4, (0..20).map(|i| i as f64 * 0.1 - 1.0).collect());
        let op = identity_op(5);
        let (_, trace) = stack.forward(&op, &x, Mode::Infer, &mut rng).unwrap();
        let grads = stack
            .backward(&op, &trace, &DenseMatrix::zeros(5, 3))
            .unwrap();
        for g in &grads.layers {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }
}
