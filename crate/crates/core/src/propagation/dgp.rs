//! Two-phase dense graph propagation with learned per-distance weights.
//!
//! The forward pass runs a descendant phase followed by an ancestor phase.
//! In weighted mode each phase propagates over every hop bucket separately,
//! `sum_k alpha_k D_k^{-1} A_k`, with `alpha` the softmax of that phase's hop
//! weights; in unweighted mode a single row-normalized dense union replaces
//! the weighted sum. Each phase applies input dropout during training, a
//! dense weight matrix, and a leaky ReLU; the final output is
//! L2-row-normalized.

use rand::Rng;

use super::gcn::glorot_uniform;
use super::ops::{
    distance_softmax, dropout_apply, dropout_backward, l2_normalize_backward, l2_normalize_rows,
    leaky_relu, leaky_relu_backward, row_norms, softmax_logit_grad, DropoutMask, Mode,
};
use super::{PhaseOperator, PropagationError};
use crate::sparse::DenseMatrix;
use crate::taxonomy::KHopAdjacency;

/// Normalized phase operators for the two propagation phases.
///
/// Phase 1 is the descendant phase, phase 2 the ancestor phase. The merged
/// variant uses one symmetrized operator for both phases.
#[derive(Debug, Clone)]
pub struct DgpOperators {
    pub phase1: PhaseOperator,
    pub phase2: PhaseOperator,
}

impl DgpOperators {
    /// Separate descendant and ancestor phases.
    pub fn directional(
        descendants: &KHopAdjacency,
        ancestors: &KHopAdjacency,
    ) -> Result<Self, PropagationError> {
        Ok(Self {
            phase1: PhaseOperator::from_decomposition(descendants)?,
            phase2: PhaseOperator::from_decomposition(ancestors)?,
        })
    }

    /// One merged symmetric adjacency applied in both phases.
    pub fn merged(
        descendants: &KHopAdjacency,
        ancestors: &KHopAdjacency,
    ) -> Result<Self, PropagationError> {
        let merged = PhaseOperator::merged(descendants, ancestors)?;
        Ok(Self {
            phase1: merged.clone(),
            phase2: merged,
        })
    }

    pub fn node_count(&self) -> usize {
        self.phase1.node_count()
    }

    pub fn bucket_count(&self) -> usize {
        self.phase1.bucket_count()
    }
}

/// The two-phase propagation model: dense weights for each phase plus one
/// hop-weight vector per phase.
#[derive(Debug, Clone)]
pub struct DgpModel {
    pub theta_d: DenseMatrix,
    pub theta_a: DenseMatrix,
    pub w_d: Vec<f64>,
    pub w_a: Vec<f64>,
    negative_slope: f64,
    dropout_rate: f64,
    weighted: bool,
}

/// Intermediates from a DGP forward pass.
///
/// The phase-1 dropout mask is not recorded: nothing propagates back past
/// the first phase's input, which is data rather than a parameter.
#[derive(Debug, Clone)]
pub struct DgpTrace {
    mask2: DropoutMask,
    /// Per-bucket propagated inputs of each phase (weighted mode only).
    terms1: Vec<DenseMatrix>,
    terms2: Vec<DenseMatrix>,
    alpha_d: Vec<f64>,
    alpha_a: Vec<f64>,
    /// Weighted-sum propagation results feeding the dense multiplies.
    prop1: DenseMatrix,
    prop2: DenseMatrix,
    pre_act1: DenseMatrix,
    pre_act2: DenseMatrix,
    pre_norm: DenseMatrix,
    norms: Vec<f64>,
    weighted: bool,
    dims: (usize, usize, usize, usize),
}

impl DgpTrace {
    /// Replays the final normalization; bit-identical to the forward output.
    pub fn replay_output(&self) -> DenseMatrix {
        l2_normalize_rows(&self.pre_norm)
    }

    /// Softmax-normalized hop weights used by the traced pass.
    pub fn alphas(&self) -> (&[f64], &[f64]) {
        (&self.alpha_d, &self.alpha_a)
    }
}

/// Parameter gradients for a `DgpModel`. Hop-weight gradients are zero in
/// unweighted mode.
#[derive(Debug, Clone)]
pub struct DgpGrads {
    pub theta_d: DenseMatrix,
    pub theta_a: DenseMatrix,
    pub w_d: Vec<f64>,
    pub w_a: Vec<f64>,
}

impl DgpModel {
    pub fn new(
        theta_d: DenseMatrix,
        theta_a: DenseMatrix,
        w_d: Vec<f64>,
        w_a: Vec<f64>,
        negative_slope: f64,
        dropout_rate: f64,
        weighted: bool,
    ) -> Result<Self, PropagationError> {
        if theta_d.n_cols() != theta_a.n_rows() {
            return Err(PropagationError::LayerChainMismatch {
                layer: 1,
                prev_cols: theta_d.n_cols(),
                next_rows: theta_a.n_rows(),
            });
        }
        if w_d.len() != w_a.len() || w_d.is_empty() {
            return Err(PropagationError::BucketCountMismatch {
                weights: w_d.len(),
                buckets: w_a.len(),
            });
        }
        Ok(Self {
            theta_d,
            theta_a,
            w_d,
            w_a,
            negative_slope,
            dropout_rate,
            weighted,
        })
    }

    /// Glorot-uniform dense weights; hop weights start at zero so the
    /// weighted model begins as a uniformly-weighted dense model.
    pub fn glorot(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        hop_cap: usize,
        weighted: bool,
        negative_slope: f64,
        dropout_rate: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let theta_d = glorot_uniform(input_dim, hidden_dim, rng);
        let theta_a = glorot_uniform(hidden_dim, output_dim, rng);
        Self {
            theta_d,
            theta_a,
            w_d: vec![0.0; hop_cap + 1],
            w_a: vec![0.0; hop_cap + 1],
            negative_slope,
            dropout_rate,
            weighted,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.theta_d.n_rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.theta_d.n_cols()
    }

    pub fn output_dim(&self) -> usize {
        self.theta_a.n_cols()
    }

    /// The hop cap K; hop-weight vectors have K+1 entries.
    pub fn hop_cap(&self) -> usize {
        self.w_d.len() - 1
    }

    pub fn weighted(&self) -> bool {
        self.weighted
    }

    pub fn negative_slope(&self) -> f64 {
        self.negative_slope
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// Total trainable scalar count. The weighting scheme adds 2*(K+1); no
    /// bias terms anywhere.
    pub fn parameter_count(&self) -> usize {
        let dense = self.theta_d.n_rows() * self.theta_d.n_cols()
            + self.theta_a.n_rows() * self.theta_a.n_cols();
        if self.weighted {
            dense + self.w_d.len() + self.w_a.len()
        } else {
            dense
        }
    }

    fn check_operators(&self, ops: &DgpOperators, x: &DenseMatrix) -> Result<(), PropagationError> {
        if self.weighted && ops.bucket_count() != self.w_d.len() {
            return Err(PropagationError::BucketCountMismatch {
                weights: self.w_d.len(),
                buckets: ops.bucket_count(),
            });
        }
        if ops.phase2.bucket_count() != ops.phase1.bucket_count() {
            return Err(PropagationError::BucketCountMismatch {
                weights: ops.phase1.bucket_count(),
                buckets: ops.phase2.bucket_count(),
            });
        }
        if x.n_rows() != ops.node_count() {
            return Err(PropagationError::NodeCountMismatch {
                expected: ops.node_count(),
                found: x.n_rows(),
            });
        }
        if x.n_cols() != self.theta_d.n_rows() {
            return Err(PropagationError::LayerDimMismatch {
                layer: 0,
                expected: self.theta_d.n_rows(),
                found: x.n_cols(),
            });
        }
        Ok(())
    }

    /// One phase of propagation: weighted bucket sum or plain union.
    fn propagate_phase(
        &self,
        phase: &PhaseOperator,
        alpha: &[f64],
        input: &DenseMatrix,
    ) -> Result<(DenseMatrix, Vec<DenseMatrix>), PropagationError> {
        if !self.weighted {
            return Ok((phase.union().propagate(input)?, Vec::new()));
        }
        let mut terms = Vec::with_capacity(phase.bucket_count());
        let mut sum = DenseMatrix::zeros(input.n_rows(), input.n_cols());
        for (op, &a) in phase.buckets().iter().zip(alpha) {
            let term = op.propagate(input)?;
            sum.add_scaled(a, &term);
            terms.push(term);
        }
        Ok((sum, terms))
    }

    pub fn forward(
        &self,
        ops: &DgpOperators,
        x: &DenseMatrix,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(DenseMatrix, DgpTrace), PropagationError> {
        self.check_operators(ops, x)?;
        let alpha_d = distance_softmax(&self.w_d)?;
        let alpha_a = distance_softmax(&self.w_a)?;

        // Descendant phase.
        let (x_drop, _) = dropout_apply(x, self.dropout_rate, mode, rng)?;
        let (prop1, terms1) = self.propagate_phase(&ops.phase1, &alpha_d, &x_drop)?;
        let pre_act1 = prop1.matmul(&self.theta_d);
        let h1 = leaky_relu(&pre_act1, self.negative_slope);

        // Ancestor phase.
        let (h1_drop, mask2) = dropout_apply(&h1, self.dropout_rate, mode, rng)?;
        let (prop2, terms2) = self.propagate_phase(&ops.phase2, &alpha_a, &h1_drop)?;
        let pre_act2 = prop2.matmul(&self.theta_a);
        let h2 = leaky_relu(&pre_act2, self.negative_slope);

        let norms = row_norms(&h2);
        let out = l2_normalize_rows(&h2);
        let trace = DgpTrace {
            mask2,
            terms1,
            terms2,
            alpha_d,
            alpha_a,
            prop1,
            prop2,
            pre_act1,
            pre_act2,
            pre_norm: h2,
            norms,
            weighted: self.weighted,
            dims: (
                self.input_dim(),
                self.hidden_dim(),
                self.output_dim(),
                self.w_d.len(),
            ),
        };
        Ok((out, trace))
    }

    /// Exact parameter gradients given the gradient of the normalized output.
    ///
    /// Hop-weight gradients flow through the softmax Jacobian and the traced
    /// per-bucket propagation terms; dropout masks are reused from the trace.
    pub fn backward(
        &self,
        ops: &DgpOperators,
        trace: &DgpTrace,
        grad_out: &DenseMatrix,
    ) -> Result<DgpGrads, PropagationError> {
        let dims = (
            self.input_dim(),
            self.hidden_dim(),
            self.output_dim(),
            self.w_d.len(),
        );
        if trace.dims != dims || trace.weighted != self.weighted {
            return Err(PropagationError::TraceMismatch(
                "model shape or weighting differs from the traced forward pass",
            ));
        }
        if grad_out.n_rows() != trace.pre_norm.n_rows()
            || grad_out.n_cols() != trace.pre_norm.n_cols()
        {
            return Err(PropagationError::TraceMismatch(
                "output gradient shape differs from the traced output",
            ));
        }

        let g_h2 = l2_normalize_backward(&trace.pre_norm, &trace.norms, grad_out);
        let g_z2 = leaky_relu_backward(&trace.pre_act2, &g_h2, self.negative_slope);
        let grad_theta_a = trace.prop2.transpose().matmul(&g_z2);
        let g_prop2 = g_z2.matmul(&self.theta_a.transpose());

        let mut grad_w_a = vec![0.0; self.w_a.len()];
        let mut g_h1_drop = DenseMatrix::zeros(g_prop2.n_rows(), g_prop2.n_cols());
        if self.weighted {
            let g_alpha: Vec<f64> = trace.terms2.iter().map(|t| t.dot(&g_prop2)).collect();
            grad_w_a = softmax_logit_grad(&trace.alpha_a, &g_alpha);
            for (op, &a) in ops.phase2.buckets().iter().zip(&trace.alpha_a) {
                g_h1_drop.add_scaled(a, &op.propagate_adjoint(&g_prop2)?);
            }
        } else {
            g_h1_drop = ops.phase2.union().propagate_adjoint(&g_prop2)?;
        }

        let g_h1 = dropout_backward(&g_h1_drop, &trace.mask2);
        let g_z1 = leaky_relu_backward(&trace.pre_act1, &g_h1, self.negative_slope);
        let grad_theta_d = trace.prop1.transpose().matmul(&g_z1);

        let mut grad_w_d = vec![0.0; self.w_d.len()];
        if self.weighted {
            let g_prop1 = g_z1.matmul(&self.theta_d.transpose());
            let g_alpha: Vec<f64> = trace.terms1.iter().map(|t| t.dot(&g_prop1)).collect();
            grad_w_d = softmax_logit_grad(&trace.alpha_d, &g_alpha);
        }

        Ok(DgpGrads {
            theta_d: grad_theta_d,
            theta_a: grad_theta_a,
            w_d: grad_w_d,
            w_a: grad_w_a,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{khop_decompose, Direction, TaxonomyDag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn edgeless_ops(n: usize, hop_cap: usize) -> DgpOperators {
        let ids = (0..n).map(|i| format!("n{i}")).collect();
        let dag = TaxonomyDag::new(ids, vec![]).unwrap();
        let desc = khop_decompose(&dag, hop_cap, Direction::Descendant).unwrap();
        let anc = khop_decompose(&dag, hop_cap, Direction::Ancestor).unwrap();
        DgpOperators::directional(&desc, &anc).unwrap()
    }

    #[test]
    fn edgeless_weighted_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = DgpModel::glorot(5, 6, 4, 2, true, 0.2, 0.0, &mut rng);
        model.w_d = vec![0.3, -0.7, 1.1];
        model.w_a = vec![-0.2, 0.4, 0.0];
        let ops = edgeless_ops(8, 2);
        let x = DenseMatrix::from_vec(8, 5, (0..40).map(|i| ((i * 7) % 13) as f64 * 0.1 - 0.6).collect());
        let (out, trace) = model.forward(&ops, &x, Mode::Infer, &mut rng).unwrap();

        // Only the self bucket is non-empty, so the closed form is
        // l2n(sigma(a0_a * sigma(a0_d * X Th_d) Th_a)).
        let a0_d = distance_softmax(&model.w_d).unwrap()[0];
        let a0_a = distance_softmax(&model.w_a).unwrap()[0];
        let inner = leaky_relu(&x.scale(a0_d).matmul(&model.theta_d), 0.2);
        let outer = leaky_relu(&inner.scale(a0_a).matmul(&model.theta_a), 0.2);
        let oracle = l2_normalize_rows(&outer);
        for (a, b) in out.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(trace.replay_output(), out);
    }

    #[test]
    fn identity_union_unweighted_is_two_dense_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = DgpModel::glorot(4, 5, 3, 3, false, 0.2, 0.0, &mut rng);
        let ops = edgeless_ops(6, 3);
        let x = DenseMatrix::from_vec(6, 4, (0..24).map(|i| (i as f64 * 0.37).sin()).collect());
        let (out, _) = model.forward(&ops, &x, Mode::Infer, &mut rng).unwrap();
        let inner = leaky_relu(&x.matmul(&model.theta_d), 0.2);
        let oracle = l2_normalize_rows(&leaky_relu(&inner.matmul(&model.theta_a), 0.2));
        for (a, b) in out.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bucket_count_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = DgpModel::glorot(4, 5, 3, 4, true, 0.2, 0.0, &mut rng);
        let ops = edgeless_ops(6, 2); // 3 buckets vs 5 weights
        let x = DenseMatrix::zeros(6, 4);
        assert!(matches!(
            model.forward(&ops, &x, Mode::Infer, &mut rng),
            Err(PropagationError::BucketCountMismatch { .. })
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = DgpModel::glorot(4, 5, 3, 2, true, 0.2, 0.0, &mut rng);
        let ops = edgeless_ops(6, 2);
        let x = DenseMatrix::from_vec(6, 4, (0..24).map(|i| i as f64 * 0.05 - 0.5).collect());
        let (out, trace) = model.forward(&ops, &x, Mode::Infer, &mut rng).unwrap();
        let grads = model
            .backward(&ops, &trace, &DenseMatrix::zeros(out.n_rows(), out.n_cols()))
            .unwrap();
        assert!(grads.theta_d.data().iter().all(|&v| v == 0.0));
        assert!(grads.theta_a.data().iter().all(|&v| v == 0.0));
        assert!(grads.w_d.iter().chain(&grads.w_a).all(|&v| v == 0.0));
    }

    #[test]
    fn trace_from_other_model_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let model_a = DgpModel::glorot(4, 5, 3, 2, true, 0.2, 0.0, &mut rng);
        let model_b = DgpModel::glorot(4, 6, 3, 2, true, 0.2, 0.0, &mut rng);
        let ops = edgeless_ops(6, 2);
        let x = DenseMatrix::zeros(6, 4);
        let (_, trace) = model_a.forward(&ops, &x, Mode::Infer, &mut rng).unwrap();
        assert!(matches!(
            model_b.backward(&ops, &trace, &DenseMatrix::zeros(6, 3)),
            Err(PropagationError::TraceMismatch(_))
        ));
    }

    #[test]
    fn parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let dgp = DgpModel::glorot(300, 2048, 2049, 4, true, 0.2, 0.5, &mut rng);
        assert_eq!(dgp.parameter_count(), 4_810_762);
        let unweighted = DgpModel::glorot(300, 2048, 2049, 4, false, 0.2, 0.5, &mut rng);
        assert_eq!(unweighted.parameter_count(), 4_810_752);
    }
}
