//! Stage-1 optimization: full-batch Adam training of a propagation model to
//! regress the seen-class classifier rows.
//!
//! The whole graph is processed in every step, one optimizer step per epoch.
//! Training is a pure function of (config, inputs, seed): identical seeds
//! give bit-identical loss histories and final parameters.

mod adam;
mod loss;

pub use adam::AdamState;
pub use loss::masked_mse_loss;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::propagation::{
    distance_softmax, DgpGrads, DgpModel, DgpOperators, DgpTrace, GcnGrads, GcnStack, GcnTrace,
    GraphOperator, Mode, Normalization, PropagationError,
};
use crate::sparse::DenseMatrix;
use crate::taxonomy::{khop_decompose, Direction, TaxonomyDag, TaxonomyError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TrainingError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("seen mask is invalid: {0}")]
    BadMask(String),
    #[error("mask selects {mask_rows} rows but target has {target_rows}")]
    MaskTargetMismatch { mask_rows: usize, target_rows: usize },
    #[error("prediction width {pred_cols} differs from target width {target_cols}")]
    WidthMismatch { pred_cols: usize, target_cols: usize },
    #[error("optimizer state covers {expected} values, step got {found}")]
    OptimizerShapeMismatch { expected: usize, found: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("model and prepared graph kinds do not match")]
    ModelGraphMismatch,
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// Which architecture to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// The single-hidden-layer GCN baseline.
    Sgcn,
    /// A GCN with the given number of hidden layers.
    Gcn { hidden_layers: usize },
    /// Two-phase dense graph propagation.
    Dgp,
}

impl ModelKind {
    fn hidden_layers(self) -> usize {
        match self {
            ModelKind::Sgcn => 1,
            ModelKind::Gcn { hidden_layers } => hidden_layers,
            ModelKind::Dgp => 1,
        }
    }
}

/// Hyperparameters for one training run. Defaults are the canonical
/// configuration: 3000 epochs, Adam at 0.001 with weight decay 0.0005,
/// dropout 0.5, leaky-ReLU slope 0.2, K = 4, hidden width 2048,
/// non-symmetric normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub negative_slope: f64,
    pub hop_cap: usize,
    pub hidden_dim: usize,
    pub normalization: Normalization,
    pub seed: u64,
    pub model_kind: ModelKind,
    /// Distance-weighted propagation (DGP only).
    pub weighted: bool,
    /// Separate descendant/ancestor phases; `false` uses a single merged
    /// symmetric dense adjacency in both phases (DGP only).
    pub two_phase: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            dropout_rate: 0.5,
            negative_slope: 0.2,
            hop_cap: 4,
            hidden_dim: 2048,
            normalization: Normalization::NonSym,
            seed: 0,
            model_kind: ModelKind::Dgp,
            weighted: true,
            two_phase: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.epochs == 0 {
            return Err(TrainingError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(TrainingError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainingError::InvalidConfig("weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(TrainingError::InvalidConfig("dropout rate must lie in [0, 1)".into()));
        }
        if self.hop_cap == 0 {
            return Err(TrainingError::InvalidConfig("hop cap K must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(TrainingError::InvalidConfig("hidden width must be positive".into()));
        }
        if matches!(self.model_kind, ModelKind::Gcn { hidden_layers: 0 }) {
            return Err(TrainingError::InvalidConfig(
                "a GCN needs at least one hidden layer".into(),
            ));
        }
        Ok(())
    }
}

/// Indices of the M training classes within the N graph nodes. The index
/// order fixes the row order of the target matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeenMask {
    indices: Vec<usize>,
    n_nodes: usize,
}

impl SeenMask {
    pub fn new(indices: Vec<usize>, n_nodes: usize) -> Result<Self, TrainingError> {
        if indices.is_empty() {
            return Err(TrainingError::BadMask("no seen classes".into()));
        }
        if indices.len() > n_nodes {
            return Err(TrainingError::BadMask(format!(
                "{} seen classes for {} nodes",
                indices.len(),
                n_nodes
            )));
        }
        let mut seen = vec![false; n_nodes];
        for &i in &indices {
            if i >= n_nodes {
                return Err(TrainingError::BadMask(format!(
                    "index {i} out of range for {n_nodes} nodes"
                )));
            }
            if seen[i] {
                return Err(TrainingError::BadMask(format!("duplicate index {i}")));
            }
            seen[i] = true;
        }
        Ok(Self { indices, n_nodes })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn contains(&self, node: usize) -> bool {
        self.indices.contains(&node)
    }

    /// Node indices not covered by the mask, ascending.
    pub fn complement(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_nodes];
        for &i in &self.indices {
            seen[i] = true;
        }
        (0..self.n_nodes).filter(|&i| !seen[i]).collect()
    }
}

/// A trainable model of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Gcn(GcnStack),
    Dgp(DgpModel),
}

/// Forward trace of either kind.
#[derive(Debug, Clone)]
pub enum Trace {
    Gcn(GcnTrace),
    Dgp(DgpTrace),
}

/// Parameter gradients of either kind.
#[derive(Debug, Clone)]
pub enum Grads {
    Gcn(GcnGrads),
    Dgp(DgpGrads),
}

/// Normalized graph operators matching one model kind.
#[derive(Debug, Clone)]
pub enum PreparedGraph {
    Gcn(GraphOperator),
    Dgp(DgpOperators),
}

impl PreparedGraph {
    /// Normalized symmetric hierarchy adjacency for the GCN path.
    pub fn for_gcn(dag: &TaxonomyDag, norm: Normalization) -> Result<Self, TrainingError> {
        let op = GraphOperator::normalize(&dag.symmetric_adjacency(), norm)
            .map_err(PropagationError::from)?;
        Ok(PreparedGraph::Gcn(op))
    }

    /// K-hop phase operators for the DGP path.
    pub fn for_dgp(dag: &TaxonomyDag, hop_cap: usize, two_phase: bool) -> Result<Self, TrainingError> {
        let desc = khop_decompose(dag, hop_cap, Direction::Descendant)?;
        let anc = khop_decompose(dag, hop_cap, Direction::Ancestor)?;
        let ops = if two_phase {
            DgpOperators::directional(&desc, &anc)?
        } else {
            DgpOperators::merged(&desc, &anc)?
        };
        Ok(PreparedGraph::Dgp(ops))
    }

    pub fn for_config(dag: &TaxonomyDag, config: &TrainConfig) -> Result<Self, TrainingError> {
        match config.model_kind {
            ModelKind::Dgp => Self::for_dgp(dag, config.hop_cap, config.two_phase),
            _ => Self::for_gcn(dag, config.normalization),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            PreparedGraph::Gcn(op) => op.node_count(),
            PreparedGraph::Dgp(ops) => ops.node_count(),
        }
    }
}

impl Model {
    pub fn parameter_count(&self) -> usize {
        match self {
            Model::Gcn(stack) => stack.parameter_count(),
            Model::Dgp(model) => model.parameter_count(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Gcn(stack) => stack.output_dim(),
            Model::Dgp(model) => model.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Gcn(stack) => stack.input_dim(),
            Model::Dgp(model) => model.input_dim(),
        }
    }

    pub fn forward(
        &self,
        graph: &PreparedGraph,
        x: &DenseMatrix,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DenseMatrix, Trace), TrainingError> {
        match (self, graph) {
            (Model::Gcn(stack), PreparedGraph::Gcn(op)) => {
                let (out, trace) = stack.forward(op, x, mode, rng)?;
                Ok((out, Trace::Gcn(trace)))
            }
            (Model::Dgp(model), PreparedGraph::Dgp(ops)) => {
                let (out, trace) = model.forward(ops, x, mode, rng)?;
                Ok((out, Trace::Dgp(trace)))
            }
            _ => Err(TrainingError::ModelGraphMismatch),
        }
    }

    pub fn backward(
        &self,
        graph: &PreparedGraph,
        trace: &Trace,
        grad_out: &DenseMatrix,
    ) -> Result<Grads, TrainingError> {
        match (self, graph, trace) {
            (Model::Gcn(stack), PreparedGraph::Gcn(op), Trace::Gcn(t)) => {
                Ok(Grads::Gcn(stack.backward(op, t, grad_out)?))
            }
            (Model::Dgp(model), PreparedGraph::Dgp(ops), Trace::Dgp(t)) => {
                Ok(Grads::Dgp(model.backward(ops, t, grad_out)?))
            }
            _ => Err(TrainingError::ModelGraphMismatch),
        }
    }

    /// Flattened views of every trainable tensor, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Gcn(stack) => stack.layers_mut().iter_mut().map(|l| l.data_mut()).collect(),
            Model::Dgp(model) => {
                let weighted = model.weighted();
                let mut v = vec![
                    model.theta_d.data_mut(),
                    model.theta_a.data_mut(),
                ];
                if weighted {
                    v.push(model.w_d.as_mut_slice());
                    v.push(model.w_a.as_mut_slice());
                }
                v
            }
        }
    }

    fn param_lengths(&mut self) -> Vec<usize> {
        self.params_mut().iter().map(|p| p.len()).collect()
    }

    /// Per-tensor weight-decay coefficients aligned with `params_mut`.
    /// Hop weights are exempt from decay.
    fn weight_decays(&self, weight_decay: f64) -> Vec<f64> {
        match self {
            Model::Gcn(stack) => vec![weight_decay; stack.layers().len()],
            Model::Dgp(model) => {
                let mut v = vec![weight_decay, weight_decay];
                if model.weighted() {
                    v.push(0.0);
                    v.push(0.0);
                }
                v
            }
        }
    }
}

impl Grads {
    fn as_slices(&self) -> Vec<&[f64]> {
        match self {
            Grads::Gcn(g) => g.layers.iter().map(|l| l.data()).collect(),
            Grads::Dgp(g) => {
                // w gradients are zero vectors in unweighted mode; they are
                // only fed to the optimizer when the model is weighted, which
                // train() guarantees by matching params_mut ordering.
                vec![g.theta_d.data(), g.theta_a.data(), &g.w_d, &g.w_a]
            }
        }
    }

    fn slices_for(&self, params: usize) -> Vec<&[f64]> {
        let mut s = self.as_slices();
        s.truncate(params);
        s
    }
}

/// Result of a training run: final parameters, prepared graph, per-epoch
/// loss, and the learned hop-weight softmaxes when the model has them.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub graph: PreparedGraph,
    pub loss_history: Vec<f64>,
    pub alpha_d: Option<Vec<f64>>,
    pub alpha_a: Option<Vec<f64>>,
}

/// Trains a model on the graph with full-batch Adam steps.
///
/// `embeddings` rows must align with the graph node order and `targets` rows
/// with the mask order; targets are expected to be L2-row-normalized.
pub fn train(
    config: &TrainConfig,
    dag: &TaxonomyDag,
    embeddings: &DenseMatrix,
    targets: &DenseMatrix,
    mask: &SeenMask,
    mut progress: Option<&mut dyn FnMut(usize, f64)>,
) -> Result<TrainOutcome, TrainingError> {
    config.validate()?;
    let n = dag.node_count();
    if embeddings.n_rows() != n {
        return Err(TrainingError::Misaligned(format!(
            "{} embedding rows for {} graph nodes",
            embeddings.n_rows(),
            n
        )));
    }
    if mask.n_nodes() != n {
        return Err(TrainingError::Misaligned(format!(
            "mask built for {} nodes, graph has {}",
            mask.n_nodes(),
            n
        )));
    }
    if targets.n_rows() != mask.len() {
        return Err(TrainingError::MaskTargetMismatch {
            mask_rows: mask.len(),
            target_rows: targets.n_rows(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let graph = PreparedGraph::for_config(dag, config)?;
    let s_dim = embeddings.n_cols();
    let p_dim = targets.n_cols();
    let mut model = match config.model_kind {
        ModelKind::Dgp => Model::Dgp(DgpModel::glorot(
            s_dim,
            config.hidden_dim,
            p_dim,
            config.hop_cap,
            config.weighted,
            config.negative_slope,
            config.dropout_rate,
            &mut rng,
        )),
        kind => {
            let mut dims = vec![s_dim];
            dims.extend(std::iter::repeat(config.hidden_dim).take(kind.hidden_layers()));
            dims.push(p_dim);
            Model::Gcn(GcnStack::glorot(
                &dims,
                config.normalization,
                config.negative_slope,
                config.dropout_rate,
                &mut rng,
            )?)
        }
    };

    let lengths = model.param_lengths();
    let decays = model.weight_decays(config.weight_decay);
    let mut optimizer = AdamState::new(&lengths);
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let (pred, trace) = model.forward(&graph, embeddings, Mode::Train, &mut rng)?;
        let (loss, grad_pred) = masked_mse_loss(&pred, targets, mask)?;
        if !loss.is_finite() {
            return Err(TrainingError::NonFiniteLoss { epoch });
        }
        let grads = model.backward(&graph, &trace, &grad_pred)?;
        {
            let mut params = model.params_mut();
            let n_params = params.len();
            optimizer.step(
                &mut params,
                &grads.slices_for(n_params),
                config.learning_rate,
                &decays,
            )?;
        }
        loss_history.push(loss);
        if let Some(f) = progress.as_deref_mut() {
            f(epoch, loss);
        }
    }

    let (alpha_d, alpha_a) = match &model {
        Model::Dgp(m) if m.weighted() => (
            Some(distance_softmax(&m.w_d)?),
            Some(distance_softmax(&m.w_a)?),
        ),
        _ => (None, None),
    };
    Ok(TrainOutcome {
        model,
        graph,
        loss_history,
        alpha_d,
        alpha_a,
    })
}

/// Inference-mode forward pass: no dropout, rows L2-normalized. Row i is the
/// predicted classifier for node i.
pub fn predict_classifiers(
    model: &Model,
    graph: &PreparedGraph,
    x: &DenseMatrix,
) -> Result<DenseMatrix, TrainingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = model.forward(graph, x, Mode::Infer, &mut rng)?;
    Ok(out)
}
