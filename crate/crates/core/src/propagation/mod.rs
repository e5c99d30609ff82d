//! Forward and backward passes for graph propagation models.
//!
//! Two architectures share the kernels here: an L-layer GCN stack
//! (`H <- sigma(D^{-1} A H Theta)` per layer) and the two-phase dense
//! propagation model, which runs a descendant phase followed by an ancestor
//! phase over per-distance adjacency buckets with softmax-normalized hop
//! weights. Backward passes are exact reverse-mode differentiation of the
//! forward computation; dropout masks are recorded in the trace and reused.
//!
//! Forward and backward are pure functions of (parameters, inputs, seed) and
//! never mutate the model, so trained models are safe to share across threads.

mod dgp;
mod gcn;
mod ops;
mod smoothing;

pub use dgp::{DgpGrads, DgpModel, DgpOperators, DgpTrace};
pub use gcn::{GcnGrads, GcnStack, GcnTrace};
pub use ops::{
    distance_softmax, dropout_apply, l2_normalize_rows, leaky_relu, DropoutMask, Mode,
};
pub use smoothing::{row_dispersion, smoothing_trajectory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::{SparseError, SparseMatrix};
use crate::taxonomy::KHopAdjacency;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PropagationError {
    #[error("input has {found} rows but the graph has {expected} nodes")]
    NodeCountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch at layer {layer}: input width {found}, weight rows {expected}")]
    LayerDimMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("weights do not chain at layer {layer}: {prev_cols} columns feeding {next_rows} rows")]
    LayerChainMismatch {
        layer: usize,
        prev_cols: usize,
        next_rows: usize,
    },
    #[error("layer stack is empty")]
    EmptyStack,
    #[error("non-finite input to distance softmax")]
    NonFiniteWeights,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropoutRate(f64),
    #[error("{weights} distance weights for {buckets} adjacency buckets")]
    BucketCountMismatch { weights: usize, buckets: usize },
    #[error("forward trace does not match this model: {0}")]
    TraceMismatch(&'static str),
    #[error("graph is disconnected; smoothing converges only per connected component")]
    Disconnected,
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Adjacency normalization used by the GCN stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `D^{-1} A`
    NonSym,
    /// `D^{-1/2} A D^{-1/2}`
    Sym,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::NonSym => "nonsym",
            Normalization::Sym => "sym",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nonsym" | "non-sym" => Some(Normalization::NonSym),
            "sym" => Some(Normalization::Sym),
            _ => None,
        }
    }
}

/// A normalized adjacency together with its transpose, which the backward
/// pass needs for the adjoint propagation.
#[derive(Debug, Clone)]
pub struct GraphOperator {
    mat: SparseMatrix,
    mat_t: SparseMatrix,
}

impl GraphOperator {
    /// Wraps an adjacency that is already normalized.
    pub fn from_normalized(mat: SparseMatrix) -> Self {
        let mat_t = mat.transpose();
        Self { mat, mat_t }
    }

    /// Normalizes a raw adjacency and wraps it.
    pub fn normalize(adj: &SparseMatrix, norm: Normalization) -> Result<Self, SparseError> {
        let mat = match norm {
            Normalization::NonSym => adj.row_normalize()?,
            Normalization::Sym => adj.sym_normalize()?,
        };
        Ok(Self::from_normalized(mat))
    }

    pub fn node_count(&self) -> usize {
        self.mat.n_rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.mat
    }

    pub fn propagate(
        &self,
        x: &crate::sparse::DenseMatrix,
    ) -> Result<crate::sparse::DenseMatrix, SparseError> {
        self.mat.spmm(x)
    }

    /// Multiplies by the transpose; the adjoint of `propagate`.
    pub fn propagate_adjoint(
        &self,
        g: &crate::sparse::DenseMatrix,
    ) -> Result<crate::sparse::DenseMatrix, SparseError> {
        self.mat_t.spmm(g)
    }
}

/// Row-normalized hop buckets plus the row-normalized dense union for one
/// propagation phase. Weighted propagation uses the buckets, unweighted
/// propagation the union.
#[derive(Debug, Clone)]
pub struct PhaseOperator {
    buckets: Vec<GraphOperator>,
    union: GraphOperator,
}

impl PhaseOperator {
    /// Builds the phase operator from a k-hop decomposition.
    pub fn from_decomposition(kh: &KHopAdjacency) -> Result<Self, SparseError> {
        let buckets = kh
            .buckets()
            .iter()
            .map(|b| Ok(GraphOperator::from_normalized(b.row_normalize()?)))
            .collect::<Result<Vec<_>, SparseError>>()?;
        let union = GraphOperator::from_normalized(kh.dense_union().row_normalize()?);
        Ok(Self { buckets, union })
    }

    /// Merges two decompositions bucket-by-bucket into one symmetric phase
    /// operator. In a DAG the strict ancestor and descendant pairs are
    /// disjoint, so the union per hop count is well defined.
    pub fn merged(a: &KHopAdjacency, b: &KHopAdjacency) -> Result<Self, SparseError> {
        assert_eq!(a.hop_cap(), b.hop_cap(), "hop caps differ");
        let buckets = a
            .buckets()
            .iter()
            .zip(b.buckets())
            .map(|(x, y)| {
                let merged = x.pattern_union(y)?;
                Ok(GraphOperator::from_normalized(merged.row_normalize()?))
            })
            .collect::<Result<Vec<_>, SparseError>>()?;
        let union =
            GraphOperator::from_normalized(a.dense_union().pattern_union(&b.dense_union())?.row_normalize()?);
        Ok(Self { buckets, union })
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn node_count(&self) -> usize {
        self.union.node_count()
    }

    pub fn buckets(&self) -> &[GraphOperator] {
        &self.buckets
    }

    pub fn union(&self) -> &GraphOperator {
        &self.union
    }
}
