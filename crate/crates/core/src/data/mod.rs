//! File formats and synthetic data generation.
//!
//! All on-disk formats are UTF-8 text with LF line endings. Floating-point
//! values are written with 17 significant digits, which round-trips 64-bit
//! floats exactly. Loaders reject malformed input rather than truncating,
//! and every rejection carries a location.

mod checkpoint;
mod io;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use io::{
    format_f64, load_edge_list, load_features, load_table, save_edge_list, save_table,
};
pub use synth::{synth_hierarchy, synth_task, SynthSpec, SynthTask};

use thiserror::Error;

use crate::propagation::l2_normalize_rows;
use crate::sparse::DenseMatrix;
use crate::taxonomy::TaxonomyDag;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: no data lines")]
    EmptyFile { path: String },
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: expected {expected} values, found {found}")]
    WrongArity {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: non-numeric or non-finite token {token:?}")]
    BadNumber {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: duplicate identifier {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: unknown class identifier {id:?}")]
    UnknownId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}: declared {declared} rows, found {found}")]
    RowCountMismatch {
        path: String,
        declared: usize,
        found: usize,
    },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("synthetic split too small: {seen} seen, {unseen} unseen")]
    SplitTooSmall { seen: usize, unseen: usize },
    #[error("identifier set does not match the graph: {0}")]
    IdMismatch(String),
}

/// Per-node semantic vectors, one row per graph node.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    node_ids: Vec<String>,
    matrix: DenseMatrix,
}

impl EmbeddingTable {
    pub fn new(node_ids: Vec<String>, matrix: DenseMatrix) -> Self {
        assert_eq!(node_ids.len(), matrix.n_rows(), "one row per identifier");
        Self { node_ids, matrix }
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// Rows reordered to the graph's node order. The identifier sets must
    /// match exactly.
    pub fn aligned_to(&self, dag: &TaxonomyDag) -> Result<DenseMatrix, DataError> {
        aligned_rows(&self.node_ids, &self.matrix, dag)
    }
}

/// Ground-truth classifier rows for the seen classes, L2-normalized.
#[derive(Debug, Clone)]
pub struct ClassifierWeights {
    node_ids: Vec<String>,
    matrix: DenseMatrix,
}

impl ClassifierWeights {
    /// Normalizes the rows on construction.
    pub fn new(node_ids: Vec<String>, matrix: DenseMatrix) -> Self {
        assert_eq!(node_ids.len(), matrix.n_rows(), "one row per identifier");
        Self {
            node_ids,
            matrix: l2_normalize_rows(&matrix),
        }
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// Graph node index of each weight row, in file order.
    pub fn node_indices(&self, dag: &TaxonomyDag) -> Result<Vec<usize>, DataError> {
        self.node_ids
            .iter()
            .map(|id| {
                dag.index_of(id).ok_or_else(|| DataError::IdMismatch(format!(
                    "weight row for {id:?} has no graph node"
                )))
            })
            .collect()
    }
}

fn aligned_rows(
    ids: &[String],
    matrix: &DenseMatrix,
    dag: &TaxonomyDag,
) -> Result<DenseMatrix, DataError> {
    if ids.len() != dag.node_count() {
        return Err(DataError::IdMismatch(format!(
            "{} rows for {} graph nodes",
            ids.len(),
            dag.node_count()
        )));
    }
    let mut out = DenseMatrix::zeros(matrix.n_rows(), matrix.n_cols());
    let mut placed = vec![false; dag.node_count()];
    for (row, id) in ids.iter().enumerate() {
        let node = dag
            .index_of(id)
            .ok_or_else(|| DataError::IdMismatch(format!("row for {id:?} has no graph node")))?;
        if placed[node] {
            return Err(DataError::IdMismatch(format!("duplicate row for {id:?}")));
        }
        placed[node] = true;
        out.row_mut(node).copy_from_slice(matrix.row(row));
    }
    Ok(out)
}
