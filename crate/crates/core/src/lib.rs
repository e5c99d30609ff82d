//! Graph-propagation models for zero-shot classifier-weight regression.
//!
//! A knowledge-graph hierarchy connects seen and unseen classes; a
//! propagation model maps per-class semantic embeddings to classifier weight
//! rows, supervised only on the seen classes. Two architectures are
//! provided: an L-layer GCN baseline and a two-phase dense propagation model
//! that connects every node directly to all of its ancestors and descendants
//! with learned per-distance weights.
//!
//! The crates' pieces:
//!
//! - [`sparse`]: CSR kernels and dense matrices.
//! - [`taxonomy`]: the class DAG and its k-hop decomposition.
//! - [`propagation`]: forward/backward passes, activations, smoothing
//!   demonstrator.
//! - [`training`]: masked regression loss, Adam, the training loop.
//! - [`zeroshot`]: top-k classification and Hit@k protocols.
//! - [`data`]: file formats and the synthetic task generator.

pub mod data;
pub mod propagation;
pub mod sparse;
pub mod taxonomy;
pub mod training;
pub mod zeroshot;

pub use data::DataError;
pub use propagation::PropagationError;
pub use sparse::SparseError;
pub use taxonomy::TaxonomyError;
pub use training::TrainingError;
pub use zeroshot::ZeroshotError;
