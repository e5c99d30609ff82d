//! Synthetic hierarchy and task generation for desk-scale experiments.
//!
//! Ground-truth classifiers diffuse down the hierarchy (child = mean of
//! parents plus noise), so targets are graph-smooth by construction.
//! Embeddings are a fixed random linear image of the classifiers plus noise,
//! and features cluster around a scaled copy of their class's weight part.
//! Everything is a pure function of the spec, including its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{ClassifierWeights, DataError, EmbeddingTable};
use crate::propagation::l2_normalize_rows;
use crate::sparse::DenseMatrix;
use crate::taxonomy::TaxonomyDag;
use crate::training::SeenMask;
use crate::zeroshot::FeatureBatch;

/// Multiplier applied to a class's weight part when sampling its features.
const FEATURE_SIGNAL_SCALE: f64 = 4.0;

/// Parameters of the synthetic hierarchy and task.
#[derive(Debug, Clone, Serialize)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub max_depth: usize,
    /// Probability that a node gets a second, strictly shallower parent.
    pub multi_parent_prob: f64,
    pub seed: u64,
    /// Embedding width S.
    pub embedding_dim: usize,
    /// Classifier width P (weights plus trailing bias).
    pub classifier_dim: usize,
    pub examples_per_class: usize,
    /// Scale of the Gaussian step from parent mean to child classifier.
    pub classifier_noise: f64,
    pub embedding_noise: f64,
    pub feature_noise: f64,
    /// Fraction of nodes held out as unseen, taken from the deepest leaves.
    /// `None` holds out exactly the maximum-depth leaves.
    pub unseen_fraction: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            max_depth: 6,
            multi_parent_prob: 0.05,
            seed: 0,
            embedding_dim: 16,
            classifier_dim: 17,
            examples_per_class: 50,
            classifier_noise: 0.35,
            embedding_noise: 0.3,
            feature_noise: 0.25,
            unseen_fraction: Some(0.2),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_nodes == 0 {
            return Err(DataError::InvalidSpec("n must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(DataError::InvalidSpec("depth must be at least 1".into()));
        }
        if self.embedding_dim == 0 || self.classifier_dim < 2 {
            return Err(DataError::InvalidSpec(
                "s must be at least 1 and p at least 2 (weights plus bias)".into(),
            ));
        }
        if self.examples_per_class == 0 {
            return Err(DataError::InvalidSpec("expc must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.multi_parent_prob) {
            return Err(DataError::InvalidSpec("multi must lie in [0, 1]".into()));
        }
        for (name, v) in [
            ("cnoise", self.classifier_noise),
            ("enoise", self.embedding_noise),
            ("fnoise", self.feature_noise),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(DataError::InvalidSpec(format!("{name} must be non-negative")));
            }
        }
        if let Some(f) = self.unseen_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(DataError::InvalidSpec("unseen must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// Parses a comma-separated `key=value` spec string, e.g.
    /// `n=100,depth=5,expc=20,unseen=0.2`. Unset keys keep their defaults.
    pub fn parse(spec: &str) -> Result<Self, DataError> {
        let mut out = Self::default();
        if spec.trim().is_empty() {
            return Ok(out);
        }
        for token in spec.split(',') {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                DataError::InvalidSpec(format!("expected key=value, got {token:?}"))
            })?;
            let bad = |k: &str| DataError::InvalidSpec(format!("bad value for {k:?}"));
            match key.trim() {
                "n" => out.n_nodes = value.parse().map_err(|_| bad(key))?,
                "depth" => out.max_depth = value.parse().map_err(|_| bad(key))?,
                "multi" => out.multi_parent_prob = value.parse().map_err(|_| bad(key))?,
                "seed" => out.seed = value.parse().map_err(|_| bad(key))?,
                "s" => out.embedding_dim = value.parse().map_err(|_| bad(key))?,
                "p" => out.classifier_dim = value.parse().map_err(|_| bad(key))?,
                "expc" => out.examples_per_class = value.parse().map_err(|_| bad(key))?,
                "cnoise" => out.classifier_noise = value.parse().map_err(|_| bad(key))?,
                "enoise" => out.embedding_noise = value.parse().map_err(|_| bad(key))?,
                "fnoise" => out.feature_noise = value.parse().map_err(|_| bad(key))?,
                "unseen" => out.unseen_fraction = Some(value.parse().map_err(|_| bad(key))?),
                other => {
                    return Err(DataError::InvalidSpec(format!("unknown key {other:?}")));
                }
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Everything one desk-scale experiment needs, aligned with the DAG order.
#[derive(Debug, Clone)]
pub struct SynthTask {
    pub embeddings: EmbeddingTable,
    pub seen_weights: ClassifierWeights,
    pub seen_features: FeatureBatch,
    pub unseen_features: FeatureBatch,
    pub mask: SeenMask,
    /// The generator's full ground truth, one unit row per node.
    pub true_classifiers: DenseMatrix,
}

/// Grows a random rooted DAG: a tree built by uniform attachment, plus
/// optional extra parent edges toward strictly shallower nodes.
pub fn synth_hierarchy(spec: &SynthSpec) -> Result<TaxonomyDag, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_nodes;
    let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut depth = vec![0usize; n];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for child in 1..n {
        let candidates: Vec<usize> = (0..child).filter(|&j| depth[j] < spec.max_depth).collect();
        let parent = candidates[rng.random_range(0..candidates.len())];
        depth[child] = depth[parent] + 1;
        edges.push((child, parent));
        if rng.random::<f64>() < spec.multi_parent_prob {
            let shallower: Vec<usize> = (0..child)
                .filter(|&j| j != parent && depth[j] < depth[child])
                .collect();
            if !shallower.is_empty() {
                let extra = shallower[rng.random_range(0..shallower.len())];
                edges.push((child, extra));
            }
        }
    }
    TaxonomyDag::new(ids, edges).map_err(|e| DataError::InvalidSpec(e.to_string()))
}

/// Generates embeddings, ground-truth classifiers, the seen/unseen split,
/// and feature batches for both splits.
pub fn synth_task(dag: &TaxonomyDag, spec: &SynthSpec) -> Result<SynthTask, DataError> {
    spec.validate()?;
    let n = dag.node_count();
    let p = spec.classifier_dim;
    let s = spec.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_DA7A);

    // Hierarchical diffusion of the raw classifiers in topological order.
    let mut raw = DenseMatrix::zeros(n, p);
    for node in dag.topological_order() {
        let parents = dag.parents_of(node);
        let mut row = vec![0.0; p];
        if parents.is_empty() {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        } else {
            for &parent in parents {
                for (v, &pv) in row.iter_mut().zip(raw.row(parent)) {
                    *v += pv;
                }
            }
            let inv = 1.0 / parents.len() as f64;
            for v in row.iter_mut() {
                let step: f64 = rng.sample(StandardNormal);
                *v = *v * inv + spec.classifier_noise * step;
            }
        }
        raw.row_mut(node).copy_from_slice(&row);
    }
    let truth = l2_normalize_rows(&raw);

    // Fixed random linear map P -> S, then embedding noise.
    let map_scale = 1.0 / (p as f64).sqrt();
    let map = {
        let data = (0..p * s)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * map_scale)
            .collect();
        DenseMatrix::from_vec(p, s, data)
    };
    let mut embeddings = truth.matmul(&map);
    for v in embeddings.data_mut() {
        let step: f64 = rng.sample(StandardNormal);
        *v += spec.embedding_noise * step;
    }

    let (seen, _unseen) = split_unseen(dag, spec)?;
    let mask = SeenMask::new(seen.clone(), n).map_err(|e| DataError::InvalidSpec(e.to_string()))?;

    // Feature batches, one cluster per class in ascending node order.
    let mut seen_rows = Vec::new();
    let mut seen_labels = Vec::new();
    let mut unseen_rows = Vec::new();
    let mut unseen_labels = Vec::new();
    for node in 0..n {
        let is_seen = mask.contains(node);
        let weights = &truth.row(node)[..p - 1];
        for _ in 0..spec.examples_per_class {
            let feature: Vec<f64> = weights
                .iter()
                .map(|&w| {
                    let step: f64 = rng.sample(StandardNormal);
                    FEATURE_SIGNAL_SCALE * w + spec.feature_noise * step
                })
                .collect();
            if is_seen {
                seen_rows.push(feature);
                seen_labels.push(node);
            } else {
                unseen_rows.push(feature);
                unseen_labels.push(node);
            }
        }
    }
    let seen_features = FeatureBatch::new(DenseMatrix::from_rows(&seen_rows), seen_labels)
        .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let unseen_features = FeatureBatch::new(DenseMatrix::from_rows(&unseen_rows), unseen_labels)
        .map_err(|e| DataError::InvalidSpec(e.to_string()))?;

    let node_ids = dag.node_ids().to_vec();
    let seen_ids: Vec<String> = seen.iter().map(|&i| node_ids[i].clone()).collect();
    let seen_matrix = {
        let mut m = DenseMatrix::zeros(seen.len(), p);
        for (row, &node) in seen.iter().enumerate() {
            m.row_mut(row).copy_from_slice(truth.row(node));
        }
        m
    };
    Ok(SynthTask {
        embeddings: EmbeddingTable::new(node_ids, embeddings),
        seen_weights: ClassifierWeights::new(seen_ids, seen_matrix),
        seen_features,
        unseen_features,
        mask,
        true_classifiers: truth,
    })
}

/// Unseen classes are the deepest leaves: either all leaves at maximum
/// observed depth, or the requested fraction of nodes taken from the leaves
/// in order of decreasing depth.
fn split_unseen(dag: &TaxonomyDag, spec: &SynthSpec) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    let n = dag.node_count();
    let depths = dag.depths();
    let mut leaves = dag.leaves();
    let mut unseen: Vec<usize> = match spec.unseen_fraction {
        Some(fraction) => {
            let want = ((fraction * n as f64).round() as usize).max(1);
            leaves.sort_by(|&a, &b| depths[b].cmp(&depths[a]).then(a.cmp(&b)));
            leaves.truncate(want.min(leaves.len()));
            leaves
        }
        None => {
            let max_depth = depths.iter().copied().max().unwrap_or(0);
            leaves.retain(|&i| depths[i] == max_depth);
            leaves
        }
    };
    unseen.sort_unstable();
    let unseen_set: std::collections::HashSet<usize> = unseen.iter().copied().collect();
    let seen: Vec<usize> = (0..n).filter(|i| !unseen_set.contains(i)).collect();
    if seen.len() < 2 || unseen.is_empty() {
        return Err(DataError::SplitTooSmall {
            seen: seen.len(),
            unseen: unseen.len(),
        });
    }
    Ok((seen, unseen))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_hierarchy() {
        let spec = SynthSpec {
            n_nodes: 1,
            ..SynthSpec::default()
        };
        let dag = synth_hierarchy(&spec).unwrap();
        assert_eq!(dag.node_count(), 1);
        assert!(dag.edges().is_empty());
    }

    #[test]
    fn hierarchy_is_deterministic() {
        let spec = SynthSpec {
            n_nodes: 40,
            seed: 123,
            ..SynthSpec::default()
        };
        let a = synth_hierarchy(&spec).unwrap();
        let b = synth_hierarchy(&spec).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.node_ids(), b.node_ids());
    }

    #[test]
    fn hierarchy_respects_max_depth() {
        let spec = SynthSpec {
            n_nodes: 60,
            max_depth: 3,
            seed: 7,
            ..SynthSpec::default()
        };
        let dag = synth_hierarchy(&spec).unwrap();
        assert!(dag.depths().iter().all(|&d| d <= 3));
    }

    #[test]
    fn task_split_is_valid_and_deterministic() {
        let spec = SynthSpec {
            n_nodes: 50,
            examples_per_class: 3,
            seed: 11,
            ..SynthSpec::default()
        };
        let dag = synth_hierarchy(&spec).unwrap();
        let a = synth_task(&dag, &spec).unwrap();
        let b = synth_task(&dag, &spec).unwrap();
        assert_eq!(a.embeddings.matrix().data(), b.embeddings.matrix().data());
        assert_eq!(a.mask.indices(), b.mask.indices());
        assert!(a.mask.len() >= 2);
        assert!(!a.mask.complement().is_empty());
        assert_eq!(
            a.unseen_features.len(),
            a.mask.complement().len() * spec.examples_per_class
        );
    }

    #[test]
    fn too_small_split_rejected() {
        // Two nodes: one leaf unseen leaves only one seen class.
        let spec = SynthSpec {
            n_nodes: 2,
            ..SynthSpec::default()
        };
        let dag = synth_hierarchy(&spec).unwrap();
        assert!(matches!(
            synth_task(&dag, &spec),
            Err(DataError::SplitTooSmall { .. })
        ));
    }

    #[test]
    fn spec_string_parsing() {
        let spec = SynthSpec::parse("n=60,depth=4,expc=10,unseen=0.3,seed=42").unwrap();
        assert_eq!(spec.n_nodes, 60);
        assert_eq!(spec.max_depth, 4);
        assert_eq!(spec.examples_per_class, 10);
        assert_eq!(spec.unseen_fraction, Some(0.3));
        assert_eq!(spec.seed, 42);
        assert!(SynthSpec::parse("bogus").is_err());
        assert!(SynthSpec::parse("n=0").is_err());
    }
}
