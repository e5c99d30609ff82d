//! Top-k classification with predicted classifier rows and Hit@k scoring
//! under the unseen-only and generalized protocols.
//!
//! A classifier row has P entries: P-1 weights plus a trailing bias. The
//! logit for class c is `dot(weights_c, feature) + bias_c`. Generalized
//! evaluation keeps the ground-truth classifiers for seen classes and adds
//! the predicted rows for unseen classes as new outputs.

use thiserror::Error;

use crate::sparse::DenseMatrix;
use crate::training::SeenMask;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ZeroshotError {
    #[error("k = {k} exceeds the {candidates} candidate classes")]
    KTooLarge { k: usize, candidates: usize },
    #[error("classifier width {classifier_width} does not fit feature width {feature_width} plus bias")]
    FeatureWidthMismatch {
        classifier_width: usize,
        feature_width: usize,
    },
    #[error("{features} feature rows but {labels} labels")]
    LabelCountMismatch { features: usize, labels: usize },
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("candidate class {0} listed twice")]
    DuplicateCandidate(usize),
    #[error("class {0} appears in both the seen set and the unseen candidate list")]
    SeenUnseenOverlap(usize),
    #[error("label {0} is not in the candidate set")]
    LabelNotInCandidates(usize),
    #[error("predicted width {predicted} differs from ground-truth width {truth}")]
    ClassifierWidthMismatch { predicted: usize, truth: usize },
}

/// Feature vectors with one class label per example.
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    features: DenseMatrix,
    labels: Vec<usize>,
}

impl FeatureBatch {
    pub fn new(features: DenseMatrix, labels: Vec<usize>) -> Result<Self, ZeroshotError> {
        if features.n_rows() != labels.len() {
            return Err(ZeroshotError::LabelCountMismatch {
                features: features.n_rows(),
                labels: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Candidate set and scoring mode for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Score against predicted classifiers of the unseen candidates only.
    UnseenOnly,
    /// Score against ground-truth seen classifiers plus predicted unseen ones.
    Generalized,
}

#[derive(Debug, Clone)]
pub struct EvalProtocol {
    /// Unseen candidate classes, as graph node indices.
    pub candidate_classes: Vec<usize>,
    pub mode: EvalMode,
    pub k_values: Vec<usize>,
}

impl EvalProtocol {
    pub fn new(candidate_classes: Vec<usize>, mode: EvalMode) -> Result<Self, ZeroshotError> {
        Self::with_k_values(candidate_classes, mode, vec![1, 2, 5, 10, 20])
    }

    pub fn with_k_values(
        candidate_classes: Vec<usize>,
        mode: EvalMode,
        k_values: Vec<usize>,
    ) -> Result<Self, ZeroshotError> {
        if candidate_classes.is_empty() {
            return Err(ZeroshotError::EmptyCandidates);
        }
        let mut sorted = candidate_classes.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(ZeroshotError::DuplicateCandidate(w[0]));
            }
        }
        Ok(Self {
            candidate_classes,
            mode,
            k_values,
        })
    }
}

/// Hit@k percentages, one row per requested k.
#[derive(Debug, Clone, PartialEq)]
pub struct HitReport {
    pub rows: Vec<(usize, f64)>,
}

impl HitReport {
    pub fn hit_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|&&(rk, _)| rk == k).map(|&(_, p)| p)
    }

    /// CSV with header `k,hit_percent` and two decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,hit_percent\n");
        for &(k, pct) in &self.rows {
            out.push_str(&format!("{k},{pct:.2}\n"));
        }
        out
    }
}

/// Top-k candidate rows per example, by descending logit with ties broken by
/// ascending row index. Row c of `classifiers` scores candidate c.
pub fn classify_topk(
    classifiers: &DenseMatrix,
    batch: &FeatureBatch,
    k: usize,
) -> Result<Vec<Vec<usize>>, ZeroshotError> {
    let candidates = classifiers.n_rows();
    if k > candidates {
        return Err(ZeroshotError::KTooLarge { k, candidates });
    }
    let p = classifiers.n_cols();
    let feature_width = batch.features().n_cols();
    if p != feature_width + 1 {
        return Err(ZeroshotError::FeatureWidthMismatch {
            classifier_width: p,
            feature_width,
        });
    }
    let mut results = Vec::with_capacity(batch.len());
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(candidates);
    for ex in 0..batch.len() {
        let feature = batch.features().row(ex);
        scored.clear();
        for c in 0..candidates {
            let row = classifiers.row(c);
            let logit: f64 =
                row[..p - 1].iter().zip(feature).map(|(&w, &f)| w * f).sum::<f64>() + row[p - 1];
            scored.push((logit, c));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        results.push(scored[..k].iter().map(|&(_, c)| c).collect());
    }
    Ok(results)
}

/// Fraction of examples whose label appears in their top-k prefix, as a
/// percentage. Lists shorter than k are used whole.
pub fn hit_at_k(
    topk: &[Vec<usize>],
    labels: &[usize],
    k_values: &[usize],
) -> Result<HitReport, ZeroshotError> {
    if topk.len() != labels.len() {
        return Err(ZeroshotError::LabelCountMismatch {
            features: topk.len(),
            labels: labels.len(),
        });
    }
    let rows = k_values
        .iter()
        .map(|&k| {
            let hits = topk
                .iter()
                .zip(labels)
                .filter(|(list, &label)| list[..k.min(list.len())].contains(&label))
                .count();
            let pct = if labels.is_empty() {
                0.0
            } else {
                100.0 * hits as f64 / labels.len() as f64
            };
            (k, pct)
        })
        .collect();
    Ok(HitReport { rows })
}

/// Scores a feature batch under the protocol.
///
/// `predicted` holds one predicted classifier per graph node; `true_seen`
/// holds the ground-truth classifiers in mask order. Unseen-only mode uses
/// predicted rows of the candidate classes; generalized mode extends the
/// ground-truth seen classifiers with the predicted unseen rows.
pub fn generalized_eval(
    predicted: &DenseMatrix,
    true_seen: &DenseMatrix,
    mask: &SeenMask,
    batch: &FeatureBatch,
    protocol: &EvalProtocol,
) -> Result<HitReport, ZeroshotError> {
    if predicted.n_cols() != true_seen.n_cols() {
        return Err(ZeroshotError::ClassifierWidthMismatch {
            predicted: predicted.n_cols(),
            truth: true_seen.n_cols(),
        });
    }
    for &c in &protocol.candidate_classes {
        if mask.contains(c) {
            return Err(ZeroshotError::SeenUnseenOverlap(c));
        }
    }

    // Candidate classes in ascending node order so that row order and
    // class order agree; tie-breaking is then deterministic in class index.
    let mut classes: Vec<usize> = protocol.candidate_classes.clone();
    if protocol.mode == EvalMode::Generalized {
        classes.extend_from_slice(mask.indices());
    }
    classes.sort_unstable();

    let p = predicted.n_cols();
    let mut rows = Vec::with_capacity(classes.len() * p);
    for &c in &classes {
        match mask.indices().iter().position(|&m| m == c) {
            Some(row_in_mask) => rows.extend_from_slice(true_seen.row(row_in_mask)),
            None => rows.extend_from_slice(predicted.row(c)),
        }
    }
    let classifiers = DenseMatrix::from_vec(classes.len(), p, rows);

    let mut row_labels = Vec::with_capacity(batch.len());
    for &label in batch.labels() {
        let row = classes
            .binary_search(&label)
            .map_err(|_| ZeroshotError::LabelNotInCandidates(label))?;
        row_labels.push(row);
    }

    let max_k = protocol.k_values.iter().copied().max().unwrap_or(1);
    let topk = classify_topk(&classifiers, batch, max_k.min(classes.len()))?;
    hit_at_k(&topk, &row_labels, &protocol.k_values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[Vec<f64>], labels: Vec<usize>) -> FeatureBatch {
        FeatureBatch::new(DenseMatrix::from_rows(rows), labels).unwrap()
    }

    #[test]
    fn single_candidate_always_rank_one() {
        let classifiers = DenseMatrix::from_rows(&[vec![0.3, -0.4, 0.1]]);
        let b = batch(&[vec![1.0, 2.0], vec![-5.0, 0.0]], vec![0, 0]);
        let topk = classify_topk(&classifiers, &b, 1).unwrap();
        assert_eq!(topk, vec![vec![0], vec![0]]);
    }

    #[test]
    fn axis_aligned_classifiers_hand_logits() {
        let classifiers = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let b = batch(&[vec![1.0, 0.0]], vec![0]);
        let topk = classify_topk(&classifiers, &b, 2).unwrap();
        assert_eq!(topk[0], vec![0, 1]);
    }

    #[test]
    fn ties_break_by_ascending_index() {
        let classifiers = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let b = batch(&[vec![7.0]], vec![0]);
        let topk = classify_topk(&classifiers, &b, 3).unwrap();
        assert_eq!(topk[0], vec![0, 1, 2]);
    }

    #[test]
    fn k_larger_than_candidates_rejected() {
        let classifiers = DenseMatrix::from_rows(&[vec![0.0, 0.0]]);
        let b = batch(&[vec![1.0]], vec![0]);
        assert!(matches!(
            classify_topk(&classifiers, &b, 2),
            Err(ZeroshotError::KTooLarge { .. })
        ));
    }

    #[test]
    fn hit_at_k_rank_three() {
        // True label always at rank 3.
        let topk = vec![vec![4, 2, 0, 1, 3]; 10];
        let labels = vec![0; 10];
        let report = hit_at_k(&topk, &labels, &[1, 2, 5]).unwrap();
        assert_eq!(report.hit_at(1), Some(0.0));
        assert_eq!(report.hit_at(2), Some(0.0));
        assert_eq!(report.hit_at(5), Some(100.0));
    }

    #[test]
    fn all_correct_gives_hundred_everywhere() {
        let topk = vec![vec![1, 0], vec![0, 1]];
        let labels = vec![1, 0];
        let report = hit_at_k(&topk, &labels, &[1, 2]).unwrap();
        assert_eq!(report.hit_at(1), Some(100.0));
        assert_eq!(report.hit_at(2), Some(100.0));
    }

    #[test]
    fn generalized_with_no_unseen_candidates_is_rejected_overlap_checked() {
        // Overlap between candidates and seen set is an error.
        let predicted = DenseMatrix::zeros(3, 3);
        let truth = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0]]);
        let mask = SeenMask::new(vec![0], 3).unwrap();
        let b = batch(&[vec![1.0, 0.0]], vec![0]);
        let protocol = EvalProtocol::new(vec![0, 1], EvalMode::Generalized).unwrap();
        assert!(matches!(
            generalized_eval(&predicted, &truth, &mask, &b, &protocol),
            Err(ZeroshotError::SeenUnseenOverlap(0))
        ));
    }

    #[test]
    fn csv_has_two_decimal_places() {
        let report = HitReport {
            rows: vec![(1, 33.333333), (5, 100.0)],
        };
        assert_eq!(report.to_csv(), "k,hit_percent\n1,33.33\n5,100.00\n");
    }
}
