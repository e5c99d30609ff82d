//! Empirical demonstrator of repeated-averaging smoothing.
//!
//! Iterating `x <- D^{-1} A x` on a connected self-looped graph drives every
//! row toward a common value: each new row is a convex combination of the old
//! rows, so the row set's diameter never grows, and on a connected aperiodic
//! graph it collapses. The trajectory of that diameter makes the depth
//! argument against deep propagation stacks measurable.

use super::PropagationError;
use crate::sparse::{DenseMatrix, SparseMatrix};

/// Runs `steps` propagation steps and reports the maximum pairwise
/// Euclidean distance between rows after each step.
///
/// The adjacency must be square and connected; a matrix with no off-diagonal
/// entries is accepted as the degenerate no-mixing case. Disconnected inputs
/// are rejected since the dispersion only converges per connected component.
pub fn smoothing_trajectory(
    a: &SparseMatrix,
    x: &DenseMatrix,
    steps: usize,
) -> Result<Vec<f64>, PropagationError> {
    if a.n_rows() != a.n_cols() {
        return Err(crate::sparse::SparseError::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        }
        .into());
    }
    if x.n_rows() != a.n_rows() {
        return Err(PropagationError::NodeCountMismatch {
            expected: a.n_rows(),
            found: x.n_rows(),
        });
    }
    if !is_connected_ignoring_self_loops(a) {
        return Err(PropagationError::Disconnected);
    }
    let propagator = a.row_normalize()?;
    let mut current = x.clone();
    let mut trajectory = Vec::with_capacity(steps);
    for _ in 0..steps {
        current = propagator.spmm(&current)?;
        trajectory.push(row_dispersion(&current));
    }
    Ok(trajectory)
}

/// Maximum pairwise Euclidean distance between rows.
pub fn row_dispersion(x: &DenseMatrix) -> f64 {
    let mut max = 0.0f64;
    for i in 0..x.n_rows() {
        for j in (i + 1)..x.n_rows() {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            max = max.max(d.sqrt());
        }
    }
    max
}

/// Connectivity over the off-diagonal pattern. A matrix whose every stored
/// entry sits on the diagonal counts as connected here (pure self-loops,
/// nothing mixes).
fn is_connected_ignoring_self_loops(a: &SparseMatrix) -> bool {
    let n = a.n_rows();
    if n <= 1 {
        return true;
    }
    let mut neighbors = vec![Vec::new(); n];
    let mut has_off_diagonal = false;
    for (r, c, _) in a.iter_entries() {
        if r != c {
            neighbors[r].push(c);
            neighbors[c].push(r);
            has_off_diagonal = true;
        }
    }
    if !has_off_diagonal {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &neighbors[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_adjacency_dispersion_is_constant() {
        let a = SparseMatrix::identity(4);
        let x = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0, 2.0],
            vec![-1.0, 3.0],
        ]);
        let d0 = row_dispersion(&x);
        let traj = smoothing_trajectory(&a, &x, 50).unwrap();
        for &d in &traj {
            assert_eq!(d, d0);
        }
    }

    #[test]
    fn complete_graph_collapses_in_one_step() {
        let n = 5;
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                triplets.push((i, j, 1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let x = DenseMatrix::from_vec(n, 3, (0..15).map(|i| i as f64).collect());
        let traj = smoothing_trajectory(&a, &x, 3).unwrap();
        assert!(traj[0] < 1e-14);
    }

    #[test]
    fn disconnected_graph_rejected() {
        // Two 2-cliques with self-loops.
        let triplets = [
            (0, 0, 1.0),
            (1, 1, 1.0),
            (2, 2, 1.0),
            (3, 3, 1.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (2, 3, 1.0),
            (3, 2, 1.0),
        ];
        let a = SparseMatrix::from_triplets(4, 4, &triplets).unwrap();
        let x = DenseMatrix::zeros(4, 2);
        assert!(matches!(
            smoothing_trajectory(&a, &x, 5),
            Err(PropagationError::Disconnected)
        ));
    }
}
