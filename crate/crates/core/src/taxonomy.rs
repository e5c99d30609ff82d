//! Class-hierarchy DAG and its k-hop ancestor/descendant decomposition.
//!
//! Nodes are classes, directed edges point child -> parent. The decomposition
//! splits reachability into per-distance adjacency buckets: bucket 0 holds the
//! self-loops, bucket k the pairs at hierarchy distance exactly k, and the
//! final bucket K absorbs every pair at distance K or more. Distances are
//! shortest paths over parent edges (ancestor direction) or child edges
//! (descendant direction), computed on the hierarchy itself, not on the dense
//! graph.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::sparse::{SparseError, SparseMatrix};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("node identifier {0:?} is empty or contains whitespace")]
    BadIdentifier(String),
    #[error("self-edge on node {0:?}")]
    SelfEdge(String),
    #[error("edge ({child}, {parent}) references node index out of range (node count {n_nodes})")]
    EdgeOutOfRange {
        child: usize,
        parent: usize,
        n_nodes: usize,
    },
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("hop cap K must be at least 1")]
    ZeroHopCap,
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Propagation direction for the k-hop decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Ancestor,
    Descendant,
}

/// Directed acyclic class hierarchy with a fixed node order.
///
/// All matrix row/column indices produced from the graph refer to this order.
#[derive(Debug, Clone)]
pub struct TaxonomyDag {
    node_ids: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl TaxonomyDag {
    /// Builds a DAG from pre-indexed child -> parent edges.
    pub fn new(node_ids: Vec<String>, edges: Vec<(usize, usize)>) -> Result<Self, TaxonomyError> {
        let n = node_ids.len();
        let mut index = HashMap::with_capacity(n);
        for (i, id) in node_ids.iter().enumerate() {
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(TaxonomyError::BadIdentifier(id.clone()));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(TaxonomyError::BadIdentifier(id.clone()));
            }
        }
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut dedup = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::new();
        for &(child, parent) in &edges {
            if child >= n || parent >= n {
                return Err(TaxonomyError::EdgeOutOfRange {
                    child,
                    parent,
                    n_nodes: n,
                });
            }
            if child == parent {
                return Err(TaxonomyError::SelfEdge(node_ids[child].clone()));
            }
            if seen.insert((child, parent)) {
                dedup.push((child, parent));
                parents[child].push(parent);
                children[parent].push(child);
            }
        }
        let dag = Self {
            node_ids,
            index,
            edges: dedup,
            parents,
            children,
        };
        if let Some(cycle) = dag.find_cycle() {
            return Err(TaxonomyError::Cycle(
                cycle.into_iter().map(|i| dag.node_ids[i].clone()).collect(),
            ));
        }
        Ok(dag)
    }

    /// Builds a DAG from (child_id, parent_id) pairs.
    ///
    /// Node order is the order of first appearance in the edge stream;
    /// duplicate edges are dropped.
    pub fn from_edge_pairs<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<Self, TaxonomyError> {
        let mut node_ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |id: &str, node_ids: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(id) {
                return i;
            }
            let i = node_ids.len();
            node_ids.push(id.to_string());
            index.insert(id.to_string(), i);
            i
        };
        let mut edges = Vec::with_capacity(pairs.len());
        for (child, parent) in pairs {
            let c = intern(child.as_ref(), &mut node_ids);
            let p = intern(parent.as_ref(), &mut node_ids);
            edges.push((c, p));
        }
        Self::new(node_ids, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Deduplicated child -> parent edges.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents_of(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children_of(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Nodes with no children.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.children[i].is_empty())
            .collect()
    }

    /// Shortest hop count from each node up to a root (node with no parents).
    pub fn depths(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut depth = vec![usize::MAX; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| self.parents[i].is_empty()).collect();
        for &r in &queue {
            depth[r] = 0;
        }
        while let Some(u) = queue.pop_front() {
            for &c in &self.children[u] {
                if depth[c] == usize::MAX {
                    depth[c] = depth[u] + 1;
                    queue.push_back(c);
                }
            }
        }
        depth
    }

    /// Indices in topological order, parents before children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut remaining: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| remaining[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &self.children[u] {
                remaining[c] -= 1;
                if remaining[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        debug_assert_eq!(order.len(), n);
        order
    }

    /// The undirected hierarchy adjacency with self-loops, as used by the
    /// GCN propagation rule.
    pub fn symmetric_adjacency(&self) -> SparseMatrix {
        let n = self.node_count();
        let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        for &(c, p) in &self.edges {
            triplets.push((c, p, 1.0));
            triplets.push((p, c, 1.0));
        }
        SparseMatrix::from_triplets(n, n, &triplets).expect("indices validated at construction")
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        // Iterative DFS over parent edges with a path stack.
        let n = self.node_count();
        let mut state = vec![0u8; n]; // 0 unvisited, 1 on path, 2 done
        let mut path: Vec<usize> = Vec::new();
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            state[start] = 1;
            path.push(start);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if *next < self.parents[node].len() {
                    let parent = self.parents[node][*next];
                    *next += 1;
                    match state[parent] {
                        0 => {
                            state[parent] = 1;
                            path.push(parent);
                            stack.push((parent, 0));
                        }
                        1 => {
                            let pos = path.iter().position(|&p| p == parent).unwrap();
                            let mut cycle = path[pos..].to_vec();
                            cycle.push(parent);
                            return Some(cycle);
                        }
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    path.pop();
                    stack.pop();
                }
            }
        }
        None
    }
}

/// Per-distance adjacency buckets for one propagation direction.
///
/// `buckets[0]` is the identity, `buckets[k]` holds pairs at distance exactly
/// `k` for `k < K`, and `buckets[K]` absorbs all pairs at distance `K` or
/// further. Bucket patterns are pairwise disjoint.
#[derive(Debug, Clone)]
pub struct KHopAdjacency {
    direction: Direction,
    hop_cap: usize,
    buckets: Vec<SparseMatrix>,
}

impl KHopAdjacency {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// The hop cap K; there are K+1 buckets.
    pub fn hop_cap(&self) -> usize {
        self.hop_cap
    }

    pub fn buckets(&self) -> &[SparseMatrix] {
        &self.buckets
    }

    pub fn node_count(&self) -> usize {
        self.buckets[0].n_rows()
    }

    /// Entrywise union of all buckets with every value 1: the dense
    /// reachability adjacency (self-loops included).
    pub fn dense_union(&self) -> SparseMatrix {
        let n = self.node_count();
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for bucket in &self.buckets {
            triplets.extend(bucket.iter_entries().map(|(r, c, _)| (r, c, 1.0)));
        }
        SparseMatrix::from_triplets(n, n, &triplets).expect("bucket indices in range")
    }
}

/// Decomposes the DAG into K+1 per-distance adjacency buckets.
pub fn khop_decompose(
    dag: &TaxonomyDag,
    hop_cap: usize,
    direction: Direction,
) -> Result<KHopAdjacency, TaxonomyError> {
    if hop_cap == 0 {
        return Err(TaxonomyError::ZeroHopCap);
    }
    let n = dag.node_count();
    let mut bucket_triplets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); hop_cap + 1];
    bucket_triplets[0] = (0..n).map(|i| (i, i, 1.0)).collect();

    let mut dist = vec![usize::MAX; n];
    let mut touched: Vec<usize> = Vec::new();
    for source in 0..n {
        // BFS along parent edges (ancestor) or child edges (descendant).
        touched.clear();
        dist[source] = 0;
        touched.push(source);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let next = match direction {
                Direction::Ancestor => dag.parents_of(u),
                Direction::Descendant => dag.children_of(u),
            };
            for &v in next {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    touched.push(v);
                    queue.push_back(v);
                }
            }
        }
        for &v in &touched {
            let d = dist[v];
            if d > 0 {
                bucket_triplets[d.min(hop_cap)].push((source, v, 1.0));
            }
            dist[v] = usize::MAX;
        }
    }

    let buckets = bucket_triplets
        .into_iter()
        .map(|t| SparseMatrix::from_triplets(n, n, &t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KHopAdjacency {
        direction,
        hop_cap,
        buckets,
    })
}

/// Density figures comparing the hierarchy adjacency to the dense
/// reachability adjacency, both with self-loops.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub hierarchy_density: f64,
    pub dense_density: f64,
    pub density_ratio: f64,
}

impl std::fmt::Display for GraphStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "nodes: {}", self.n_nodes)?;
        writeln!(f, "edges: {}", self.n_edges)?;
        writeln!(f, "hierarchy_density: {:.6e}", self.hierarchy_density)?;
        writeln!(f, "dense_density: {:.6e}", self.dense_density)?;
        write!(f, "density_ratio: {:.4}", self.density_ratio)
    }
}

/// Reports adjacency densities for the hierarchy and its dense expansion.
pub fn graph_stats(dag: &TaxonomyDag, ancestors: &KHopAdjacency) -> GraphStats {
    let n = dag.node_count();
    let total = (n * n) as f64;
    let hierarchy_entries = n + 2 * dag.edges().len();
    // Descendant reachability mirrors ancestor reachability, so the merged
    // dense adjacency has one entry per strict pair in each direction.
    let strict_pairs = ancestors.dense_union().nnz() - n;
    let dense_entries = n + 2 * strict_pairs;
    let hierarchy_density = hierarchy_entries as f64 / total;
    let dense_density = dense_entries as f64 / total;
    GraphStats {
        n_nodes: n,
        n_edges: dag.edges().len(),
        hierarchy_density,
        dense_density,
        density_ratio: dense_density / hierarchy_density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain6() -> TaxonomyDag {
        // c0 -> c1 -> c2 -> c3 -> c4 -> c5, child points to parent
        let pairs: Vec<(String, String)> = (0..5)
            .map(|i| (format!("c{i}"), format!("c{}", i + 1)))
            .collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        TaxonomyDag::from_edge_pairs(&refs).unwrap()
    }

    #[test]
    fn single_edge_two_nodes() {
        let dag = TaxonomyDag::from_edge_pairs(&[("b", "a")]).unwrap();
        assert_eq!(dag.node_count(), 2);
        assert_eq!(dag.edges(), &[(0, 1)]);
        assert_eq!(dag.node_ids(), &["b".to_string(), "a".to_string()]);
    }

    #[test]
    fn two_cycle_rejected() {
        let err = TaxonomyDag::from_edge_pairs(&[("b", "a"), ("a", "b")]).unwrap_err();
        match err {
            TaxonomyError::Cycle(nodes) => {
                assert!(nodes.len() >= 3);
                assert_eq!(nodes.first(), nodes.last());
            }
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn self_edge_rejected() {
        assert!(matches!(
            TaxonomyDag::from_edge_pairs(&[("a", "a")]),
            Err(TaxonomyError::SelfEdge(_))
        ));
    }

    #[test]
    fn duplicate_edges_dropped() {
        let dag = TaxonomyDag::from_edge_pairs(&[("b", "a"), ("b", "a"), ("c", "a")]).unwrap();
        assert_eq!(dag.edges().len(), 2);
    }

    #[test]
    fn whitespace_identifier_rejected() {
        assert!(matches!(
            TaxonomyDag::from_edge_pairs(&[("b b", "a")]),
            Err(TaxonomyError::BadIdentifier(_))
        ));
    }

    #[test]
    fn single_node_decomposition() {
        let dag = TaxonomyDag::new(vec!["only".into()], vec![]).unwrap();
        let kh = khop_decompose(&dag, 4, Direction::Ancestor).unwrap();
        assert_eq!(kh.buckets().len(), 5);
        assert_eq!(kh.buckets()[0], SparseMatrix::identity(1));
        for k in 1..=4 {
            assert_eq!(kh.buckets()[k].nnz(), 0);
        }
    }

    #[test]
    fn chain_buckets_match_hand_bfs() {
        let dag = chain6();
        let kh = khop_decompose(&dag, 4, Direction::Ancestor).unwrap();
        // From node 0 the ancestors sit at hop 1..5; hop 5 lands in bucket 4.
        let has = |k: usize, i: usize, j: usize| {
            let (cols, _) = kh.buckets()[k].row(i);
            cols.contains(&j)
        };
        assert!(has(1, 0, 1));
        assert!(has(2, 0, 2));
        assert!(has(3, 0, 3));
        assert!(has(4, 0, 4));
        assert!(has(4, 0, 5));
        assert!(!has(1, 0, 2));
    }

    #[test]
    fn zero_hop_cap_rejected() {
        let dag = chain6();
        assert!(matches!(
            khop_decompose(&dag, 0, Direction::Ancestor),
            Err(TaxonomyError::ZeroHopCap)
        ));
    }

    #[test]
    fn descendant_buckets_are_transposed_ancestor_buckets() {
        let dag = chain6();
        let anc = khop_decompose(&dag, 3, Direction::Ancestor).unwrap();
        let desc = khop_decompose(&dag, 3, Direction::Descendant).unwrap();
        for k in 0..=3 {
            assert_eq!(desc.buckets()[k], anc.buckets()[k].transpose());
        }
    }

    #[test]
    fn chain_dense_union_is_upper_triangular_reachability() {
        let dag = chain6();
        let kh = khop_decompose(&dag, 4, Direction::Ancestor).unwrap();
        let union = kh.dense_union();
        assert_eq!(union.nnz(), 6 + 15); // diagonal plus strict upper triangle
        for (r, c, v) in union.iter_entries() {
            assert!(c >= r);
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn union_of_both_directions_is_symmetric() {
        let dag = TaxonomyDag::from_edge_pairs(&[("b", "a"), ("c", "a"), ("d", "b"), ("d", "c")])
            .unwrap();
        let anc = khop_decompose(&dag, 2, Direction::Ancestor).unwrap().dense_union();
        let desc = khop_decompose(&dag, 2, Direction::Descendant)
            .unwrap()
            .dense_union();
        let merged = anc.pattern_union(&desc).unwrap();
        assert_eq!(merged, merged.transpose());
    }

    #[test]
    fn stats_single_node() {
        let dag = TaxonomyDag::new(vec!["x".into()], vec![]).unwrap();
        let kh = khop_decompose(&dag, 2, Direction::Ancestor).unwrap();
        let stats = graph_stats(&dag, &kh);
        assert_eq!(stats.hierarchy_density, 1.0);
        assert_eq!(stats.dense_density, 1.0);
    }

    #[test]
    fn stats_chain_hand_count() {
        let dag = chain6();
        let kh = khop_decompose(&dag, 4, Direction::Ancestor).unwrap();
        let stats = graph_stats(&dag, &kh);
        assert!((stats.hierarchy_density - 16.0 / 36.0).abs() < 1e-15);
        assert!((stats.dense_density - 1.0).abs() < 1e-15);
    }
}
