use serde::{Deserialize, Serialize};

use super::{EquivalenceMatrix, MetricsError};

/// A partition of answer indices into semantic clusters.
///
/// Cluster ids are canonical: cluster 0 holds answer 0, and each next id is
/// given to the cluster whose smallest member comes first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    assignments: Vec<usize>,
    cluster_sizes: Vec<usize>,
}

impl ClusterPartition {
    /// Relabels arbitrary cluster labels into canonical ids.
    pub fn from_labels(labels: &[usize]) -> Result<Self, MetricsError> {
        if labels.is_empty() {
            return Err(MetricsError::InvalidPartition("no answers".into()));
        }
        let mut canonical = std::collections::HashMap::new();
        let mut assignments = Vec::with_capacity(labels.len());
        let mut cluster_sizes = Vec::new();
        for &label in labels {
            let next = canonical.len();
            let id = *canonical.entry(label).or_insert(next);
            if id == cluster_sizes.len() {
                cluster_sizes.push(0);
            }
            cluster_sizes[id] += 1;
            assignments.push(id);
        }
        Ok(Self {
            assignments,
            cluster_sizes,
        })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn k(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] = self.rank[a].saturating_add(1);
        }
    }
}

/// Connected components of the graph with an edge (i, j) whenever the
/// agreement score reaches `threshold`. Asymmetric cells use the smaller of
/// the two directions, so an edge needs agreement both ways.
pub fn cluster_answers(
    m: &EquivalenceMatrix,
    threshold: f64,
) -> Result<ClusterPartition, MetricsError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let n = m.n();
    let mut sets = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if m.get(i, j).min(m.get(j, i)) >= threshold {
                sets.union(i, j);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| sets.find(i)).collect();
    ClusterPartition::from_labels(&roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Symmetrization;

    fn matrix(n: usize, edges: &[(usize, usize)]) -> EquivalenceMatrix {
        EquivalenceMatrix::from_fn("t", Symmetrization::Mean, n, |i, j| {
            (edges.contains(&(i, j)) || edges.contains(&(j, i))) as u8 as f64
        })
        .unwrap()
    }

    #[test]
    fn all_connected_and_all_isolated() {
        let full = EquivalenceMatrix::from_fn("t", Symmetrization::Mean, 4, |_, _| 1.0).unwrap();
        assert_eq!(cluster_answers(&full, 0.5).unwrap().cluster_sizes(), &[4]);
        let none = matrix(4, &[]);
        let p = cluster_answers(&none, 0.5).unwrap();
        assert_eq!(p.cluster_sizes(), &[1, 1, 1, 1]);
        assert_eq!(p.assignments(), &[0, 1, 2, 3]);
    }

    #[test]
    fn chain_is_closed_transitively() {
        let p = cluster_answers(&matrix(4, &[(0, 1), (1, 2)]), 0.5).unwrap();
        assert_eq!(p.assignments(), &[0, 0, 0, 1]);
        assert_eq!(p.members(0), vec![0, 1, 2]);
    }

    #[test]
    fn ids_follow_smallest_member() {
        let p = cluster_answers(&matrix(5, &[(1, 4), (2, 3)]), 0.5).unwrap();
        assert_eq!(p.assignments(), &[0, 1, 2, 2, 1]);
    }

    #[test]
    fn single_answer_is_one_cluster() {
        let p = cluster_answers(&matrix(1, &[]), 0.8).unwrap();
        assert_eq!(p.cluster_sizes(), &[1]);
    }

    #[test]
    fn threshold_is_validated() {
        let m = matrix(2, &[]);
        assert!(cluster_answers(&m, 0.0).is_err());
        assert!(cluster_answers(&m, 1.5).is_err());
        assert!(cluster_answers(&m, 1.0).is_ok());
    }

    #[test]
    fn directed_edges_need_both_directions() {
        let m = EquivalenceMatrix::new(
            "d",
            Symmetrization::Directed,
            vec![vec![1.0, 0.9], vec![0.3, 1.0]],
        )
        .unwrap();
        assert_eq!(cluster_answers(&m, 0.5).unwrap().k(), 2);
    }
}
