use super::ClusterPartition;

/// Shannon entropy (base 2) of the cluster-size distribution.
///
/// Computed as `log2 n - (1/n) * sum |C| log2 |C|`, summing over sorted
/// sizes. The result is independent of answer order and cluster labels, is
/// exactly 0 for one cluster, and exactly `log2 n` for all singletons.
pub fn semantic_entropy(p: &ClusterPartition) -> f64 {
    if p.k() <= 1 {
        return 0.0;
    }
    let n = p.n() as f64;
    let mut sizes = p.cluster_sizes().to_vec();
    sizes.sort_unstable();
    let weighted: f64 = sizes
        .iter()
        .map(|&c| {
            let c = c as f64;
            c * c.log2()
        })
        .sum();
    (n.log2() - weighted / n).max(0.0)
}
