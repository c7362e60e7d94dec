//! Sparse Markov clustering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sparse column: `(row, value)` sorted by row.
pub type Column = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MclParams {
    pub inflation: f64,
    pub max_iters: usize,
    pub prune_eps: f64,
    pub max_entries: usize,
    pub chaos_tol: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        MclParams {
            inflation: 2.0,
            max_iters: 100,
            prune_eps: 1e-5,
            max_entries: 1000,
            chaos_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MclResult {
    /// Cluster id per node, numbered by first appearance.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub iterations: usize,
}

fn normalize(col: &mut Column) {
    let s: f64 = col.iter().map(|e| e.1).sum();
    if s > 0.0 {
        for e in col.iter_mut() {
            e.1 /= s;
        }
    }
}

fn prune(col: &mut Column, eps: f64, keep: usize) {
    col.retain(|e| e.1 >= eps);
    if col.len() > keep {
        col.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        col.truncate(keep);
        col.sort_by_key(|e| e.0);
    }
}

fn chaos(col: &Column) -> f64 {
    let max = col.iter().map(|e| e.1).fold(0.0, f64::max);
    let sq: f64 = col.iter().map(|e| e.1 * e.1).sum();
    max - sq
}

/// Column-stochastic flow matrix of an undirected graph with unit self-loops.
pub fn flow_matrix(n: usize, adjacency: &[Vec<usize>]) -> Vec<Column> {
    (0..n)
        .map(|j| {
            let mut col: Column = adjacency[j].iter().filter(|&&i| i != j).map(|&i| (i, 1.0)).collect();
            col.push((j, 1.0));
            col.sort_by_key(|e| e.0);
            col.dedup_by_key(|e| e.0);
            normalize(&mut col);
            col
        })
        .collect()
}

fn expand(m: &[Column]) -> Vec<Column> {
    let n = m.len();
    m.par_iter()
        .map_init(
            || (vec![0.0f64; n], Vec::<usize>::new()),
            |(acc, touched), col| {
                for &(k, w) in col {
                    for &(i, v) in &m[k] {
                        if acc[i] == 0.0 {
                            touched.push(i);
                        }
                        acc[i] += w * v;
                    }
                }
                touched.sort_unstable();
                let out: Column = touched.iter().map(|&i| (i, acc[i])).collect();
                for &i in touched.iter() {
                    acc[i] = 0.0;
                }
                touched.clear();
                out
            },
        )
        .collect()
}

/// Run MCL to convergence and read clusters off the limit matrix as weakly
/// connected components of its nonzero structure.
pub fn markov_cluster(adjacency: &[Vec<usize>], params: &MclParams) -> MclResult {
    let n = adjacency.len();
    if n == 0 {
        return MclResult {
            labels: Vec::new(),
            n_clusters: 0,
            iterations: 0,
        };
    }
    let mut m = flow_matrix(n, adjacency);
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        m = expand(&m);
        let worst = m
            .par_iter_mut()
            .map(|col| {
                for e in col.iter_mut() {
                    e.1 = e.1.powf(params.inflation);
                }
                normalize(col);
                prune(col, params.prune_eps, params.max_entries);
                normalize(col);
                chaos(col)
            })
            .reduce(|| 0.0, f64::max);
        if worst < params.chaos_tol {
            break;
        }
    }
    let mut uf = UnionFind::new(n);
    for (j, col) in m.iter().enumerate() {
        for &(i, v) in col {
            if v > 0.0 {
                uf.union(i, j);
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut next = 0;
    for (i, l) in labels.iter_mut().enumerate() {
        let r = uf.find(i);
        if remap[r] == usize::MAX {
            remap[r] = next;
            next += 1;
        }
        *l = remap[r];
    }
    MclResult {
        labels,
        n_clusters: next,
        iterations,
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn clique(nodes: std::ops::Range<usize>, adj: &mut [Vec<usize>]) {
        for i in nodes.clone() {
            for j in nodes.clone() {
                if i != j {
                    adj[i].push(j);
                }
            }
        }
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.len() == b.len()
            && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    /// Dense MCL without pruning, clusters from attractor rows.
    fn dense_mcl(adj: &[Vec<usize>], inflation: f64) -> Vec<usize> {
        let n = adj.len();
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            m[j][j] = 1.0;
            for &i in &adj[j] {
                m[i][j] = 1.0;
            }
        }
        let norm = |m: &mut Vec<Vec<f64>>| {
            for j in 0..n {
                let s: f64 = (0..n).map(|i| m[i][j]).sum();
                for row in m.iter_mut() {
                    row[j] /= s;
                }
            }
        };
        norm(&mut m);
        for _ in 0..200 {
            let mut e = vec![vec![0.0; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if m[i][k] != 0.0 {
                        for j in 0..n {
                            e[i][j] += m[i][k] * m[k][j];
                        }
                    }
                }
            }
            for row in e.iter_mut() {
                for v in row.iter_mut() {
                    *v = v.powf(inflation);
                }
            }
            norm(&mut e);
            m = e;
        }
        // node j belongs to the attractor row carrying most of its column mass
        let mut labels = vec![0; n];
        for j in 0..n {
            labels[j] = (0..n).max_by(|&a, &b| m[a][j].total_cmp(&m[b][j]).then(b.cmp(&a))).unwrap();
        }
        labels
    }

    #[test]
    fn disjoint_cliques() {
        let mut adj = vec![Vec::new(); 20];
        clique(0..10, &mut adj);
        clique(10..20, &mut adj);
        let r = markov_cluster(&adj, &MclParams::default());
        assert_eq!(r.n_clusters, 2);
        assert!((0..10).all(|i| r.labels[i] == 0));
        assert!((10..20).all(|i| r.labels[i] == 1));
    }

    #[test]
    fn bridged_cliques_match_dense_reference() {
        let mut adj = vec![Vec::new(); 20];
        clique(0..10, &mut adj);
        clique(10..20, &mut adj);
        adj[9].push(10);
        adj[10].push(9);
        let r = markov_cluster(&adj, &MclParams::default());
        assert_eq!(r.n_clusters, 2);
        assert!(same_partition(&r.labels, &dense_mcl(&adj, 2.0)));
    }

    #[test]
    fn complete_graph_is_one_cluster() {
        let mut adj = vec![Vec::new(); 20];
        clique(0..20, &mut adj);
        assert_eq!(markov_cluster(&adj, &MclParams::default()).n_clusters, 1);
    }

    #[test]
    fn empty_graph() {
        assert_eq!(markov_cluster(&[], &MclParams::default()).n_clusters, 0);
    }

    fn random_graph(seed: u64, n: usize, p: f64) -> Vec<Vec<usize>> {
        let mut rng = crate::geom::rng_for(seed, 0, 0);
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }

    #[test]
    fn cluster_count_grows_with_inflation() {
        for seed in 0..5 {
            let adj = random_graph(seed, 60, 0.08);
            let counts: Vec<usize> = [1.4, 2.0, 2.6]
                .iter()
                .map(|&inflation| {
                    markov_cluster(&adj, &MclParams { inflation, ..Default::default() }).n_clusters
                })
                .collect();
            assert!(counts.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {counts:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn node_order_invariance(seed in 0u64..1000, shift in 1usize..40) {
            let n = 40;
            let adj = random_graph(seed, n, 0.1);
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
            let mut padj = vec![Vec::new(); n];
            for i in 0..n {
                padj[perm[i]] = adj[i].iter().map(|&j| perm[j]).collect();
            }
            let a = markov_cluster(&adj, &MclParams::default());
            let b = markov_cluster(&padj, &MclParams::default());
            let mapped: Vec<usize> = (0..n).map(|i| b.labels[perm[i]]).collect();
            prop_assert_eq!(a.n_clusters, b.n_clusters);
            prop_assert!(same_partition(&a.labels, &mapped));
        }
    }
}
