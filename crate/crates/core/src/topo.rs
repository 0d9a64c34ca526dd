//! Topology metrics on the spanning tree.
//!
//! Hop-based metrics (closeness, eccentricity, betweenness, path length,
//! efficiency) treat the tree as unweighted. Eigenvector centrality and
//! weighted degree use MI weights; algebraic connectivity and tree length use
//! distance weights; assortativity uses binary degrees. The core and
//! periphery indices are ratios of fields from one metric report, so they are
//! bit-reproducible from it.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::minet::SpanningTree;

/// Edge weighting for eigenvector centrality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Mi,
    Binary,
}

/// Per-node metrics plus global scalars for one spanning tree.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricReport {
    pub nodes: Vec<String>,
    pub closeness: Vec<f64>,
    pub eccentricity: Vec<u32>,
    pub eigenvector: Vec<f64>,
    pub weighted_degree: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub avg_closeness: f64,
    pub avg_eccentricity: f64,
    pub avg_eigenvector: f64,
    pub avg_weighted_degree: f64,
    pub avg_betweenness: f64,
    pub avg_path_length: f64,
    pub global_efficiency: f64,
    pub assortativity: f64,
    pub algebraic_connectivity: f64,
    pub tree_length: f64,
}

/// Aggregate core strength and periphery fragility of one tree.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CorePeripheryIndices {
    /// Mean eigenvector centrality over mean closeness.
    pub core_concentration: f64,
    /// |assortativity| over algebraic connectivity.
    pub periphery_fragility: f64,
}

/// Pairwise hop counts by BFS from every node.
pub fn hop_distances(tree: &SpanningTree) -> Array2<u32> {
    let n = tree.n_nodes();
    let adj = tree.adjacency();
    let mut dist = Array2::zeros((n, n));
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        let mut seen = vec![false; n];
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    dist[[start, w]] = dist[[start, v]] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    dist
}

/// Sum of incident MI weights per node.
pub fn weighted_degree(tree: &SpanningTree) -> Vec<f64> {
    let mut deg = vec![0.0; tree.n_nodes()];
    for e in &tree.edges {
        deg[e.a] += e.mi;
        deg[e.b] += e.mi;
    }
    deg
}

/// Number of unordered node pairs whose unique tree path crosses each node.
/// On a tree this equals unnormalized shortest-path betweenness.
pub fn betweenness(tree: &SpanningTree) -> Vec<f64> {
    let n = tree.n_nodes();
    if n == 0 {
        return Vec::new();
    }
    let adj = tree.adjacency();
    // Iterative rooted DFS for subtree sizes.
    let root = 0usize;
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                stack.push(w);
            }
        }
    }
    let mut size = vec![1usize; n];
    for &v in order.iter().rev() {
        if parent[v] != usize::MAX {
            size[parent[v]] += size[v];
        }
    }
    let mut result = vec![0.0; n];
    for v in 0..n {
        // Components of the tree with v removed: one per child subtree plus
        // the parent side.
        let mut sizes: Vec<usize> = adj[v]
            .iter()
            .filter(|&&w| parent[w] == v)
            .map(|&w| size[w])
            .collect();
        if v != root {
            sizes.push(n - size[v]);
        }
        let total: usize = sizes.iter().sum();
        debug_assert_eq!(total, n - 1);
        let sq: usize = sizes.iter().map(|s| s * s).sum();
        result[v] = ((total * total - sq) / 2) as f64;
    }
    result
}

/// Dominant-eigenvector centrality of the weighted adjacency, max-normalized
/// to 1. Power iteration runs on A + I: trees are bipartite, so the plain
/// adjacency has a matching negative eigenvalue and the shift is what makes
/// the iteration converge.
pub fn eigenvector_centrality(tree: &SpanningTree, mode: WeightMode) -> Result<Vec<f64>> {
    let n = tree.n_nodes();
    if n == 0 {
        return Err(Error::Contract("empty tree".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut w: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &tree.edges {
        let wt = match mode {
            WeightMode::Mi => e.mi,
            WeightMode::Binary => 1.0,
        };
        if wt <= 0.0 {
            return Err(Error::Contract(format!(
                "non-positive weight on edge ({}, {})",
                e.a, e.b
            )));
        }
        w[e.a].push((e.b, wt));
        w[e.b].push((e.a, wt));
    }
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut y = x.clone();
        for v in 0..n {
            for &(u, wt) in &w[v] {
                y[v] += wt * x[u];
            }
        }
        let max = y.iter().cloned().fold(0.0f64, f64::max);
        debug_assert!(max > 0.0);
        for v in &mut y {
            *v /= max;
        }
        let diff = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = y;
        if diff < 1e-12 {
            return Ok(x);
        }
    }
    Err(Error::IterationLimit(
        "eigenvector centrality did not converge in 10000 iterations".into(),
    ))
}

/// Degree assortativity on the binary tree; undefined below 3 nodes.
pub fn assortativity(tree: &SpanningTree) -> Result<f64> {
    let n = tree.n_nodes();
    if n < 3 {
        return Err(Error::Validation(format!(
            "assortativity needs at least 3 nodes, tree has {n}"
        )));
    }
    let mut deg = vec![0.0f64; n];
    for e in &tree.edges {
        deg[e.a] += 1.0;
        deg[e.b] += 1.0;
    }
    let two_m = 2.0 * tree.edges.len() as f64;
    let mut prod = 0.0;
    for e in &tree.edges {
        prod += 2.0 * deg[e.a] * deg[e.b];
    }
    let s2: f64 = deg.iter().map(|&k| k * k).sum();
    let s3: f64 = deg.iter().map(|&k| k * k * k).sum();
    let num = prod - s2 * s2 / two_m;
    let den = s3 - s2 * s2 / two_m;
    if den <= 0.0 {
        // A tree with n >= 3 always mixes leaf and internal degrees.
        return Err(Error::Validation(
            "degenerate degree distribution for assortativity".into(),
        ));
    }
    Ok(num / den)
}

fn laplacian_dense(tree: &SpanningTree) -> nalgebra::DMatrix<f64> {
    let n = tree.n_nodes();
    let mut l = nalgebra::DMatrix::<f64>::zeros(n, n);
    for e in &tree.edges {
        l[(e.a, e.a)] += e.distance;
        l[(e.b, e.b)] += e.distance;
        l[(e.a, e.b)] -= e.distance;
        l[(e.b, e.a)] -= e.distance;
    }
    l
}

/// Second-smallest eigenvalue of the distance-weighted Laplacian by a dense
/// symmetric eigensolve.
pub fn lambda2_dense(tree: &SpanningTree) -> Result<f64> {
    let n = tree.n_nodes();
    if n < 2 {
        return Err(Error::Contract(format!(
            "algebraic connectivity needs at least 2 nodes, tree has {n}"
        )));
    }
    let eig = nalgebra::SymmetricEigen::new(laplacian_dense(tree));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals[1])
}

/// Second-smallest Laplacian eigenvalue by power iteration on g*I - L
/// deflated against the constant vector; g is the Gershgorin bound. Suits
/// trees too large for a dense solve.
pub fn lambda2_iterative(tree: &SpanningTree) -> Result<f64> {
    let n = tree.n_nodes();
    if n < 2 {
        return Err(Error::Contract(format!(
            "algebraic connectivity needs at least 2 nodes, tree has {n}"
        )));
    }
    let mut diag = vec![0.0f64; n];
    for e in &tree.edges {
        diag[e.a] += e.distance;
        diag[e.b] += e.distance;
    }
    let g = 2.0 * diag.iter().cloned().fold(0.0f64, f64::max);
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            y[i] = (g - diag[i]) * x[i];
        }
        for e in &tree.edges {
            y[e.a] += e.distance * x[e.b];
            y[e.b] += e.distance * x[e.a];
        }
    };
    // Deterministic non-constant start vector.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin()).collect();
    let mut y = vec![0.0; n];
    let deflate = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        for t in v.iter_mut() {
            *t -= mean;
        }
    };
    deflate(&mut x);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let s = norm(&x);
    for t in &mut x {
        *t /= s;
    }
    let mut prev = f64::INFINITY;
    for _ in 0..5_000_000usize {
        apply(&x, &mut y);
        deflate(&mut y);
        let rho = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let s = norm(&y);
        if s == 0.0 {
            return Err(Error::Normalization(
                "power iteration collapsed to zero".into(),
            ));
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / s;
        }
        if (rho - prev).abs() < 1e-13 * g.max(1.0) {
            return Ok(g - rho);
        }
        prev = rho;
    }
    Err(Error::IterationLimit(
        "lambda2 power iteration did not converge".into(),
    ))
}

/// Algebraic connectivity; dense solve up to 512 nodes, iterative above.
pub fn algebraic_connectivity(tree: &SpanningTree) -> Result<f64> {
    if tree.n_nodes() <= 512 {
        lambda2_dense(tree)
    } else {
        lambda2_iterative(tree)
    }
}

/// Full per-node and global metric set. Needs at least 3 nodes because
/// assortativity is undefined below that.
pub fn metric_report(tree: &SpanningTree) -> Result<MetricReport> {
    let n = tree.n_nodes();
    if n < 3 {
        return Err(Error::Contract(format!(
            "metric report needs at least 3 nodes, tree has {n}"
        )));
    }
    if tree.edges.len() != n - 1 {
        return Err(Error::Contract(format!(
            "tree with {n} nodes must have {} edges, found {}",
            n - 1,
            tree.edges.len()
        )));
    }
    let hops = hop_distances(tree);
    let mut closeness = Vec::with_capacity(n);
    let mut eccentricity = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 0u64;
        let mut max = 0u32;
        for j in 0..n {
            let d = hops[[i, j]];
            sum += d as u64;
            max = max.max(d);
        }
        closeness.push((n as f64 - 1.0) / sum as f64);
        eccentricity.push(max);
    }
    let eigenvector = eigenvector_centrality(tree, WeightMode::Mi)?;
    let wdeg = weighted_degree(tree);
    let btw = betweenness(tree);

    let mut sum_hops = 0u64;
    let mut sum_inv = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            sum_hops += hops[[i, j]] as u64;
            sum_inv += 1.0 / hops[[i, j]] as f64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let avg = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    Ok(MetricReport {
        avg_closeness: avg(&closeness),
        avg_eccentricity: eccentricity.iter().map(|&e| e as f64).sum::<f64>() / n as f64,
        avg_eigenvector: avg(&eigenvector),
        avg_weighted_degree: avg(&wdeg),
        avg_betweenness: avg(&btw),
        avg_path_length: sum_hops as f64 / pairs,
        global_efficiency: sum_inv / pairs,
        assortativity: assortativity(tree)?,
        algebraic_connectivity: algebraic_connectivity(tree)?,
        tree_length: tree.total_distance(),
        nodes: tree.nodes.clone(),
        closeness,
        eccentricity,
        eigenvector,
        weighted_degree: wdeg,
        betweenness: btw,
    })
}

/// Core and periphery indices as exact ratios of report fields.
pub fn core_periphery(report: &MetricReport) -> CorePeripheryIndices {
    CorePeripheryIndices {
        core_concentration: report.avg_eigenvector / report.avg_closeness,
        periphery_fragility: report.assortativity.abs() / report.algebraic_connectivity,
    }
}
