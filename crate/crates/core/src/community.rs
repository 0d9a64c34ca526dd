//! Community structure on the validated dependency graph.
//!
//! Modularity is computed on binary edges. Detection is the greedy
//! agglomerative scheme: start from singletons and repeatedly merge the
//! adjacent community pair with the largest positive modularity gain.
//! Significance comes from degree-preserving nulls: the observed partition
//! quality is compared against greedy modularity on double-edge-swap
//! randomizations of the same graph.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::minet::DependencyGraph;

/// Greedy partition plus its null calibration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CommunityResult {
    /// Detected communities; tickers sorted within, groups sorted by first.
    pub communities: Vec<Vec<String>>,
    pub q_obs: f64,
    /// Fraction of null replicates with modularity >= the observed one.
    pub p_value: f64,
    pub n_random: usize,
    /// Replicates where no swap was accepted; they keep the original graph
    /// and count as ties against the observed modularity.
    pub n_degenerate: usize,
    /// Set when no replicate reached q_obs, so p_value is the resolution
    /// limit 1/n_random rather than an estimate.
    pub p_is_upper_bound: bool,
}

fn check_assignment(n: usize, assignment: &[usize]) -> Result<()> {
    if assignment.len() != n {
        return Err(Error::Contract(format!(
            "assignment length {} does not match node count {}",
            assignment.len(),
            n
        )));
    }
    Ok(())
}

/// Modularity of a given node-to-community assignment over binary edges.
pub fn modularity(graph: &DependencyGraph, assignment: &[usize]) -> Result<f64> {
    check_assignment(graph.nodes.len(), assignment)?;
    let edges: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.a, e.b)).collect();
    modularity_of(&edges, assignment)
}

fn modularity_of(edges: &[(usize, usize)], assignment: &[usize]) -> Result<f64> {
    let m = edges.len() as f64;
    if edges.is_empty() {
        return Err(Error::Validation(
            "modularity is undefined on a graph with no edges".into(),
        ));
    }
    let mut e_in: BTreeMap<usize, f64> = BTreeMap::new();
    let mut k_sum: BTreeMap<usize, f64> = BTreeMap::new();
    for &(a, b) in edges {
        *k_sum.entry(assignment[a]).or_insert(0.0) += 1.0;
        *k_sum.entry(assignment[b]).or_insert(0.0) += 1.0;
        if assignment[a] == assignment[b] {
            *e_in.entry(assignment[a]).or_insert(0.0) += 1.0;
        }
    }
    let mut q = 0.0;
    for (&c, &k) in &k_sum {
        let inside = e_in.get(&c).copied().unwrap_or(0.0);
        q += inside / m - (k / (2.0 * m)).powi(2);
    }
    Ok(q)
}

/// Greedy merging on a raw edge list. Returns (assignment, modularity).
fn greedy_on_edges(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, f64) {
    let m = edges.len() as f64;
    debug_assert!(m > 0.0);
    let mut alive: Vec<bool> = vec![true; n];
    let mut e_in = vec![0.0f64; n];
    let mut k_sum = vec![0.0f64; n];
    // Symmetric community adjacency: edge counts between communities.
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(a, b) in edges {
        debug_assert_ne!(a, b);
        k_sum[a] += 1.0;
        k_sum[b] += 1.0;
        *adj[a].entry(b).or_insert(0.0) += 1.0;
        *adj[b].entry(a).or_insert(0.0) += 1.0;
    }
    loop {
        // Scan ascending so the first strict maximum is the
        // lexicographically smallest tied pair.
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            for (&b, &w) in adj[a].range(a + 1..) {
                let dq = w / m - k_sum[a] * k_sum[b] / (2.0 * m * m);
                if best.map_or(true, |(q, _, _)| dq > q) {
                    best = Some((dq, a, b));
                }
            }
        }
        let (dq, a, b) = match best {
            Some(t) if t.0 > 0.0 => t,
            _ => break,
        };
        let _ = dq;
        // Merge b into a; the merged community keeps the smaller id.
        let b_adj = std::mem::take(&mut adj[b]);
        e_in[a] += e_in[b] + b_adj.get(&a).copied().unwrap_or(0.0);
        k_sum[a] += k_sum[b];
        for (c, w) in b_adj {
            if c == a {
                continue;
            }
            *adj[a].entry(c).or_insert(0.0) += w;
            adj[c].remove(&b);
            *adj[c].entry(a).or_insert(0.0) += w;
        }
        adj[a].remove(&b);
        alive[b] = false;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
    }
    let mut assignment = vec![0usize; n];
    let mut label = 0usize;
    let mut q = 0.0;
    for c in 0..n {
        if !alive[c] {
            continue;
        }
        for &node in &members[c] {
            assignment[node] = label;
        }
        q += e_in[c] / m - (k_sum[c] / (2.0 * m)).powi(2);
        label += 1;
    }
    (assignment, q)
}

/// Greedy modularity maximization. Returns the assignment and its
/// modularity; labels are dense and ordered by smallest member id.
pub fn greedy_communities(graph: &DependencyGraph) -> Result<(Vec<usize>, f64)> {
    if graph.edges.is_empty() {
        return Err(Error::Validation(
            "community detection needs at least one validated edge".into(),
        ));
    }
    let edges: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.a, e.b)).collect();
    Ok(greedy_on_edges(graph.nodes.len(), &edges))
}

/// In-place double edge swaps: (a,b),(c,d) becomes (a,c),(b,d) with random
/// pairing, rejecting self-loops and duplicate edges. Returns the number of
/// accepted swaps after at most `max_attempts` draws.
pub fn double_edge_swap(
    edges: &mut [(usize, usize)],
    rng: &mut impl Rng,
    target_swaps: usize,
    max_attempts: usize,
) -> usize {
    let m = edges.len();
    if m < 2 {
        return 0;
    }
    let norm = |x: usize, y: usize| (x.min(y), x.max(y));
    let mut present: std::collections::HashSet<(usize, usize)> =
        edges.iter().map(|&(a, b)| norm(a, b)).collect();
    let mut accepted = 0usize;
    for _ in 0..max_attempts {
        if accepted >= target_swaps {
            break;
        }
        let i = rng.gen_range(0..m);
        let j = rng.gen_range(0..m);
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.gen_bool(0.5) {
            std::mem::swap(&mut c, &mut d);
        }
        if a == c || b == d {
            continue;
        }
        let e1 = norm(a, c);
        let e2 = norm(b, d);
        if e1 == e2 || present.contains(&e1) || present.contains(&e2) {
            continue;
        }
        present.remove(&norm(a, b));
        present.remove(&norm(c, d));
        present.insert(e1);
        present.insert(e2);
        edges[i] = e1;
        edges[j] = e2;
        accepted += 1;
    }
    accepted
}

fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    // splitmix64 step keyed by the replicate index.
    let mut z = seed ^ (replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Greedy partition of `graph` with a permutation-style p-value from
/// `n_random` degree-preserving randomizations. Each replicate aims for
/// 10 * E accepted swaps within 100 * E attempts.
pub fn modularity_significance(
    graph: &DependencyGraph,
    n_random: usize,
    seed: u64,
) -> Result<CommunityResult> {
    if n_random == 0 {
        return Err(Error::Contract("n_random must be at least 1".into()));
    }
    let (assignment, q_obs) = greedy_communities(graph)?;
    let n = graph.nodes.len();
    let base: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.a, e.b)).collect();
    let m = base.len();
    let replicates: Vec<(f64, bool)> = (0..n_random)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, r));
            let mut edges = base.clone();
            let accepted = double_edge_swap(&mut edges, &mut rng, 10 * m, 100 * m);
            if accepted == 0 {
                // Nothing moved: the replicate is the observed graph itself.
                (q_obs, true)
            } else {
                (greedy_on_edges(n, &edges).1, false)
            }
        })
        .collect();
    let n_degenerate = replicates.iter().filter(|(_, d)| *d).count();
    let count_ge = replicates.iter().filter(|(q, _)| *q >= q_obs).count();
    let (p_value, p_is_upper_bound) = if count_ge == 0 {
        (1.0 / n_random as f64, true)
    } else {
        (count_ge as f64 / n_random as f64, false)
    };

    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (node, &label) in assignment.iter().enumerate() {
        groups
            .entry(label)
            .or_default()
            .push(graph.nodes[node].clone());
    }
    let mut communities: Vec<Vec<String>> = groups
        .into_values()
        .map(|mut v| {
            v.sort();
            v
        })
        .collect();
    communities.sort();
    Ok(CommunityResult {
        communities,
        q_obs,
        p_value,
        n_random,
        n_degenerate,
        p_is_upper_bound,
    })
}
