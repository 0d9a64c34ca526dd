//! Dependency graph and minimum spanning tree on MI distances.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::minet::MiMatrix;

/// Additive floor that keeps distances finite for vanishing MI.
pub const DISTANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub mi: f64,
    pub distance: f64,
}

/// Undirected graph over the significant pairs; nodes are tickers in panel
/// order, edges are stored once with a < b.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

/// Spanning tree of a [`DependencyGraph`]; same node indexing, n - 1 edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

impl DependencyGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

impl SpanningTree {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_distance(&self) -> f64 {
        self.edges.iter().map(|e| e.distance).sum()
    }

    /// Neighbor lists, ascending by neighbor index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }
}

/// Converts a validated MI matrix into its dependency graph. Only mask-true
/// pairs get edges; distance = 1 / (mi + eps). A masked pair with zero MI
/// cannot arise from the permutation test and is skipped defensively.
pub fn to_graph(m: &MiMatrix) -> DependencyGraph {
    let n = m.assets.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !m.mask[[i, j]] {
                continue;
            }
            let mi = m.mi[[i, j]];
            debug_assert!(mi > 0.0, "significant pair ({i},{j}) with zero MI");
            if mi <= 0.0 {
                continue;
            }
            edges.push(GraphEdge {
                a: i,
                b: j,
                mi,
                distance: 1.0 / (mi + DISTANCE_EPS),
            });
        }
    }
    DependencyGraph {
        nodes: m.assets.clone(),
        edges,
    }
}

fn components(n: usize, edges: &[GraphEdge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Largest connected component as a reindexed subgraph. Ties go to the
/// component whose sorted ticker list is lexicographically smallest.
pub fn largest_component(g: &DependencyGraph) -> DependencyGraph {
    let comps = components(g.n_nodes(), &g.edges);
    let best = comps
        .iter()
        .max_by(|a, b| {
            a.len().cmp(&b.len()).then_with(|| {
                let ta: Vec<&String> = {
                    let mut v: Vec<&String> = a.iter().map(|&i| &g.nodes[i]).collect();
                    v.sort();
                    v
                };
                let tb: Vec<&String> = {
                    let mut v: Vec<&String> = b.iter().map(|&i| &g.nodes[i]).collect();
                    v.sort();
                    v
                };
                // Reversed: max_by must prefer the smaller ticker list.
                tb.cmp(&ta)
            })
        })
        .expect("graph has at least one component");
    let mut remap = vec![usize::MAX; g.n_nodes()];
    for (new, &old) in best.iter().enumerate() {
        remap[old] = new;
    }
    let nodes = best.iter().map(|&i| g.nodes[i].clone()).collect();
    let edges = g
        .edges
        .iter()
        .filter(|e| remap[e.a] != usize::MAX && remap[e.b] != usize::MAX)
        .map(|e| {
            let (a, b) = (remap[e.a], remap[e.b]);
            let (a, b) = (a.min(b), a.max(b));
            GraphEdge {
                a,
                b,
                mi: e.mi,
                distance: e.distance,
            }
        })
        .collect();
    DependencyGraph { nodes, edges }
}

#[derive(PartialEq)]
struct Frontier {
    distance: f64,
    src: usize,
    dst: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so the BinaryHeap pops the smallest (distance, src, dst):
        // equal-weight frontier edges resolve to the smallest index pair.
        other
            .distance
            .total_cmp(&self.distance)
            .then_with(|| other.src.cmp(&self.src))
            .then_with(|| other.dst.cmp(&self.dst))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Prim's algorithm from node 0 with deterministic tie-breaking.
pub fn mst_prim(g: &DependencyGraph) -> Result<SpanningTree> {
    let n = g.n_nodes();
    if n == 0 {
        return Err(Error::Contract("cannot span an empty graph".into()));
    }
    let mut adj: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
    for e in &g.edges {
        adj[e.a].push((e.b, e.distance, e.mi));
        adj[e.b].push((e.a, e.distance, e.mi));
    }
    let mut in_tree = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    in_tree[0] = true;
    for &(dst, d, _) in &adj[0] {
        heap.push(Frontier {
            distance: d,
            src: 0,
            dst,
        });
    }
    while edges.len() + 1 < n {
        let f = match heap.pop() {
            Some(f) => f,
            None => {
                return Err(Error::Contract(format!(
                    "graph is disconnected: spanned {} of {} nodes",
                    edges.len() + 1,
                    n
                )))
            }
        };
        if in_tree[f.dst] {
            continue;
        }
        in_tree[f.dst] = true;
        let mi = adj[f.src]
            .iter()
            .find(|&&(v, _, _)| v == f.dst)
            .map(|&(_, _, mi)| mi)
            .expect("frontier edge exists");
        let (a, b) = (f.src.min(f.dst), f.src.max(f.dst));
        edges.push(GraphEdge {
            a,
            b,
            mi,
            distance: f.distance,
        });
        for &(next, d, _) in &adj[f.dst] {
            if !in_tree[next] {
                heap.push(Frontier {
                    distance: d,
                    src: f.dst,
                    dst: next,
                });
            }
        }
    }
    // Canonical order: callers see the same edge list no matter how heap
    // ties resolved during growth.
    edges.sort_by(|x, y| x.a.cmp(&y.a).then_with(|| x.b.cmp(&y.b)));
    Ok(SpanningTree {
        nodes: g.nodes.clone(),
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize, f64)]) -> DependencyGraph {
        DependencyGraph {
            nodes: (0..n).map(|i| format!("A{i:03}")).collect(),
            edges: edges
                .iter()
                .map(|&(a, b, d)| GraphEdge {
                    a: a.min(b),
                    b: a.max(b),
                    mi: 1.0 / d - DISTANCE_EPS,
                    distance: d,
                })
                .collect(),
        }
    }

    /// Reference Kruskal used as the oracle for Prim.
    pub(crate) fn kruskal_total(g: &DependencyGraph) -> f64 {
        let mut parent: Vec<usize> = (0..g.n_nodes()).collect();
        fn find(parent: &mut Vec<usize>, mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        let mut edges: Vec<&GraphEdge> = g.edges.iter().collect();
        edges.sort_by(|x, y| {
            x.distance
                .total_cmp(&y.distance)
                .then_with(|| x.a.cmp(&y.a))
                .then_with(|| x.b.cmp(&y.b))
        });
        let mut total = Vec::new();
        for e in edges {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                parent[ra] = rb;
                total.push(e.distance);
            }
        }
        // Sorted accumulation so both routes sum in the same order.
        total.sort_by(f64::total_cmp);
        total.iter().sum()
    }

    #[test]
    fn mi_matrix_distances() {
        let mut mi = Array2::zeros((2, 2));
        mi[[0, 1]] = 1.0;
        mi[[1, 0]] = 1.0;
        let mut mask = Array2::from_elem((2, 2), false);
        mask[[0, 1]] = true;
        mask[[1, 0]] = true;
        let m = MiMatrix {
            assets: vec!["A".into(), "B".into()],
            mi,
            pvalues: Array2::zeros((2, 2)),
            mask,
            config: crate::minet::MiConfig::default(),
        };
        let g = to_graph(&m);
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].distance - 0.999999999).abs() < 1e-12);
    }

    #[test]
    fn half_nat_distance() {
        let g = graph(2, &[]);
        assert!(g.edges.is_empty());
        let d = 1.0 / (0.5 + DISTANCE_EPS);
        assert!((d - 1.999999996).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_yields_no_edges() {
        let m = MiMatrix {
            assets: vec!["A".into(), "B".into(), "C".into()],
            mi: Array2::zeros((3, 3)),
            pvalues: Array2::from_elem((3, 3), 1.0),
            mask: Array2::from_elem((3, 3), false),
            config: crate::minet::MiConfig::default(),
        };
        assert!(to_graph(&m).edges.is_empty());
    }

    #[test]
    fn largest_component_picks_bigger_side() {
        // 0-1-2-3-4 chain and 5-6-7 triangle.
        let g = graph(
            8,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 3, 1.0),
                (3, 4, 1.0),
                (5, 6, 1.0),
                (6, 7, 1.0),
                (5, 7, 1.0),
            ],
        );
        let lcc = largest_component(&g);
        assert_eq!(lcc.n_nodes(), 5);
        assert_eq!(lcc.nodes[0], "A000");
    }

    #[test]
    fn component_tie_breaks_lexicographically() {
        let mut g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        g.nodes = vec!["ZZ".into(), "ZA".into(), "AA".into(), "AB".into()];
        let lcc = largest_component(&g);
        assert_eq!(lcc.nodes, vec!["AA".to_string(), "AB".to_string()]);
    }

    #[test]
    fn triangle_keeps_two_cheapest_edges() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]);
        let t = mst_prim(&g).unwrap();
        assert_eq!(t.edges.len(), 2);
        assert_eq!(t.total_distance(), 3.0);
        let pairs: Vec<(usize, usize)> = t.edges.iter().map(|e| (e.a, e.b)).collect();
        assert!(pairs.contains(&(0, 1)) && pairs.contains(&(1, 2)));
    }

    #[test]
    fn equal_weight_cycle_resolves_to_smallest_indices() {
        let g = graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]);
        let t = mst_prim(&g).unwrap();
        assert_eq!(t.total_distance(), 3.0);
        // Ties resolve toward the lowest endpoint pair, so (2,3) is the edge
        // left out, and the list comes back in canonical endpoint order.
        let pairs: Vec<(usize, usize)> = t.edges.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 3), (1, 2)]);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!(mst_prim(&g).is_err());
    }

    #[test]
    fn prim_matches_kruskal_on_seeded_graphs() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(5..=25);
            let mut edges = Vec::new();
            // Random spanning tree first so the graph is connected.
            for v in 1..n {
                let u = rng.gen_range(0..v);
                edges.push((u, v, rng.gen_range(0.1..5.0)));
            }
            for _ in 0..(n * 2) {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b && !edges.iter().any(|&(x, y, _)| (x, y) == (a.min(b), a.max(b))) {
                    edges.push((a.min(b), a.max(b), rng.gen_range(0.1..5.0)));
                }
            }
            let g = graph(n, &edges);
            let t = mst_prim(&g).unwrap();
            let mut prim_d: Vec<f64> = t.edges.iter().map(|e| e.distance).collect();
            prim_d.sort_by(f64::total_cmp);
            let prim_total: f64 = prim_d.iter().sum();
            assert_eq!(prim_total, kruskal_total(&g), "seed {seed}");
        }
    }
}
