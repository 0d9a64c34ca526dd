//! Deterministic input builders shared by the benchmarks. Everything is
//! derived from the synthetic generator so benchmark numbers are comparable
//! across machines and runs.

use crashnet::minet::{pair_seed, DependencyGraph, GraphEdge, DISTANCE_EPS};
use crashnet::synth::{generate, random_disjoint_pairs, CrashSpec};
use crashnet::{PricePanel, ReturnPanel, SynthSpec};

/// Return panel with a crash regime, sized like one market's daily history.
pub fn market_returns(n_assets: usize, n_days: usize) -> ReturnPanel {
    market_prices(n_assets, n_days).log_returns().unwrap()
}

/// Matching close-price panel for benchmarks that start from prices.
pub fn market_prices(n_assets: usize, n_days: usize) -> PricePanel {
    let mut spec = SynthSpec::new(n_assets, n_days, 99);
    spec.factor_vol = 0.002;
    spec.planted_pairs =
        random_disjoint_pairs(n_assets, n_assets / 4, 0.3, 0.8, 99).unwrap();
    spec.crash = Some(CrashSpec {
        start: n_days / 2,
        length: n_days / 10,
        vol_multiplier: 6.0,
        coupling_boost: 1.0,
        post_coupling_boost: 1.0,
        market_coupling: Vec::new(),
    });
    generate(&spec).unwrap().0
}

/// One benchmark-index return series, long enough for mode decomposition.
pub fn index_series(n_days: usize) -> Vec<f64> {
    let spec = SynthSpec::new(2, n_days, 7);
    let (_, index, _) = generate(&spec).unwrap();
    index.log_returns().unwrap().column(0).to_vec()
}

/// Complete graph with synthetic dependency weights, the worst case for
/// spanning-tree construction.
pub fn dense_graph(n: usize) -> DependencyGraph {
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            // Cheap deterministic weight in (0, 1] from the pair index.
            let mi = (pair_seed(11, i, j) % 1_000_000) as f64 / 1_000_000.0 + 1e-6;
            edges.push(GraphEdge {
                a: i,
                b: j,
                mi,
                distance: 1.0 / (mi + DISTANCE_EPS),
            });
        }
    }
    DependencyGraph {
        nodes: (0..n).map(|i| format!("N{i:03}")).collect(),
        edges,
    }
}
