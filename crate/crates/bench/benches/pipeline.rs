use criterion::{black_box, criterion_group, criterion_main, Criterion};

use crashnet::aftershock::{gr_fit, peak_trough_magnitudes};
use crashnet::community::modularity_significance;
use crashnet::hellinger::rolling_hellinger;
use crashnet::hht::{emd, hilbert_energy, SiftConfig, DEFAULT_MAX_IMFS};
use crashnet::minet::{mi_pvalue_matrix, mst_prim, DependencyGraph};
use crashnet::{HellingerConfig, MiConfig};

use crashnet_bench::{dense_graph, index_series, market_prices, market_returns};

fn bench_hellinger(c: &mut Criterion) {
    let panel = market_returns(50, 400);
    let cfg = HellingerConfig::default();
    c.bench_function("hellinger/50x400", |b| {
        b.iter(|| rolling_hellinger(black_box(&panel), &cfg).unwrap())
    });
}

fn bench_mi_matrix(c: &mut Criterion) {
    let panel = market_returns(20, 150);
    let cfg = MiConfig {
        n_bins: 16,
        n_perm: 100,
        alpha: 0.05,
        seed: 0,
    };
    c.bench_function("mi_pvalue_matrix/20x150_perm100", |b| {
        b.iter(|| mi_pvalue_matrix(black_box(&panel), &cfg).unwrap())
    });
}

fn bench_emd(c: &mut Criterion) {
    let signal = index_series(512);
    let cfg = SiftConfig::default();
    c.bench_function("emd_hilbert/512", |b| {
        b.iter(|| {
            let set = emd(black_box(&signal), DEFAULT_MAX_IMFS, &cfg).unwrap();
            hilbert_energy(&set).unwrap()
        })
    });
}

fn bench_mst(c: &mut Criterion) {
    let graph = dense_graph(150);
    c.bench_function("mst_prim/complete150", |b| {
        b.iter(|| mst_prim(black_box(&graph)).unwrap())
    });
}

fn bench_modularity(c: &mut Criterion) {
    let tree = mst_prim(&dense_graph(100)).unwrap();
    let graph = DependencyGraph {
        nodes: tree.nodes.clone(),
        edges: tree.edges.clone(),
    };
    c.bench_function("modularity_null/100nodes_200rand", |b| {
        b.iter(|| modularity_significance(black_box(&graph), 200, 5).unwrap())
    });
}

fn bench_gr(c: &mut Criterion) {
    let prices = market_prices(2, 2000);
    let path = prices.column(0).to_vec();
    c.bench_function("gr_fit/2000days", |b| {
        b.iter(|| {
            let mags = peak_trough_magnitudes(black_box(&path)).unwrap();
            gr_fit(&mags).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_hellinger,
    bench_mi_matrix,
    bench_emd,
    bench_mst,
    bench_modularity,
    bench_gr
);
criterion_main!(benches);
