//! Statistically validated mutual-information network.
//!
//! All asset pairs are scored with histogram MI; a per-pair permutation test
//! decides which dependencies survive. The conditional matrix keeps MI only
//! where the test rejects independence at level alpha, everything else is
//! stored as zero. Pair scoring runs parallel over rayon but is seeded per
//! pair, so results do not depend on the thread count.

mod graph;
mod mi;

pub use graph::{
    largest_component, mst_prim, to_graph, DependencyGraph, GraphEdge, SpanningTree,
    DISTANCE_EPS,
};
pub use mi::{mi_histogram, permutation_pvalue};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MiConfig {
    /// Histogram bins per axis.
    pub n_bins: usize,
    /// Permutation rounds per pair.
    pub n_perm: usize,
    /// Rejection level for the permutation p-value (p <= alpha keeps a pair).
    pub alpha: f64,
    /// Run seed; per-pair streams are derived from it.
    pub seed: u64,
}

impl Default for MiConfig {
    fn default() -> Self {
        MiConfig {
            n_bins: 16,
            n_perm: 100,
            alpha: 0.05,
            seed: 0,
        }
    }
}

/// Conditional MI matrix: `mi` keeps the estimate only where `mask` is true
/// (zero otherwise), `pvalues` holds every pair's permutation p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMatrix {
    pub assets: Vec<String>,
    pub mi: Array2<f64>,
    pub pvalues: Array2<f64>,
    pub mask: Array2<bool>,
    pub config: MiConfig,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-pair stream seed; independent of thread scheduling.
pub fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(i as u64 + 1)) ^ splitmix((j as u64) << 1 | 1))
}

fn validate(panel: &ReturnPanel, cfg: &MiConfig) -> Result<()> {
    if panel.n_assets() < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 assets, found {}",
            panel.n_assets()
        )));
    }
    if panel.n_days() < cfg.n_bins {
        return Err(Error::Contract(format!(
            "need at least n_bins = {} rows, found {}",
            cfg.n_bins,
            panel.n_days()
        )));
    }
    if !(0.0 < cfg.alpha && cfg.alpha < 1.0) {
        return Err(Error::Contract(format!(
            "alpha {} must lie in (0, 1)",
            cfg.alpha
        )));
    }
    Ok(())
}

/// Raw MI and p-value for every pair, before any alpha thresholding. Both
/// matrices are symmetric; the diagonal is mi = 0, p = 0 by convention.
pub fn mi_pvalue_matrix(
    panel: &ReturnPanel,
    cfg: &MiConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    validate(panel, cfg)?;
    let n = panel.n_assets();
    let columns: Vec<Vec<f64>> = (0..n).map(|i| panel.column(i).to_vec()).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let scored: Vec<(usize, usize, f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (mi, p) = permutation_pvalue(
                &columns[i],
                &columns[j],
                cfg,
                pair_seed(cfg.seed, i, j),
            )?;
            Ok((i, j, mi, p))
        })
        .collect::<Result<_>>()?;
    let mut mi = Array2::zeros((n, n));
    let mut pv = Array2::zeros((n, n));
    for (i, j, m, p) in scored {
        mi[[i, j]] = m;
        mi[[j, i]] = m;
        pv[[i, j]] = p;
        pv[[j, i]] = p;
    }
    Ok((mi, pv))
}

/// Applies the alpha threshold to raw matrices, zeroing non-significant MI.
pub fn threshold_mi(
    assets: Vec<String>,
    raw_mi: &Array2<f64>,
    pvalues: &Array2<f64>,
    cfg: &MiConfig,
) -> MiMatrix {
    let n = assets.len();
    let mut mi = Array2::zeros((n, n));
    let mut mask = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in 0..n {
            if i != j && pvalues[[i, j]] <= cfg.alpha {
                mask[[i, j]] = true;
                mi[[i, j]] = raw_mi[[i, j]];
            }
        }
    }
    MiMatrix {
        assets,
        mi,
        pvalues: pvalues.clone(),
        mask,
        config: cfg.clone(),
    }
}

/// Full pipeline step: permutation-tested MI matrix with non-significant
/// entries stored as zero.
pub fn conditional_mi_matrix(panel: &ReturnPanel, cfg: &MiConfig) -> Result<MiMatrix> {
    let (raw_mi, pvalues) = mi_pvalue_matrix(panel, cfg)?;
    Ok(threshold_mi(
        panel.assets().to_vec(),
        &raw_mi,
        &pvalues,
        cfg,
    ))
}
