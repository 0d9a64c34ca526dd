//! Histogram mutual information and its permutation test.
//!
//! Both series are binned on equidistant grids spanning their own observed
//! ranges; MI is the plug-in estimate on the joint histogram, in nats. The
//! permutation test shuffles only the x series, which on the binned
//! representation is a permutation of x's bin labels: the marginals are
//! invariant, so only the joint table is recounted per round.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::minet::MiConfig;

/// Bin labels for `x` on `n_bins` equidistant bins over [min, max]; the top
/// edge closes so the maximum lands in the last bin. `None` for a constant
/// series (single-point range).
pub(crate) fn bin_indices(x: &[f64], n_bins: usize) -> Option<Vec<u16>> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo < hi) {
        return None;
    }
    let width = (hi - lo) / n_bins as f64;
    Some(
        x.iter()
            .map(|&v| (((v - lo) / width) as usize).min(n_bins - 1) as u16)
            .collect(),
    )
}

/// ln(k) for k in 0..=n with ln(0) := 0, so zero-count terms drop out.
pub(crate) fn ln_table(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for (k, slot) in t.iter_mut().enumerate().skip(1) {
        *slot = (k as f64).ln();
    }
    t
}

/// Plug-in MI from bin labels:
/// MI = ln n + (1/n) [sum c_kl ln c_kl - sum r_k ln r_k - sum s_l ln s_l].
/// Clamped at zero; the estimator is non-negative in exact arithmetic.
pub(crate) fn mi_from_bins(
    bx: &[u16],
    by: &[u16],
    n_bins: usize,
    joint: &mut [u32],
    ln: &[f64],
) -> f64 {
    debug_assert_eq!(bx.len(), by.len());
    debug_assert_eq!(joint.len(), n_bins * n_bins);
    joint.fill(0);
    let mut row = vec![0u32; n_bins];
    let mut col = vec![0u32; n_bins];
    for (&a, &b) in bx.iter().zip(by) {
        joint[a as usize * n_bins + b as usize] += 1;
        row[a as usize] += 1;
        col[b as usize] += 1;
    }
    let n = bx.len() as f64;
    let mut s_joint = 0.0;
    for &c in joint.iter() {
        if c > 0 {
            s_joint += c as f64 * ln[c as usize];
        }
    }
    let mut s_row = 0.0;
    for &c in &row {
        if c > 0 {
            s_row += c as f64 * ln[c as usize];
        }
    }
    let mut s_col = 0.0;
    for &c in &col {
        if c > 0 {
            s_col += c as f64 * ln[c as usize];
        }
    }
    (n.ln() + (s_joint - s_row - s_col) / n).max(0.0)
}

fn check_pair(x: &[f64], y: &[f64], n_bins: usize) -> Result<()> {
    if n_bins < 2 {
        return Err(Error::Contract(format!("n_bins {n_bins} must be >= 2")));
    }
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < n_bins {
        return Err(Error::Contract(format!(
            "need at least n_bins = {n_bins} observations, found {}",
            x.len()
        )));
    }
    Ok(())
}

/// Histogram MI estimate in nats. A constant series carries no information,
/// so the estimate is 0 by convention.
pub fn mi_histogram(x: &[f64], y: &[f64], n_bins: usize) -> Result<f64> {
    check_pair(x, y, n_bins)?;
    let (bx, by) = match (bin_indices(x, n_bins), bin_indices(y, n_bins)) {
        (Some(bx), Some(by)) => (bx, by),
        _ => return Ok(0.0),
    };
    let mut joint = vec![0u32; n_bins * n_bins];
    let ln = ln_table(x.len());
    Ok(mi_from_bins(&bx, &by, n_bins, &mut joint, &ln))
}

/// In-place Fisher-Yates shuffle driven by `rng`.
fn shuffle<T, R: Rng>(v: &mut [T], rng: &mut R) {
    for k in (1..v.len()).rev() {
        let j = rng.gen_range(0..=k);
        v.swap(k, j);
    }
}

/// Observed MI plus its permutation p-value. `cfg.n_perm` shuffles of x are
/// scored against the observed statistic with the add-one rule
/// p = (#{I_perm >= I_obs} + 1) / (n_perm + 1). Fully deterministic given
/// `pair_seed`.
pub fn permutation_pvalue(
    x: &[f64],
    y: &[f64],
    cfg: &MiConfig,
    pair_seed: u64,
) -> Result<(f64, f64)> {
    check_pair(x, y, cfg.n_bins)?;
    if cfg.n_perm == 0 {
        return Err(Error::Contract("n_perm must be positive".into()));
    }
    let n_bins = cfg.n_bins;
    let ln = ln_table(x.len());
    let mut joint = vec![0u32; n_bins * n_bins];
    let (bx, by) = match (bin_indices(x, n_bins), bin_indices(y, n_bins)) {
        (Some(bx), Some(by)) => (bx, by),
        _ => {
            // Constant series: MI is 0 and every permutation ties it.
            return Ok((0.0, 1.0));
        }
    };
    let i_obs = mi_from_bins(&bx, &by, n_bins, &mut joint, &ln);
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    let mut work = bx;
    let mut ge = 0usize;
    for _ in 0..cfg.n_perm {
        shuffle(&mut work, &mut rng);
        let i_perm = mi_from_bins(&work, &by, n_bins, &mut joint, &ln);
        if i_perm >= i_obs {
            ge += 1;
        }
    }
    let p = (ge + 1) as f64 / (cfg.n_perm + 1) as f64;
    Ok((i_obs, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_series_has_zero_mi() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y = vec![3.5; 40];
        assert_eq!(mi_histogram(&x, &y, 16).unwrap(), 0.0);
    }

    #[test]
    fn identical_uniform_fill_reaches_ln_bins() {
        // 10 samples per bin, x == y: the joint is diagonal, MI = ln 16.
        let x: Vec<f64> = (0..160).map(|i| i as f64).collect();
        let mi = mi_histogram(&x, &x, 16).unwrap();
        assert_abs_diff_eq!(mi, 16f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(mi, 2.772589, epsilon = 1e-6);
    }

    #[test]
    fn independent_uniforms_have_small_mi() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
            let x: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
            let mi = mi_histogram(&x, &y, 16).unwrap();
            assert!(mi < 0.05, "seed {seed}: mi {mi}");
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        assert!(mi_histogram(&[1.0; 20], &[1.0; 21], 4).is_err());
    }

    #[test]
    fn short_series_rejected() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(mi_histogram(&x, &x, 16).is_err());
    }

    #[test]
    fn strong_dependence_reaches_minimum_pvalue() {
        let cfg = MiConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|&v| v * v).collect();
        let (mi, p) = permutation_pvalue(&x, &y, &cfg, 7).unwrap();
        assert!(mi > 0.5);
        assert_abs_diff_eq!(p, 1.0 / 101.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_y_ties_every_permutation() {
        let cfg = MiConfig::default();
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y = vec![1.0; 100];
        let (mi, p) = permutation_pvalue(&x, &y, &cfg, 1).unwrap();
        assert_eq!(mi, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn pvalue_is_deterministic_in_pair_seed() {
        let cfg = MiConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let a = permutation_pvalue(&x, &y, &cfg, 1234).unwrap();
        let b = permutation_pvalue(&x, &y, &cfg, 1234).unwrap();
        let c = permutation_pvalue(&x, &y, &cfg, 1235).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, c.0, "observed MI does not depend on the seed");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mi_is_symmetric_and_nonnegative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 64;
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.3 * x[rng.gen_range(0..n)]).collect();
            let a = mi_histogram(&x, &y, 8).unwrap();
            let b = mi_histogram(&y, &x, 8).unwrap();
            prop_assert!(a >= 0.0);
            // Swapping arguments transposes the joint histogram, so the cell
            // sum runs in a different order; equal up to rounding only.
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
        }

        #[test]
        fn pvalues_lie_on_the_add_one_grid(seed in 0u64..200) {
            let cfg = MiConfig { n_perm: 19, ..MiConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..80).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..80).map(|_| rng.gen::<f64>()).collect();
            let (_, p) = permutation_pvalue(&x, &y, &cfg, seed).unwrap();
            let k = (p * 20.0).round();
            prop_assert!((p * 20.0 - k).abs() < 1e-9, "p {p} not on k/20 grid");
            prop_assert!((1.0..=20.0).contains(&k));
        }
    }
}
