//! Gutenberg-Richter statistics of peak-trough price swings.
//!
//! A price path is reduced to alternating extrema; each adjacent
//! peak/trough pair yields a magnitude |log10 P_peak - log10 P_trough|.
//! Exceedance counts over magnitude follow an approximately log-linear law
//! whose slope b measures how fast large swings die out; comparing b before
//! and after a crash quantifies the aftershock-like regime change.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExtremumKind {
    Peak,
    Trough,
}

/// A turning point of the compressed price path, at its original index.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExtremumPoint {
    pub index: usize,
    pub price: f64,
    pub kind: ExtremumKind,
}

/// Log-linear exceedance fit over swing magnitudes.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GrFit {
    /// Intercept of log10 N(M) at M = 0.
    pub a: f64,
    /// Negated slope; positive when large swings are rarer than small ones.
    pub b: f64,
    pub r_squared: f64,
    /// Two-sided asymptotic KS p-value of the magnitudes against the
    /// exponential law the fitted slope implies (rate b * ln 10).
    pub ks_p: f64,
    pub n_events: usize,
    /// All magnitudes, sorted ascending.
    pub magnitudes: Vec<f64>,
    /// (magnitude, log10 exceedance count) at each distinct magnitude.
    pub exceedance_points: Vec<(f64, f64)>,
}

/// Slope change across the crash; negative means large swings got
/// relatively more frequent afterwards.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GrDelta {
    pub b_pre: f64,
    pub b_post: f64,
    pub delta_b: f64,
}

fn check_prices(prices: &[f64]) -> Result<()> {
    if prices.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "peak/trough extraction needs at least 3 prices, got {}",
            prices.len()
        )));
    }
    for (i, &p) in prices.iter().enumerate() {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::Validation(format!(
                "price at position {i} is {p}, expected a positive finite value"
            )));
        }
    }
    Ok(())
}

/// Alternating extrema of a price path. Plateaus collapse to their first
/// index, extrema are strict on the compressed path, and the final point
/// closes the last half-swing. A path with no interior turning point has no
/// extrema at all.
pub fn extrema(prices: &[f64]) -> Result<Vec<ExtremumPoint>> {
    check_prices(prices)?;
    let mut compressed: Vec<(usize, f64)> = Vec::with_capacity(prices.len());
    for (i, &p) in prices.iter().enumerate() {
        if compressed.last().map_or(true, |&(_, q)| q != p) {
            compressed.push((i, p));
        }
    }
    let mut points = Vec::new();
    for w in compressed.windows(3) {
        let [(_, a), (i, b), (_, c)] = [w[0], w[1], w[2]];
        if b > a && b > c {
            points.push(ExtremumPoint {
                index: i,
                price: b,
                kind: ExtremumKind::Peak,
            });
        } else if b < a && b < c {
            points.push(ExtremumPoint {
                index: i,
                price: b,
                kind: ExtremumKind::Trough,
            });
        }
    }
    if points.is_empty() {
        return Ok(points);
    }
    // The tail after the last turning point is strictly monotone, so the
    // final compressed price closes the swing with the opposite kind.
    let &(last_i, last_p) = compressed.last().expect("non-empty by length check");
    let kind = match points.last().expect("checked non-empty").kind {
        ExtremumKind::Peak => ExtremumKind::Trough,
        ExtremumKind::Trough => ExtremumKind::Peak,
    };
    debug_assert!(last_i > points.last().unwrap().index);
    points.push(ExtremumPoint {
        index: last_i,
        price: last_p,
        kind,
    });
    Ok(points)
}

/// Swing magnitudes |log10 P_peak - log10 P_trough| between adjacent
/// opposite-kind extrema. Empty when the path never turns.
pub fn peak_trough_magnitudes(prices: &[f64]) -> Result<Vec<f64>> {
    let points = extrema(prices)?;
    Ok(points
        .windows(2)
        .map(|w| {
            debug_assert_ne!(w[0].kind, w[1].kind);
            (w[1].price.log10() - w[0].price.log10()).abs()
        })
        .collect())
}

/// Asymptotic two-sided KS tail probability Q(t) = 2 sum (-1)^{j-1} exp(-2 j^2 t^2).
fn ks_asymptotic_p(t: f64) -> f64 {
    if t < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=2000u32 {
        let term = (-2.0 * (j as f64).powi(2) * t * t).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS statistic of `sorted` against the exponential CDF with the given rate.
fn ks_statistic_exponential(sorted: &[f64], rate: f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Least-squares fit of log10 exceedance counts on magnitude. Needs at
/// least 3 distinct magnitudes.
pub fn gr_fit(magnitudes: &[f64]) -> Result<GrFit> {
    for (i, &m) in magnitudes.iter().enumerate() {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::Validation(format!(
                "magnitude at position {i} is {m}, expected a non-negative finite value"
            )));
        }
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Exceedance count at each distinct magnitude: everything from its
    // first occurrence onward.
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &m) in sorted.iter().enumerate() {
        if i == 0 || sorted[i - 1] != m {
            points.push((m, ((n - i) as f64).log10()));
        }
    }
    if points.len() < 3 {
        return Err(Error::InsufficientEvents(format!(
            "need at least 3 distinct magnitudes, got {} distinct of {} total",
            points.len(),
            n
        )));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let a = my - slope * mx;
    let b = -slope;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (a + slope * p.0)).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = 1.0 - ss_res / ss_tot;
    let d = ks_statistic_exponential(&sorted, b * std::f64::consts::LN_10);
    let ks_p = ks_asymptotic_p((n as f64).sqrt() * d);
    Ok(GrFit {
        a,
        b,
        r_squared,
        ks_p,
        n_events: n,
        magnitudes: sorted,
        exceedance_points: points,
    })
}

/// Slope change between two period fits.
pub fn compare_periods(pre: &GrFit, post: &GrFit) -> GrDelta {
    GrDelta {
        b_pre: pre.b,
        b_post: post.b,
        delta_b: post.b - pre.b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn monotone_series_has_no_swings() {
        let prices: Vec<f64> = (1..=20).map(|i| 100.0 + i as f64).collect();
        assert!(peak_trough_magnitudes(&prices).unwrap().is_empty());
        let falling: Vec<f64> = (1..=20).map(|i| 120.0 - i as f64).collect();
        assert!(peak_trough_magnitudes(&falling).unwrap().is_empty());
    }

    #[test]
    fn single_bump_gives_one_magnitude() {
        let m = peak_trough_magnitudes(&[100.0, 110.0, 100.0]).unwrap();
        assert_eq!(m.len(), 1);
        assert_abs_diff_eq!(m[0], 1.1f64.log10(), epsilon = 1e-15);
        assert_abs_diff_eq!(m[0], 0.04139268, epsilon = 1e-7);
    }

    #[test]
    fn zigzag_of_ten_cycles_gives_nineteen_equal_magnitudes() {
        // 100 then ten full 120/100 swings: 21 points, 19 turning segments
        // after the opening ramp.
        let mut prices = vec![100.0];
        for _ in 0..10 {
            prices.push(120.0);
            prices.push(100.0);
        }
        let m = peak_trough_magnitudes(&prices).unwrap();
        assert_eq!(m.len(), 19);
        for &v in &m {
            assert_abs_diff_eq!(v, 1.2f64.log10(), epsilon = 1e-15);
            assert_abs_diff_eq!(v, 0.07918125, epsilon = 1e-7);
        }
    }

    #[test]
    fn plateaus_collapse_to_first_index() {
        let e = extrema(&[100.0, 100.0, 110.0, 110.0, 100.0]).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].index, 2);
        assert_eq!(e[0].kind, ExtremumKind::Peak);
        assert_eq!(e[1].index, 4);
        assert_eq!(e[1].kind, ExtremumKind::Trough);
    }

    #[test]
    fn extrema_alternate() {
        let prices = [100.0, 105.0, 95.0, 115.0, 90.0, 120.0, 118.0];
        let e = extrema(&prices).unwrap();
        assert!(e.len() >= 2);
        for w in e.windows(2) {
            assert_ne!(w[0].kind, w[1].kind);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(
            peak_trough_magnitudes(&[100.0, 101.0]),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            peak_trough_magnitudes(&[100.0, -1.0, 100.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn exact_log_linear_counts_recover_the_construction() {
        // Magnitudes 1..4 with counts 10^(4-i): log10 N(M) = 4 - M exactly.
        let mut mags = Vec::new();
        for (value, mult) in [(1.0, 900usize), (2.0, 90), (3.0, 9), (4.0, 1)] {
            mags.extend(std::iter::repeat(value).take(mult));
        }
        let fit = gr_fit(&mags).unwrap();
        assert_abs_diff_eq!(fit.a, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.b, 1.0, epsilon = 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert_eq!(fit.n_events, 1000);
        assert_eq!(fit.exceedance_points.len(), 4);
    }

    #[test]
    fn exponential_magnitudes_recover_the_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let exp = rand_distr::Exp::new(100.0).unwrap();
        let mags: Vec<f64> = (0..2000).map(|_| exp.sample(&mut rng)).collect();
        let fit = gr_fit(&mags).unwrap();
        let expected = 100.0 * std::f64::consts::LOG10_E;
        assert!(
            (fit.b - expected).abs() / expected < 0.05,
            "b = {}, expected around {expected}",
            fit.b
        );
        assert!(fit.r_squared > 0.95, "r2 = {}", fit.r_squared);
        assert!(fit.ks_p > 0.05, "ks_p = {}", fit.ks_p);
    }

    #[test]
    fn too_few_distinct_magnitudes_is_an_error() {
        assert!(matches!(
            gr_fit(&[0.5; 10]),
            Err(Error::InsufficientEvents(_))
        ));
        assert!(matches!(
            gr_fit(&[0.5, 0.5, 0.7, 0.7]),
            Err(Error::InsufficientEvents(_))
        ));
    }

    #[test]
    fn delta_b_matches_hand_computed_rows() {
        let fit = |b: f64| GrFit {
            a: 0.0,
            b,
            r_squared: 1.0,
            ks_p: 1.0,
            n_events: 10,
            magnitudes: vec![],
            exceedance_points: vec![],
        };
        let d = compare_periods(&fit(103.35), &fit(46.38));
        assert_abs_diff_eq!(d.delta_b, -56.97, epsilon = 1e-10);
        let d = compare_periods(&fit(59.98), &fit(33.13));
        assert_abs_diff_eq!(d.delta_b, -26.85, epsilon = 1e-10);
        let d = compare_periods(&fit(50.0), &fit(50.0));
        assert_abs_diff_eq!(d.delta_b, 0.0, epsilon = 0.0);
    }

    #[test]
    fn ks_p_known_value() {
        // Kolmogorov distribution: Q(1.0) = 0.26999967...
        assert_abs_diff_eq!(ks_asymptotic_p(1.0), 0.2699996, epsilon = 1e-6);
        assert_abs_diff_eq!(ks_asymptotic_p(0.5), 0.9639452436, epsilon = 1e-6);
        assert_eq!(ks_asymptotic_p(0.0), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn price_scale_leaves_magnitudes_unchanged(seed in 0u64..200, scale in 0.01f64..100.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut prices = vec![100.0f64];
            for _ in 0..60 {
                let step: f64 = rand::Rng::gen_range(&mut rng, -0.05..0.05);
                let last = *prices.last().unwrap();
                prices.push(last * (1.0 + step));
            }
            let base = peak_trough_magnitudes(&prices).unwrap();
            let scaled_prices: Vec<f64> = prices.iter().map(|p| p * scale).collect();
            let scaled = peak_trough_magnitudes(&scaled_prices).unwrap();
            prop_assert_eq!(base.len(), scaled.len());
            for (x, y) in base.iter().zip(&scaled) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn exceedance_curve_is_strictly_decreasing(seed in 0u64..200) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let exp = rand_distr::Exp::new(50.0).unwrap();
            let mags: Vec<f64> = (0..200).map(|_| exp.sample(&mut rng)).collect();
            let fit = gr_fit(&mags).unwrap();
            for w in fit.exceedance_points.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
                prop_assert!(w[0].1 > w[1].1);
            }
        }

        #[test]
        fn duplicate_magnitude_never_lowers_exceedance(seed in 0u64..100) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let exp = rand_distr::Exp::new(50.0).unwrap();
            let mags: Vec<f64> = (0..100).map(|_| exp.sample(&mut rng)).collect();
            let dup = mags[17];
            let mut grown = mags.clone();
            grown.push(dup);
            let before = gr_fit(&mags).unwrap();
            let after = gr_fit(&grown).unwrap();
            let count = |fit: &GrFit, m: f64| {
                fit.magnitudes.iter().filter(|&&x| x >= m).count()
            };
            for &(m, _) in &before.exceedance_points {
                let delta = count(&after, m) as i64 - count(&before, m) as i64;
                if m <= dup {
                    prop_assert_eq!(delta, 1);
                } else {
                    prop_assert_eq!(delta, 0);
                }
            }
        }
    }
}
