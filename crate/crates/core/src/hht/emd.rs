//! Empirical mode decomposition by envelope sifting.

use crate::error::{Error, Result};
use crate::hht::spline::CubicSpline;

/// Sifting controls. The standard-deviation criterion compares successive
/// sift candidates; the envelope-mean tolerance is the acceptance bound used
/// by [`envelope_mean_ratio`] checks.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SiftConfig {
    pub sd_tolerance: f64,
    pub max_sifts: usize,
    pub envelope_mean_tol: f64,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            sd_tolerance: 0.2,
            max_sifts: 50,
            envelope_mean_tol: 0.1,
        }
    }
}

pub const DEFAULT_MAX_IMFS: usize = 10;

/// Decomposition result: the input equals the sum of all IMFs plus the
/// residue, sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfSet {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
}

impl ImfSet {
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut sum = self.residue.clone();
        for imf in &self.imfs {
            for (s, v) in sum.iter_mut().zip(imf) {
                *s += v;
            }
        }
        sum
    }
}

/// Interior strict extrema; plateaus count once at their first index.
pub fn local_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut compressed: Vec<(usize, f64)> = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        if compressed.last().map_or(true, |&(_, p)| p != v) {
            compressed.push((i, v));
        }
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for w in compressed.windows(3) {
        let [(_, a), (i, b), (_, c)] = [w[0], w[1], w[2]];
        if b > a && b > c {
            maxima.push(i);
        } else if b < a && b < c {
            minima.push(i);
        }
    }
    (maxima, minima)
}

/// Sign alternations over the series, ignoring exact zeros.
pub fn zero_crossings(x: &[f64]) -> usize {
    let mut count = 0;
    let mut prev = 0i8;
    for &v in x {
        let s = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        };
        if s != 0 {
            if prev != 0 && s != prev {
                count += 1;
            }
            prev = s;
        }
    }
    count
}

/// First IMF criterion: extrema and zero-crossing counts differ by at most
/// one.
pub fn imf_counts_ok(x: &[f64]) -> bool {
    let (maxima, minima) = local_extrema(x);
    let extrema = maxima.len() + minima.len();
    let zc = zero_crossings(x);
    extrema.abs_diff(zc) <= 1
}

/// Envelope through the given extrema. Boundaries are anchored by extending
/// the straight line through the two nearest extrema out to the endpoint (a
/// single extremum extends as a constant); if the boundary sample itself
/// pokes past that anchor it becomes the anchor, so the envelope never clips
/// the signal at the ends.
fn envelope(positions: &[usize], values: &[f64], x: &[f64], upper: bool) -> Result<Vec<f64>> {
    debug_assert!(!positions.is_empty());
    let n = x.len();
    let last = (n - 1) as f64;
    let k = positions.len();
    let mut left = if k >= 2 {
        let (p0, p1) = (positions[0] as f64, positions[1] as f64);
        values[0] - p0 * (values[1] - values[0]) / (p1 - p0)
    } else {
        values[0]
    };
    let mut right = if k >= 2 {
        let (p0, p1) = (positions[k - 2] as f64, positions[k - 1] as f64);
        values[k - 1] + (last - p1) * (values[k - 1] - values[k - 2]) / (p1 - p0)
    } else {
        values[0]
    };
    if upper {
        left = left.max(x[0]);
        right = right.max(x[n - 1]);
    } else {
        left = left.min(x[0]);
        right = right.min(x[n - 1]);
    }
    let mut xs: Vec<f64> = Vec::with_capacity(k + 2);
    let mut ys: Vec<f64> = Vec::with_capacity(k + 2);
    xs.push(0.0);
    ys.push(left);
    for (p, v) in positions.iter().zip(values) {
        xs.push(*p as f64);
        ys.push(*v);
    }
    xs.push(last);
    ys.push(right);
    let spline = CubicSpline::natural(&xs, &ys)?;
    Ok((0..n).map(|t| spline.evaluate(t as f64)).collect())
}

/// Mean envelope (upper plus lower over two); needs at least one maximum and
/// one minimum.
fn mean_envelope(x: &[f64]) -> Result<Option<Vec<f64>>> {
    let (maxima, minima) = local_extrema(x);
    if maxima.is_empty() || minima.is_empty() {
        return Ok(None);
    }
    let upper_vals: Vec<f64> = maxima.iter().map(|&i| x[i]).collect();
    let lower_vals: Vec<f64> = minima.iter().map(|&i| x[i]).collect();
    let ue = envelope(&maxima, &upper_vals, x, true)?;
    let le = envelope(&minima, &lower_vals, x, false)?;
    Ok(Some(
        ue.iter().zip(&le).map(|(u, l)| (u + l) / 2.0).collect(),
    ))
}

/// Largest absolute mean-envelope value relative to the series amplitude;
/// the second IMF criterion bounds this near zero.
pub fn envelope_mean_ratio(x: &[f64]) -> Result<f64> {
    let amp = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if amp == 0.0 {
        return Ok(0.0);
    }
    match mean_envelope(x)? {
        Some(m) => Ok(m.iter().fold(0.0f64, |a, &v| a.max(v.abs())) / amp),
        None => Err(Error::Contract(
            "envelope mean is undefined without both maxima and minima".into(),
        )),
    }
}

/// Empirical mode decomposition. Signals without at least two maxima and two
/// minima are their own residue. Extraction stops when the residue keeps
/// fewer than three interior extrema or `max_imfs` is reached.
pub fn emd(signal: &[f64], max_imfs: usize, cfg: &SiftConfig) -> Result<ImfSet> {
    if signal.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "emd needs at least 8 samples, got {}",
            signal.len()
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite sample in emd input".into()));
    }
    if cfg.sd_tolerance <= 0.0 || cfg.max_sifts == 0 {
        return Err(Error::Contract(
            "sift config needs positive sd_tolerance and max_sifts".into(),
        ));
    }
    let mut residue = signal.to_vec();
    let mut imfs: Vec<Vec<f64>> = Vec::new();
    loop {
        let (maxima, minima) = local_extrema(&residue);
        let enough = if imfs.is_empty() {
            maxima.len() >= 2 && minima.len() >= 2
        } else {
            maxima.len() + minima.len() >= 3
        };
        if !enough || imfs.len() >= max_imfs {
            break;
        }
        let mut h = residue.clone();
        let mut accepted = true;
        for _ in 0..cfg.max_sifts {
            let m = match mean_envelope(&h)? {
                Some(m) => m,
                // The candidate lost one-sided extrema mid-sift; on the
                // first pass that means the residue cannot be decomposed.
                None => {
                    accepted = h != residue;
                    break;
                }
            };
            let denom: f64 = h.iter().map(|v| v * v).sum();
            let sd = if denom == 0.0 {
                0.0
            } else {
                m.iter().map(|v| v * v).sum::<f64>() / denom
            };
            for (hv, mv) in h.iter_mut().zip(&m) {
                *hv -= mv;
            }
            if sd < cfg.sd_tolerance && imf_counts_ok(&h) {
                break;
            }
        }
        if !accepted {
            break;
        }
        for (r, v) in residue.iter_mut().zip(&h) {
            *r -= v;
        }
        imfs.push(h);
    }
    Ok(ImfSet { imfs, residue })
}
