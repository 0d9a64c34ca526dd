//! Analytic signal, instantaneous frequency, and Hilbert energy.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::hht::emd::ImfSet;

pub type Complex64 = Complex<f64>;

/// Frequency-axis resolution of the emitted spectrum grid.
pub const SPECTRUM_BINS: usize = 64;

/// One occupied cell of the time-frequency plane.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SpectrumCell {
    pub imf: usize,
    pub t: usize,
    pub freq_bin: usize,
    pub amplitude: f64,
}

/// Per-IMF instantaneous quantities plus pooled energy.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HilbertSpectrum {
    /// K_i(t): analytic-signal magnitude per IMF.
    pub amplitude: Vec<Vec<f64>>,
    /// Unwrapped phase per IMF, radians.
    pub phase: Vec<Vec<f64>>,
    /// Phase derivative per IMF, radians per sample.
    pub frequency: Vec<Vec<f64>>,
    /// ie(t) = sum over IMFs of K_i(t)^2.
    pub ie: Vec<f64>,
    /// ie scaled so its maximum is exactly 1.
    pub ie_n: Vec<f64>,
    /// Amplitude dropped into 64 uniform frequency bins over [0, pi];
    /// plotting data only, never an analysis input.
    pub grid: Vec<SpectrumCell>,
}

/// Analytic signal via the one-sided spectrum: forward FFT, zero the
/// negative frequencies (doubling the positive ones), inverse FFT. The real
/// part is forced to equal the input bit for bit.
pub fn analytic_signal(x: &[f64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "analytic signal needs at least 4 samples, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(
            "non-finite sample in analytic signal input".into(),
        ));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    // One-sided weights: keep DC (and Nyquist when n is even), double the
    // strictly positive frequencies, drop the negative ones.
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // weight 1
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for (z, &orig) in buf.iter_mut().zip(x) {
        *z = Complex::new(orig, z.im * scale);
    }
    Ok(buf)
}

fn wrapped_phase(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|c| c.im.atan2(c.re)).collect()
}

/// Remove 2-pi jumps so successive phases differ by at most pi.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            offset -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
        }
        out.push(p + offset);
    }
    out
}

fn phase_derivative(phase: &[f64]) -> Vec<f64> {
    let n = phase.len();
    (0..n)
        .map(|t| {
            if t == 0 {
                phase[1] - phase[0]
            } else if t == n - 1 {
                phase[n - 1] - phase[n - 2]
            } else {
                (phase[t + 1] - phase[t - 1]) / 2.0
            }
        })
        .collect()
}

/// Instantaneous frequency in radians per sample: unwrapped phase,
/// central differences inside, one-sided differences at the ends. Interior
/// zero-magnitude samples have no phase and are an error.
pub fn instantaneous_frequency(analytic: &[Complex64]) -> Result<Vec<f64>> {
    let n = analytic.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "instantaneous frequency needs at least 4 samples, got {n}"
        )));
    }
    for (i, z) in analytic.iter().enumerate().take(n - 1).skip(1) {
        if z.re == 0.0 && z.im == 0.0 {
            return Err(Error::UndefinedPhase { index: i });
        }
    }
    Ok(phase_derivative(&unwrap_phase(&wrapped_phase(analytic))))
}

/// ie scaled to peak at exactly 1.
pub fn normalize_energy(ie: &[f64]) -> Result<Vec<f64>> {
    let max = ie.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::Normalization(
            "instantaneous energy is identically zero".into(),
        ));
    }
    Ok(ie.iter().map(|&v| v / max).collect())
}

/// Hilbert spectral summary of a decomposition. Unlike the strict
/// [`instantaneous_frequency`] API, zero-magnitude samples here take phase 0
/// instead of failing, so an all-zero IMF surfaces as zero energy rather
/// than a phase error.
pub fn hilbert_energy(set: &ImfSet) -> Result<HilbertSpectrum> {
    if set.imfs.is_empty() {
        return Err(Error::Contract(
            "hilbert energy needs at least one IMF".into(),
        ));
    }
    let per_imf: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = set
        .imfs
        .par_iter()
        .map(|imf| {
            let z = analytic_signal(imf)?;
            let amplitude: Vec<f64> = z.iter().map(|c| c.norm()).collect();
            let phase = unwrap_phase(&wrapped_phase(&z));
            let frequency = phase_derivative(&phase);
            Ok((amplitude, phase, frequency))
        })
        .collect::<Result<_>>()?;
    let t_len = set.imfs[0].len();
    let mut ie = vec![0.0f64; t_len];
    for (amp, _, _) in &per_imf {
        for (e, a) in ie.iter_mut().zip(amp) {
            *e += a * a;
        }
    }
    let ie_n = normalize_energy(&ie)?;
    let bin_width = std::f64::consts::PI / SPECTRUM_BINS as f64;
    let mut grid = Vec::with_capacity(per_imf.len() * t_len);
    for (i, (amp, _, freq)) in per_imf.iter().enumerate() {
        for (t, (&a, &w)) in amp.iter().zip(freq).enumerate() {
            let bin = ((w / bin_width).floor().max(0.0) as usize).min(SPECTRUM_BINS - 1);
            grid.push(SpectrumCell {
                imf: i,
                t,
                freq_bin: bin,
                amplitude: a,
            });
        }
    }
    let (amplitude, phase, frequency) = per_imf.into_iter().fold(
        (Vec::new(), Vec::new(), Vec::new()),
        |(mut a, mut p, mut f), (ai, pi, fi)| {
            a.push(ai);
            p.push(pi);
            f.push(fi);
            (a, p, f)
        },
    );
    Ok(HilbertSpectrum {
        amplitude,
        phase,
        frequency,
        ie,
        ie_n,
        grid,
    })
}
