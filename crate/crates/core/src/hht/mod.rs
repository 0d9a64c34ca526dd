//! Hilbert-Huang analysis: empirical mode decomposition of a benchmark
//! series followed by analytic-signal energy tracking.

mod emd;
mod hilbert;
mod spline;

pub use emd::{
    emd, envelope_mean_ratio, imf_counts_ok, local_extrema, zero_crossings, ImfSet, SiftConfig,
    DEFAULT_MAX_IMFS,
};
pub use hilbert::{
    analytic_signal, hilbert_energy, instantaneous_frequency, normalize_energy, unwrap_phase,
    Complex64, HilbertSpectrum, SpectrumCell, SPECTRUM_BINS,
};
pub use spline::CubicSpline;
