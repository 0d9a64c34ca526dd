//! Crash detection and dependency-network analytics for return panels.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`panel`] loads close-price CSVs and forms log returns.
//! 2. [`hellinger`] scores daily return cross-sections against a rolling
//!    reference and segments the sample into pre-crash, crash, and
//!    post-crash windows.
//! 3. [`hht`] decomposes a benchmark series into intrinsic modes and tracks
//!    normalized instantaneous energy through the crash.
//! 4. [`capm`] removes the market effect per asset, leaving abnormal
//!    returns.
//! 5. [`minet`] builds the permutation-validated mutual-information network
//!    and its minimum spanning tree.
//! 6. [`topo`] computes tree topology metrics and the core/periphery
//!    indices; [`community`] tests modularity against degree-preserving
//!    nulls.
//! 7. [`aftershock`] fits the exceedance law of peak-trough swing
//!    magnitudes before and after the crash.
//!
//! [`synth`] generates panels with known structure so every stage above is
//! testable offline.

pub mod aftershock;
pub mod capm;
pub mod community;
pub mod error;
pub mod hellinger;
pub mod hht;
pub mod minet;
pub mod panel;
pub mod synth;
pub mod topo;

pub use error::{Error, Result};
pub use hellinger::{CrashSegmentation, HellingerConfig, HellingerSeries, Period};
pub use minet::{DependencyGraph, MiConfig, MiMatrix, SpanningTree};
pub use panel::{PeriodWindow, PricePanel, ReturnPanel};
pub use synth::{GroundTruth, SynthSpec};
pub use topo::{CorePeripheryIndices, MetricReport};
