//! Direction-of-arrival estimation of coherent sources with a periodically
//! coded metasurface and a single receiving channel.
//!
//! The surface multiplies each element's output by a periodic ±1 sequence
//! in which exactly one element is "on" at a time. The coded sum reaches a
//! single receiver; its spectrum carries, at every harmonic of the coding
//! rate, a different linear mixture of the element outputs. Selecting the
//! harmonic bins of a windowed FFT gives a frequency snapshot, from which the
//! element outputs are recovered by least squares and handed to a
//! pattern-smoothing MUSIC estimator that copes with coherent sources.
//!
//! Modules follow the processing chain:
//!
//! - [`array_model`]: geometry, coding waveform, Fourier coefficients, steering.
//! - [`waveform`]: synthesis of the received baseband series.
//! - [`snapshot`]: FFT and harmonic-bin selection.
//! - [`estimator`]: channel recovery, smoothing, whitening and MUSIC.
//! - [`metrics`] and [`crb`]: scoring and the Cramér–Rao bound.
//! - [`config`] and [`harness`]: experiment files, sweeps and CSV output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array_model;
pub mod config;
pub mod crb;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod snapshot;
pub mod waveform;

pub use array_model::{Doa, HarmonicMatrix, SurfaceConfig};
pub use error::{Error, Result};
pub use estimator::{EstimatorParams, MusicResult, SearchGrid, SmoothingMode};
pub use snapshot::MultiSnapshot;
pub use waveform::{NoiseSpec, SamplingPlan, SourceScene, SynthesisMode, TimeSeries};
