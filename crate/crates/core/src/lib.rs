//! Classification and reconstruction of compressively sensed signals when the decoder
//! also sees linear measurements of a correlated side signal.
//!
//! Signals `x1` and `x2` follow a joint Gaussian mixture over class pairs `(i, k)`.
//! The decoder observes `y1 = phi1 x1 + w1` and `y2 = phi2 x2 + w2` and either decides
//! the class of `x1`, decides both classes, or estimates `x1`. The crate provides:
//!
//! * [`model`]: the mixture, factor-model construction, TOML I/O, sampling and presets;
//! * [`geometry`]: covariance ranks, pairwise ranks and the projected-rank formula;
//! * [`sensing`]: Gaussian kernels and noisy observations;
//! * [`classify`]: MAP classifiers, Bhattacharyya bounds, diversity orders and verdicts;
//! * [`reconstruct`]: conditional-mean estimators, MMSE and reconstruction verdicts;
//! * [`experiments`]: Monte Carlo noise sweeps, slope fits and region maps.

pub mod classify;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod model;
mod projected;
pub mod reconstruct;
pub mod rng;
pub mod sensing;

pub use error::{Error, Result};
